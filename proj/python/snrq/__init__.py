# Copyright (c) 2026, The snrq-lab Authors
# SPDX-License-Identifier: Apache-2.0
"""Post-training quantization solver lab."""

from ._snrq import (
    GridParams,
    SnrqError,
    cholesky,
    closed_form_alpha,
    decomposition_check,
    dither_experiment,
    exhaustive_row,
    fit_grid,
    objective,
    quantize_layer,
    quantize_network,
    shifted_target,
    solve_row,
    solve_spd,
    version,
)

__version__ = version()

__all__ = [
    "GridParams",
    "SnrqError",
    "cholesky",
    "closed_form_alpha",
    "decomposition_check",
    "dither_experiment",
    "exhaustive_row",
    "fit_grid",
    "objective",
    "quantize_layer",
    "quantize_network",
    "shifted_target",
    "solve_row",
    "solve_spd",
    "version",
]
