// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force references used to check the solvers and identities.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "snrq/calibration.hpp"
#include "snrq/matrix.hpp"
#include "snrq/rng.hpp"

namespace snrq {

inline constexpr std::uint64_t kEnumerationBudget = 10'000'000;

struct OracleResult {
    std::vector<std::size_t> best_index;  ///< level index per coordinate
    std::vector<double> best_values;
    double best_cost = 0.0;
    std::uint64_t n_evaluated = 0;
};

/// Global minimizer of ‖R q − y‖² over the product of the level lists.
/// Enumerates with the last coordinate fastest; ties keep the
/// lexicographically smallest index vector. Throws BudgetExceeded when the
/// candidate count exceeds `budget`.
OracleResult exhaustive_row(const Matrix& r_upper, std::span<const double> y,
                            const std::vector<std::vector<double>>& levels,
                            std::uint64_t budget = kEnumerationBudget);

/// ‖R q − y‖² by direct multiplication.
double ils_cost(const Matrix& r_upper, std::span<const double> y, std::span<const double> q);

struct AlphaScan {
    double alpha_best = 0.0;
    std::vector<double> alphas;
    std::vector<double> curve;
};

/// objective_direct on an even grid of `grid_points` values in [0, 1].
AlphaScan alpha_grid_scan(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch,
                          std::size_t grid_points = 101);

struct DitherSetup {
    double w = 0.3;
    double x = 1.0;
    double tau_s = 1.0;
    double tau_z = 0.2;
    std::size_t n_sequences = 10;
    std::size_t n_trials = 1'000'000;

    void validate() const;
};

struct DitherOutcome {
    double var_fixed_hat = 0.0;
    double var_fixed_se = 0.0;
    double var_smoothed_hat = 0.0;
    double var_smoothed_se = 0.0;
    double var_fixed_closed = 0.0;
    double var_bound = 0.0;
};

/// Standard normal CDF via erfc.
double normal_cdf(double t) noexcept;

/// Binary-grid calibration variance under a fixed rounding rule versus the
/// Gaussian-dithered smoothed loss. Trial t draws from rng.substream(t).
DitherOutcome dither_experiment(const DitherSetup& setup, const SeededRng& rng, std::size_t threads = 0);

}  // namespace snrq
