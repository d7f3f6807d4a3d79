// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layer-wise quantization of a toy sequential network. Layer l sees teacher
// activations from the full-precision prefix and student activations from
// the already quantized prefix; both come from the same calibration inputs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snrq/calibration.hpp"
#include "snrq/grid.hpp"
#include "snrq/matrix.hpp"
#include "snrq/rounding.hpp"

namespace snrq {

inline constexpr int kReportSchemaVersion = 1;

/// Library version string.
const char* version() noexcept;

enum class Nonlinearity { None, Relu };

Nonlinearity parse_nonlinearity(const std::string& s);
const char* to_string(Nonlinearity nl);

struct NetworkSpec {
    std::size_t depth = 4;
    std::size_t width = 64;
    std::size_t input_dim = 64;
    Nonlinearity nonlinearity = Nonlinearity::Relu;

    void validate() const;
};

struct ToyNetwork {
    /// Layer l maps cols() → rows(); consecutive layers chain.
    std::vector<Matrix> layers;
    Nonlinearity nonlinearity = Nonlinearity::Relu;

    std::size_t depth() const noexcept { return layers.size(); }
    std::size_t input_dim() const { return layers.front().cols(); }
    void validate() const;
};

/// Weights i.i.d. N(0, 1) / √fan_in, deterministic in `seed`.
ToyNetwork synth_network(const NetworkSpec& spec, std::uint64_t seed);

void save_network(const ToyNetwork& net, const std::filesystem::path& dir);
ToyNetwork load_network(const std::filesystem::path& dir);

/// Output of `weights` applied in sequence to `inputs` (columns are samples),
/// with the nonlinearity between layers but not after the last one.
Matrix forward(std::span<const Matrix> weights, const Matrix& inputs, Nonlinearity nl);

/// Inputs of layer p = quantized_prefix.size(): the teacher through the
/// full-precision prefix, the student through the quantized prefix.
CalibBatch forward_collect(const ToyNetwork& net, const Matrix& inputs, std::span<const Matrix> quantized_prefix);

struct CalibrationSpec {
    std::size_t n_sequences = 256;
    std::size_t heldout_sequences = 256;
    double input_scale = 1.0;

    void validate() const;
};

struct RunConfig {
    GridSpec grid;
    AlphaStrategy alpha;
    double damping = 0.01;
    SolverConfig solver;
    NetworkSpec network;
    CalibrationSpec calibration;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Parses a JSON config. Absent keys keep their defaults; unknown keys are
/// rejected with InvalidSpec.
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);

struct LayerReport {
    std::size_t index = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double alpha_used = 0.0;  ///< the single α, or the mean of the sampled trace
    std::vector<double> alpha_trace;
    double alpha_star = 0.0;  ///< closed-form optimum of this layer's result
    bool alpha_star_degenerate = false;
    double proxy_loss = 0.0;
    double weight_mse = 0.0;
    double activation_mae = 0.0;  ///< mean |X_f − X_q| of the layer input
    RoundResult result;
    Matrix dequant;
};

struct QuantReport {
    RunConfig config;
    std::vector<LayerReport> layers;
    double total_proxy_loss = 0.0;
    double calibration_output_mse = 0.0;
    double heldout_output_mse = 0.0;
    double total_ms = 0.0;
};

/// Calibration and held-out inputs drawn from separate streams of `seed`.
Matrix calibration_inputs(const RunConfig& cfg, std::size_t input_dim);
Matrix heldout_inputs(const RunConfig& cfg, std::size_t input_dim);

/// Runs every layer in order; numerical errors carry the layer index.
QuantReport quantize_network(const ToyNetwork& net, const RunConfig& cfg);

/// JSON report. Codes and dequantized weights are referenced by file name
/// when `artifact_names` is set. Timing lives under "timing" keys only.
std::string report_to_json(const QuantReport& report, bool with_timing = true,
                           const std::vector<std::string>& artifact_names = {});

/// Re-serializes a JSON document with every "timing" member removed.
std::string strip_timing_fields(const std::string& json_text);

/// Writes report.json plus per-layer SNRQMAT1 code (i32) and dequant (f64)
/// files; returns the report path.
std::filesystem::path write_report(const QuantReport& report, const std::filesystem::path& out_dir);

enum class SweepAxis { Alpha, BetaLambda, BeamWidth, CdPasses };

SweepAxis parse_sweep_axis(const std::string& s);
const char* to_string(SweepAxis axis);

struct SweepRow {
    double value = 0.0;
    double proxy_loss = 0.0;
    double calibration_output_mse = 0.0;
    double heldout_output_mse = 0.0;
    double wall_ms = 0.0;
    /// Proxy-loss decrease per second relative to the previous row (beam
    /// width and CD axes only).
    std::optional<double> marginal_per_second;
};

std::vector<SweepRow> sweep(const ToyNetwork& net, const RunConfig& base, SweepAxis axis,
                            const std::vector<double>& values);
std::string sweep_to_json(SweepAxis axis, const std::vector<SweepRow>& rows, bool with_timing = true);

/// E[min(β, 1 − β)] for β ~ Beta(λ, λ), by quadrature.
double folded_beta_mean(double lambda);

struct ModeSpread {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> losses;
};

struct VarianceSweep {
    double fixed_alpha = 0.0;
    ModeSpread fixed;
    ModeSpread sampled;
    bool sampled_std_le_fixed = false;
    std::vector<std::string> warnings;
};

/// Repeats the whole chain `n_repeats` times per mode (fixed at the folded
/// Beta mean versus sampled), redrawing calibration data per repeat unless
/// `same_seed` is set.
VarianceSweep sampling_variance_sweep(const ToyNetwork& net, const RunConfig& base, std::size_t n_repeats,
                                      bool same_seed = false);
std::string variance_sweep_to_json(const VarianceSweep& v);

}  // namespace snrq
