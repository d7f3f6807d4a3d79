// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Second-order calibration statistics for the α-interpolated objective
//
//     L(Ŵ; α) = ‖W X_α − Ŵ X_q‖²_F,   X_α = α X_f + (1 − α) X_q,
//
// and the shifted target M_α = W C_α H⁻¹ around which rounding happens.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "snrq/matrix.hpp"
#include "snrq/rng.hpp"

namespace snrq {

/// Teacher (xf) and student (xq) activations for one layer; column j of
/// each belongs to the same calibration sequence.
struct CalibBatch {
    Matrix xf;
    Matrix xq;

    std::size_t features() const noexcept { return xq.rows(); }
    std::size_t samples() const noexcept { return xq.cols(); }
    Matrix delta() const { return xf - xq; }
    void validate() const;
};

enum class AlphaMode { Fixed, ClosedForm, Sampled };

AlphaMode parse_alpha_mode(const std::string& s);
const char* to_string(AlphaMode mode);

struct AlphaStrategy {
    AlphaMode mode = AlphaMode::Fixed;
    /// Fixed α, or the current scheduled α in closed-form mode.
    double alpha_value = 0.5;
    /// Beta(λ, λ) parameter for sampled mode.
    double beta_lambda = 5.0;

    void validate() const;
};

struct CalibStats {
    Matrix h;        ///< X_q X_qᵀ + damping · mean(diag) · I
    Matrix c_alpha;  ///< X_α X_qᵀ
    std::optional<Matrix> h_tilde;  ///< X_α X_αᵀ, on request only
    double damping = 0.0;           ///< relative damping factor that was applied
    double damping_absolute = 0.0;  ///< damping · mean(diag(X_q X_qᵀ))
    std::size_t n_samples = 0;
    /// One entry per calibration column in sampled mode, else the single α.
    std::vector<double> alpha_trace;
};

struct AccumulateOptions {
    bool with_h_tilde = false;
};

/// Builds H and C_α. Sampled mode draws α_j = min(β_j, 1 − β_j) with
/// β_j ~ Beta(λ, λ) per column, in column order, from `rng`.
CalibStats accumulate_stats(const CalibBatch& batch, const AlphaStrategy& strategy, double damping,
                            SeededRng* rng = nullptr, AccumulateOptions options = {});

/// X_α for a single global α.
Matrix interpolate_activations(const CalibBatch& batch, double alpha);

/// M_α = W C_α H⁻¹.
Matrix shifted_target(const Matrix& w, const CalibStats& stats);

/// ‖W X_α − Ŵ X_q‖²_F evaluated from raw activations.
double objective_direct(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch, double alpha);

/// ‖(W − Ŵ) X_q‖²_F
double symmetric_loss(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch);
/// ‖W X_f − Ŵ X_q‖²_F
double asymmetric_loss(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch);

struct DecompositionCheck {
    double lhs;         ///< objective_direct
    double rhs;         ///< α L_asym + (1 − α) L_sym − const_term
    double const_term;  ///< α (1 − α) ‖W ΔX‖²_F
};

DecompositionCheck decomposition_check(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch,
                                       double alpha);

struct AlphaEstimate {
    double alpha;
    /// −⟨V, U⟩ / ‖U‖² before projection onto [0, 1]; NaN when degenerate.
    double unconstrained;
    /// ‖U‖² below 1e-24: every α is optimal and `alpha` is the default.
    bool degenerate;
};

/// Minimizer of α ↦ L(Ŵ; α) over [0, 1] with U = W ΔX, V = (W − Ŵ) X_q.
AlphaEstimate closed_form_alpha(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch,
                                double default_alpha = 0.5);

/// Regularization weight γ(α) = α / (1 − α) on the asymmetric term.
double regularization_weight(double alpha);

/// Layer-to-layer closed-form α schedule: the α used for a layer is the
/// closed-form optimum of the previous layer's quantized result.
class AlphaSchedule {
public:
    explicit AlphaSchedule(double initial_alpha = 0.5) : initial_(initial_alpha) {}

    double next_alpha() const noexcept { return last_ ? last_->alpha : initial_; }
    const std::optional<AlphaEstimate>& last() const noexcept { return last_; }

    /// Record a finished layer; returns the α the next layer will use.
    double record(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch);

private:
    double initial_;
    std::optional<AlphaEstimate> last_;
};

}  // namespace snrq
