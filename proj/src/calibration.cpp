// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snrq/errors.hpp"
#include "snrq/linalg.hpp"

namespace snrq {

namespace {

void require_weights(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch) {
    batch.validate();
    if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols()) {
        throw ShapeMismatch("w and w_hat shapes differ");
    }
    if (w.cols() != batch.features()) {
        throw ShapeMismatch("weights have " + std::to_string(w.cols()) + " columns but activations have " +
                            std::to_string(batch.features()) + " features");
    }
}

}  // namespace

void CalibBatch::validate() const {
    if (xf.rows() != xq.rows() || xf.cols() != xq.cols()) {
        throw ShapeMismatch("teacher and student activations differ in shape");
    }
    if (xq.rows() == 0 || xq.cols() == 0) throw ShapeMismatch("empty calibration batch");
    if (!xf.all_finite() || !xq.all_finite()) throw NonFinite("calibration activations contain NaN/Inf");
}

AlphaMode parse_alpha_mode(const std::string& s) {
    if (s == "fixed") return AlphaMode::Fixed;
    if (s == "closed_form") return AlphaMode::ClosedForm;
    if (s == "sample" || s == "sampled") return AlphaMode::Sampled;
    throw InvalidSpec("unknown alpha_mode '" + s + "' (expected fixed|closed_form|sample)");
}

const char* to_string(AlphaMode mode) {
    switch (mode) {
        case AlphaMode::Fixed: return "fixed";
        case AlphaMode::ClosedForm: return "closed_form";
        case AlphaMode::Sampled: return "sample";
    }
    return "fixed";
}

void AlphaStrategy::validate() const {
    if (!(alpha_value >= 0.0 && alpha_value <= 1.0)) throw InvalidSpec("alpha_value must lie in [0, 1]");
    if (!(beta_lambda > 0.0)) throw InvalidSpec("beta_lambda must be positive");
}

Matrix interpolate_activations(const CalibBatch& batch, double alpha) {
    batch.validate();
    Matrix xa(batch.xq.rows(), batch.xq.cols());
    auto f = batch.xf.data();
    auto q = batch.xq.data();
    auto out = xa.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * f[i] + (1.0 - alpha) * q[i];
    return xa;
}

CalibStats accumulate_stats(const CalibBatch& batch, const AlphaStrategy& strategy, double damping,
                            SeededRng* rng, AccumulateOptions options) {
    batch.validate();
    strategy.validate();
    if (!(damping >= 0.0)) throw InvalidArgument("damping must be non-negative");

    const std::size_t n = batch.features();
    const std::size_t samples = batch.samples();

    CalibStats stats;
    stats.n_samples = samples;
    stats.damping = damping;

    Matrix xa;
    if (strategy.mode == AlphaMode::Sampled) {
        if (rng == nullptr) throw InvalidArgument("sampled alpha mode requires an rng");
        stats.alpha_trace.resize(samples);
        for (std::size_t j = 0; j < samples; ++j) {
            const double b = rng->beta(strategy.beta_lambda, strategy.beta_lambda);
            stats.alpha_trace[j] = std::min(b, 1.0 - b);
        }
        xa = Matrix(n, samples);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < samples; ++j) {
                const double a = stats.alpha_trace[j];
                xa(i, j) = a * batch.xf(i, j) + (1.0 - a) * batch.xq(i, j);
            }
        }
    } else {
        stats.alpha_trace = {strategy.alpha_value};
        xa = interpolate_activations(batch, strategy.alpha_value);
    }

    stats.h = matmul_nt(batch.xq, batch.xq);
    stats.c_alpha = matmul_nt(xa, batch.xq);
    if (options.with_h_tilde) stats.h_tilde = matmul_nt(xa, xa);

    if (damping > 0.0) {
        double mean_diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean_diag += stats.h(i, i);
        mean_diag /= static_cast<double>(n);
        stats.damping_absolute = damping * mean_diag;
        for (std::size_t i = 0; i < n; ++i) stats.h(i, i) += stats.damping_absolute;
    }
    return stats;
}

Matrix shifted_target(const Matrix& w, const CalibStats& stats) {
    if (w.cols() != stats.h.rows()) throw ShapeMismatch("shifted_target: weight/statistics mismatch");
    return solve_spd(stats.h, matmul(w, stats.c_alpha));
}

double objective_direct(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch, double alpha) {
    require_weights(w, w_hat, batch);
    Matrix r = matmul(w, interpolate_activations(batch, alpha));
    r -= matmul(w_hat, batch.xq);
    return frobenius_norm_sq(r);
}

double symmetric_loss(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch) {
    require_weights(w, w_hat, batch);
    return frobenius_norm_sq(matmul(w - w_hat, batch.xq));
}

double asymmetric_loss(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch) {
    require_weights(w, w_hat, batch);
    return frobenius_norm_sq(matmul(w, batch.xf) - matmul(w_hat, batch.xq));
}

DecompositionCheck decomposition_check(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch,
                                       double alpha) {
    const double lhs = objective_direct(w, w_hat, batch, alpha);
    const double l_asym = asymmetric_loss(w, w_hat, batch);
    const double l_sym = symmetric_loss(w, w_hat, batch);
    const double c = alpha * (1.0 - alpha) * frobenius_norm_sq(matmul(w, batch.delta()));
    return {lhs, alpha * l_asym + (1.0 - alpha) * l_sym - c, c};
}

AlphaEstimate closed_form_alpha(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch,
                                double default_alpha) {
    require_weights(w, w_hat, batch);
    const Matrix u = matmul(w, batch.delta());
    const double uu = frobenius_norm_sq(u);
    if (uu < 1e-24) {
        return {default_alpha, std::numeric_limits<double>::quiet_NaN(), true};
    }
    const Matrix v = matmul(w - w_hat, batch.xq);
    const double raw = -frobenius_dot(v, u) / uu;
    return {std::clamp(raw, 0.0, 1.0), raw, false};
}

double regularization_weight(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("regularization_weight: alpha must be in [0, 1)");
    return alpha / (1.0 - alpha);
}

double AlphaSchedule::record(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch) {
    last_ = closed_form_alpha(w, w_hat, batch, initial_);
    return last_->alpha;
}

}  // namespace snrq
