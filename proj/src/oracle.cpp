// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/oracle.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "snrq/errors.hpp"
#include "snrq/parallel.hpp"

namespace snrq {

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
    double var_se = 0.0;
};

/// Sample variance and its standard error from the exact finite-sample
/// formula Var(s²) = (μ4 − σ⁴) / n + 2σ⁴ / (n (n − 1)). The first term
/// vanishes for symmetric two-point samples such as the fixed-rule loss.
Moments moments(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    Moments out;
    for (double x : v) out.mean += x;
    out.mean /= n;
    double m2 = 0.0;
    double m4 = 0.0;
    for (double x : v) {
        const double d = x - out.mean;
        const double d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    out.var = v.size() > 1 ? m2 * n / (n - 1.0) : 0.0;
    if (v.size() > 1) {
        const double s2 = out.var;
        out.var_se = std::sqrt(std::max(0.0, m4 - m2 * m2) / n + 2.0 * s2 * s2 / (n * (n - 1.0)));
    }
    return out;
}

}  // namespace

double ils_cost(const Matrix& r_upper, std::span<const double> y, std::span<const double> q) {
    const std::size_t n = r_upper.rows();
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = -y[i];
        for (std::size_t j = i; j < n; ++j) s += r_upper(i, j) * q[j];
        cost += s * s;
    }
    return cost;
}

OracleResult exhaustive_row(const Matrix& r_upper, std::span<const double> y,
                            const std::vector<std::vector<double>>& levels, std::uint64_t budget) {
    const std::size_t n = r_upper.rows();
    if (!r_upper.is_square() || y.size() != n || levels.size() != n) {
        throw ShapeMismatch("exhaustive_row: R, y and level lists disagree in size");
    }
    std::uint64_t total = 1;
    for (const auto& l : levels) {
        if (l.empty()) throw InvalidArgument("exhaustive_row: empty level list");
        if (total > budget / l.size()) {
            throw BudgetExceeded("exhaustive_row: candidate space exceeds budget " + std::to_string(budget));
        }
        total *= l.size();
    }

    OracleResult out;
    out.best_cost = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(n, 0);
    std::vector<double> q(n);
    for (std::size_t j = 0; j < n; ++j) q[j] = levels[j][0];
    while (true) {
        const double cost = ils_cost(r_upper, y, q);
        ++out.n_evaluated;
        if (cost < out.best_cost) {
            out.best_cost = cost;
            out.best_index = idx;
            out.best_values = q;
        }
        // Odometer step, last coordinate fastest.
        std::size_t j = n;
        while (j > 0) {
            --j;
            if (++idx[j] < levels[j].size()) {
                q[j] = levels[j][idx[j]];
                break;
            }
            idx[j] = 0;
            q[j] = levels[j][0];
            if (j == 0) return out;
        }
        if (n == 0) return out;
    }
}

AlphaScan alpha_grid_scan(const Matrix& w, const Matrix& w_hat, const CalibBatch& batch,
                          std::size_t grid_points) {
    if (grid_points < 3) throw InvalidArgument("alpha_grid_scan: need at least 3 grid points");
    AlphaScan out;
    out.alphas.resize(grid_points);
    out.curve.resize(grid_points);
    std::size_t best = 0;
    for (std::size_t i = 0; i < grid_points; ++i) {
        const double a = static_cast<double>(i) / static_cast<double>(grid_points - 1);
        out.alphas[i] = a;
        out.curve[i] = objective_direct(w, w_hat, batch, a);
        if (out.curve[i] < out.curve[best]) best = i;
    }
    out.alpha_best = out.alphas[best];
    return out;
}

void DitherSetup::validate() const {
    if (!(tau_s > 0.0) || !(tau_z > 0.0)) throw InvalidArgument("dither: tau_s and tau_z must be positive");
    if (n_sequences < 1 || n_trials < 1) throw InvalidArgument("dither: N and trials must be >= 1");
    if (!std::isfinite(w) || !std::isfinite(x)) throw NonFinite("dither: w and x must be finite");
}

double normal_cdf(double t) noexcept { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

DitherOutcome dither_experiment(const DitherSetup& setup, const SeededRng& rng, std::size_t threads) {
    setup.validate();
    const double ax = std::abs(setup.x);
    const double up = std::abs(1.0 - setup.w);
    const double down = std::abs(setup.w);
    const double gap = up - down;
    const double u_sd = setup.tau_s / std::sqrt(static_cast<double>(setup.n_sequences));

    std::vector<double> fixed(setup.n_trials);
    std::vector<double> smoothed(setup.n_trials);
    parallel_chunks(setup.n_trials, resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            SeededRng trial = rng.substream(t);
            const double u = u_sd * trial.normal();
            // Rounding rule Q(m) = 1{m >= 1/2} applied to m = 1/2 + U.
            fixed[t] = ax * (0.5 + u >= 0.5 ? up : down);
            smoothed[t] = ax * (down + gap * normal_cdf(u / setup.tau_z));
        }
    });

    const Moments mf = moments(fixed);
    const Moments ms = moments(smoothed);
    DitherOutcome out;
    out.var_fixed_hat = mf.var;
    out.var_fixed_se = mf.var_se;
    out.var_smoothed_hat = ms.var;
    out.var_smoothed_se = ms.var_se;
    out.var_fixed_closed = setup.x * setup.x / 4.0 * gap * gap;
    out.var_bound = setup.x * setup.x * gap * gap / (2.0 * std::numbers::pi * setup.tau_z * setup.tau_z) *
                    (setup.tau_s * setup.tau_s / static_cast<double>(setup.n_sequences));
    return out;
}

}  // namespace snrq
