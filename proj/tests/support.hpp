// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random instance generators shared by the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "snrq/calibration.hpp"
#include "snrq/linalg.hpp"
#include "snrq/matrix.hpp"
#include "snrq/rng.hpp"

namespace snrq::testing {

/// A Aᵀ + ridge·I with A of shape n × (n + extra).
inline Matrix random_spd(SeededRng& rng, std::size_t n, double ridge = 1.0, std::size_t extra = 4) {
    const Matrix a = rng.normal_matrix(n, n + extra);
    Matrix h = matmul_nt(a, a);
    for (std::size_t i = 0; i < n; ++i) h(i, i) += ridge;
    return h;
}

/// Student activations plus a teacher offset of relative size `mismatch`.
inline CalibBatch random_batch(SeededRng& rng, std::size_t n, std::size_t samples, double mismatch = 0.3) {
    CalibBatch b;
    b.xq = rng.normal_matrix(n, samples);
    b.xf = b.xq + rng.normal_matrix(n, samples, mismatch);
    return b;
}

/// Upper-triangular R with diagonal in [0.5, 1.5] and off-diagonals N(0, 0.5).
inline Matrix random_upper(SeededRng& rng, std::size_t n) {
    Matrix r(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        r(i, i) = 0.5 + rng.uniform();
        for (std::size_t j = i + 1; j < n; ++j) r(i, j) = 0.5 * rng.normal();
    }
    return r;
}

inline std::vector<double> random_vector(SeededRng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

/// 2-bit style level lists {0, 1, 2, 3} · step + offset per coordinate.
inline std::vector<std::vector<double>> uniform_levels(std::size_t n, std::size_t count, double step = 1.0,
                                                       double offset = 0.0) {
    std::vector<std::vector<double>> out(n);
    for (auto& l : out) {
        for (std::size_t i = 0; i < count; ++i) l.push_back(offset + step * static_cast<double>(i));
    }
    return out;
}

/// Activations where ΔX rows 1.. are orthogonal to every row of X_q, so the
/// part of the mismatch not carried by column 0 is invisible to X_q.
inline CalibBatch orthogonal_tail_batch(SeededRng& rng, std::size_t n, std::size_t samples) {
    CalibBatch b;
    b.xq = rng.normal_matrix(n, samples);
    Matrix dx = rng.normal_matrix(n, samples, 0.5);
    const Matrix gram = matmul_nt(b.xq, b.xq);
    const Matrix coef = solve_spd(gram, matmul_nt(dx, b.xq));
    const Matrix projected = dx - matmul(coef, b.xq);
    for (std::size_t i = 1; i < n; ++i)
        for (std::size_t t = 0; t < samples; ++t) dx(i, t) = projected(i, t);
    b.xf = b.xq + dx;
    return b;
}

inline double relative_gap(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace snrq::testing
