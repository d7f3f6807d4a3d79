// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/linalg.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "snrq/errors.hpp"

namespace snrq {

LowerTriangular LowerTriangular::from_matrix(Matrix m) {
    if (!m.is_square() || m.rows() == 0) {
        throw ShapeMismatch("LowerTriangular: expected non-empty square matrix");
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (!(m(i, i) > 0.0)) {
            throw InvalidArgument("LowerTriangular: non-positive diagonal at " + std::to_string(i));
        }
        for (std::size_t j = i + 1; j < m.cols(); ++j) {
            if (m(i, j) != 0.0) {
                throw InvalidArgument("LowerTriangular: non-zero entry above the diagonal");
            }
        }
    }
    return LowerTriangular(std::move(m));
}

Matrix LowerTriangular::reconstruct() const { return matmul_nt(m_, m_); }

void LowerTriangular::solve_lower_inplace(std::span<double> b) const {
    const std::size_t n = dim();
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        auto row = m_.row_span(i);
        for (std::size_t k = 0; k < i; ++k) s -= row[k] * b[k];
        b[i] = s / row[i];
    }
}

void LowerTriangular::solve_upper_inplace(std::span<double> b) const {
    const std::size_t n = dim();
    for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= m_(k, ii) * b[k];
        b[ii] = s / m_(ii, ii);
    }
}

LowerTriangular cholesky(const Matrix& h) {
    if (!h.is_square() || h.rows() == 0) {
        throw ShapeMismatch("cholesky: expected non-empty square matrix");
    }
    if (!h.all_finite()) throw NonFinite("cholesky: non-finite entry");

    const std::size_t n = h.rows();
    const double scale = max_abs(h);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(h(i, j) - h(j, i)) > 1e-9 * scale) {
                std::ostringstream os;
                os << "cholesky: input not symmetric at (" << i << ", " << j << ")";
                throw InvalidArgument(os.str());
            }
        }
    }

    Matrix a = symmetrized(h);
    // Right-looking: after finishing column k, update the trailing lower triangle.
    for (std::size_t k = 0; k < n; ++k) {
        const double pivot = a(k, k);
        if (!(pivot > 0.0)) {
            std::ostringstream os;
            os << "cholesky: pivot " << pivot << " at index " << k << " (increase damping)";
            throw NotPositiveDefinite(os.str());
        }
        const double d = std::sqrt(pivot);
        a(k, k) = d;
        for (std::size_t i = k + 1; i < n; ++i) a(i, k) /= d;
        for (std::size_t j = k + 1; j < n; ++j) {
            const double ljk = a(j, k);
            if (ljk == 0.0) continue;
            for (std::size_t i = j; i < n; ++i) a(i, j) -= a(i, k) * ljk;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
    return LowerTriangular::from_matrix(std::move(a));
}

Matrix solve_spd(const LowerTriangular& l, const Matrix& b) {
    if (b.cols() != l.dim()) {
        throw ShapeMismatch("solve_spd: rhs has " + std::to_string(b.cols()) + " columns, expected " +
                            std::to_string(l.dim()));
    }
    // Y H = B  <=>  H Yᵀ = Bᵀ, one row of B at a time.
    Matrix y = b;
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto row = y.row_span(r);
        l.solve_lower_inplace(row);
        l.solve_upper_inplace(row);
    }
    return y;
}

Matrix solve_spd(const Matrix& h, const Matrix& b) { return solve_spd(cholesky(h), b); }

std::vector<double> solve_spd_vec(const LowerTriangular& l, std::span<const double> b) {
    if (b.size() != l.dim()) throw ShapeMismatch("solve_spd_vec: length mismatch");
    std::vector<double> x(b.begin(), b.end());
    l.solve_lower_inplace(x);
    l.solve_upper_inplace(x);
    return x;
}

Matrix inverse_spd(const Matrix& h) {
    const auto l = cholesky(h);
    return symmetrized(solve_spd(l, Matrix::identity(h.rows())));
}

}  // namespace snrq
