// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "snrq/matrix.hpp"

namespace snrq {

/// Lower-triangular factor with a strictly positive diagonal.
///
/// Only produced by cholesky() or from_matrix(), both of which check the
/// invariants, so holders may index it without revalidating.
class LowerTriangular {
public:
    static LowerTriangular from_matrix(Matrix m);

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t r, std::size_t c) const noexcept { return m_(r, c); }
    const Matrix& matrix() const noexcept { return m_; }

    /// L Lᵀ
    Matrix reconstruct() const;
    /// Lᵀ, the upper-triangular R of the row-wise least-squares form.
    Matrix upper() const { return m_.transposed(); }

    /// Solves L x = b in place.
    void solve_lower_inplace(std::span<double> b) const;
    /// Solves Lᵀ x = b in place.
    void solve_upper_inplace(std::span<double> b) const;

private:
    explicit LowerTriangular(Matrix m) : m_(std::move(m)) {}
    Matrix m_;
};

/// Right-looking unblocked Cholesky factorization of a symmetric positive
/// definite matrix. The input is symmetrized first; asymmetry beyond 1e-9
/// (relative to max |h|) is rejected with InvalidArgument.
///
/// Throws NotPositiveDefinite when a pivot is not strictly positive.
LowerTriangular cholesky(const Matrix& h);

/// Right division Y = B H⁻¹ via two triangular solves per row of B.
Matrix solve_spd(const Matrix& h, const Matrix& b);
Matrix solve_spd(const LowerTriangular& l, const Matrix& b);

/// Solves H x = b for a single right-hand side.
std::vector<double> solve_spd_vec(const LowerTriangular& l, std::span<const double> b);

/// H⁻¹ of an SPD matrix.
Matrix inverse_spd(const Matrix& h);

}  // namespace snrq
