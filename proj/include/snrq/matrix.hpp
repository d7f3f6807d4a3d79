// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace snrq {

/// Dense row-major matrix of doubles.
///
/// Every layer quantity (weights, activations, second moments, shifted
/// targets, dequantized codes) lives in one of these. Zero-sized matrices are
/// allowed as intermediate values; anything read from disk has positive
/// dimensions.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix column(std::span<const double> values);
    static Matrix row(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row_span(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    std::vector<double> col_copy(std::size_t c) const;
    std::vector<double> diagonal() const;

    bool all_finite() const noexcept;

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// A · B
Matrix matmul(const Matrix& a, const Matrix& b);
/// A · Bᵀ (the natural shape for X Xᵀ second moments).
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_dot(const Matrix& a, const Matrix& b);
double frobenius_norm_sq(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);

/// (A + Aᵀ) / 2
Matrix symmetrized(const Matrix& a);

/// Columns reordered so that result column j is input column perm[j].
Matrix permute_columns(const Matrix& a, std::span<const std::size_t> perm);
/// Inverse of permute_columns: result column perm[j] is input column j.
Matrix unpermute_columns(const Matrix& a, std::span<const std::size_t> perm);
/// Pᵀ A P for a symmetric matrix: result(i, j) = a(perm[i], perm[j]).
Matrix permute_symmetric(const Matrix& a, std::span<const std::size_t> perm);
/// Rows reordered so that result row i is input row perm[i].
Matrix permute_rows(const Matrix& a, std::span<const std::size_t> perm);

/// Sub-block [r0, r0 + nr) × [c0, c0 + nc).
Matrix block(const Matrix& a, std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc);

/// Integer matrix used for quantization codes and zero-points.
class IntMatrix {
public:
    IntMatrix() = default;
    IntMatrix(std::size_t rows, std::size_t cols, std::int32_t fill = 0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    std::int32_t& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    std::int32_t operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<const std::int32_t> data() const noexcept { return data_; }
    std::span<std::int32_t> data() noexcept { return data_; }

    friend bool operator==(const IntMatrix&, const IntMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::int32_t> data_;
};

}  // namespace snrq
