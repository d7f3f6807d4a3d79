// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "snrq/matrix.hpp"

namespace snrq {

struct GridSpec {
    int bits = 3;
    bool symmetric = true;
    /// 0 = one group per row (per-channel); otherwise columns per group.
    std::size_t group_size = 0;
    /// Per-group MSE-optimal clipping over 100 ratios in [0.5, 1].
    bool mse_clip = false;

    /// Number of representable levels, 2^bits.
    std::size_t level_count() const noexcept { return std::size_t{1} << bits; }
    std::int32_t code_min() const noexcept { return symmetric ? -(std::int32_t{1} << (bits - 1)) : 0; }
    std::int32_t code_max() const noexcept {
        return symmetric ? (std::int32_t{1} << (bits - 1)) - 1 : (std::int32_t{1} << bits) - 1;
    }

    /// Throws InvalidSpec unless bits ∈ [2, 8] and group_size divides cols.
    void validate(std::size_t cols) const;
};

struct LevelPick {
    std::int32_t code;
    double value;
};

/// Fitted scales and zero-points for an m × n layer.
///
/// Group lookups always use the ORIGINAL column index; solvers that permute
/// columns translate through their permutation before asking for levels.
class GridParams {
public:
    GridParams(GridSpec spec, std::size_t cols, Matrix scales, IntMatrix zero_points);

    const GridSpec& spec() const noexcept { return spec_; }
    std::size_t rows() const noexcept { return scales_.rows(); }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t groups() const noexcept { return scales_.cols(); }
    const Matrix& scales() const noexcept { return scales_; }
    const IntMatrix& zero_points() const noexcept { return zero_points_; }

    std::size_t group_of(std::size_t col) const noexcept {
        return spec_.group_size == 0 ? 0 : col / spec_.group_size;
    }
    double scale(std::size_t row, std::size_t col) const noexcept { return scales_(row, group_of(col)); }
    std::int32_t zero_point(std::size_t row, std::size_t col) const noexcept {
        return zero_points_(row, group_of(col));
    }

    double dequant(std::int32_t code, std::size_t row, std::size_t col) const noexcept;

    /// Code whose dequantized value is closest to x; ties go to the larger
    /// code, out-of-range x clamps to the grid edge.
    LevelPick nearest_level(double x, std::size_t row, std::size_t col) const noexcept;

    /// All 2^bits dequantized values in ascending order. Index i corresponds
    /// to code spec().code_min() + i.
    std::vector<double> levels(std::size_t row, std::size_t col) const;

private:
    GridSpec spec_;
    std::size_t cols_;
    Matrix scales_;
    IntMatrix zero_points_;
};

GridParams fit_grid(const Matrix& w, const GridSpec& spec);

/// Index of the entry of an ascending list closest to x (ties to the larger).
std::size_t nearest_index(const std::vector<double>& ascending, double x) noexcept;

struct QuantizedMatrix {
    IntMatrix codes;
    Matrix dequant;
};

/// Entry-wise nearest_level, the plain round-to-nearest map.
QuantizedMatrix quantize_nearest(const Matrix& w, const GridParams& params);
Matrix dequantize(const IntMatrix& codes, const GridParams& params);

}  // namespace snrq
