// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "snrq/errors.hpp"

namespace snrq {

namespace {

constexpr double kMinScale = 1e-12;
constexpr int kClipSteps = 100;

struct GroupFit {
    double scale;
    std::int32_t zero_point;
};

GroupFit fit_range(double lo, double hi, const GridSpec& spec) {
    if (spec.symmetric) {
        const double amax = std::max(std::abs(lo), std::abs(hi));
        const double denom = static_cast<double>((std::int32_t{1} << (spec.bits - 1)) - 1);
        return {std::max(amax / denom, kMinScale), 0};
    }
    const double denom = static_cast<double>(spec.level_count() - 1);
    const double scale = std::max((hi - lo) / denom, kMinScale);
    const double zp = std::clamp(std::round(-lo / scale), 0.0, denom);
    return {scale, static_cast<std::int32_t>(zp)};
}

double dequant_raw(std::int32_t code, const GroupFit& g, bool symmetric) {
    return symmetric ? g.scale * code : g.scale * (code - g.zero_point);
}

std::int32_t nearest_code_raw(double x, const GroupFit& g, const GridSpec& spec) {
    const std::int32_t lo = spec.code_min();
    const std::int32_t hi = spec.code_max();
    const double offset = spec.symmetric ? 0.0 : g.zero_point;
    double guess = std::floor(x / g.scale + offset + 0.5);
    if (!std::isfinite(guess)) guess = x > 0 ? hi : lo;
    guess = std::clamp(guess, static_cast<double>(lo), static_cast<double>(hi));
    auto best = static_cast<std::int32_t>(guess);
    double best_d = std::abs(dequant_raw(best, g, spec.symmetric) - x);
    // The floor guess can be off by one near a midpoint; settle it exactly.
    for (std::int32_t c : {best - 1, best + 1}) {
        if (c < lo || c > hi) continue;
        const double d = std::abs(dequant_raw(c, g, spec.symmetric) - x);
        if (d < best_d || (d == best_d && c > best)) {
            best = c;
            best_d = d;
        }
    }
    return best;
}

double group_error(const std::vector<double>& vals, const GroupFit& g, const GridSpec& spec) {
    double err = 0.0;
    for (double v : vals) {
        const double d = v - dequant_raw(nearest_code_raw(v, g, spec), g, spec.symmetric);
        err += d * d;
    }
    return err;
}

}  // namespace

void GridSpec::validate(std::size_t cols) const {
    if (bits < 2 || bits > 8) throw InvalidSpec("bits must be in [2, 8], got " + std::to_string(bits));
    if (cols == 0) throw InvalidSpec("layer has no columns");
    if (group_size > 0 && cols % group_size != 0) {
        throw InvalidSpec("group_size " + std::to_string(group_size) + " does not divide " +
                          std::to_string(cols) + " columns");
    }
}

GridParams::GridParams(GridSpec spec, std::size_t cols, Matrix scales, IntMatrix zero_points)
    : spec_(spec), cols_(cols), scales_(std::move(scales)), zero_points_(std::move(zero_points)) {
    spec_.validate(cols_);
    const std::size_t g = spec_.group_size == 0 ? 1 : cols_ / spec_.group_size;
    if (scales_.cols() != g || zero_points_.rows() != scales_.rows() || zero_points_.cols() != g) {
        throw ShapeMismatch("GridParams: scale/zero-point shape does not match group layout");
    }
    for (double s : scales_.data()) {
        if (!(s > 0.0) || !std::isfinite(s)) throw InvalidSpec("GridParams: scales must be positive");
    }
    for (std::int32_t z : zero_points_.data()) {
        if (spec_.symmetric ? z != 0 : (z < spec_.code_min() || z > spec_.code_max())) {
            throw InvalidSpec("GridParams: zero-point out of range");
        }
    }
}

double GridParams::dequant(std::int32_t code, std::size_t row, std::size_t col) const noexcept {
    const GroupFit g{scale(row, col), zero_point(row, col)};
    return dequant_raw(code, g, spec_.symmetric);
}

LevelPick GridParams::nearest_level(double x, std::size_t row, std::size_t col) const noexcept {
    const GroupFit g{scale(row, col), zero_point(row, col)};
    const std::int32_t code = nearest_code_raw(x, g, spec_);
    return {code, dequant_raw(code, g, spec_.symmetric)};
}

std::vector<double> GridParams::levels(std::size_t row, std::size_t col) const {
    const GroupFit g{scale(row, col), zero_point(row, col)};
    std::vector<double> out;
    out.reserve(spec_.level_count());
    for (std::int32_t c = spec_.code_min(); c <= spec_.code_max(); ++c) {
        out.push_back(dequant_raw(c, g, spec_.symmetric));
    }
    return out;
}

GridParams fit_grid(const Matrix& w, const GridSpec& spec) {
    spec.validate(w.cols());
    if (!w.all_finite()) throw NonFinite("fit_grid: non-finite weight");
    const std::size_t gsize = spec.group_size == 0 ? w.cols() : spec.group_size;
    const std::size_t groups = w.cols() / gsize;

    Matrix scales(w.rows(), groups);
    IntMatrix zeros(w.rows(), groups);
    std::vector<double> vals(gsize);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t k = 0; k < gsize; ++k) vals[k] = w(r, g * gsize + k);
            const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
            const double lo = *lo_it;
            const double hi = *hi_it;

            GroupFit fit{kMinScale, 0};
            if (lo != hi) {
                fit = fit_range(lo, hi, spec);
                if (spec.mse_clip) {
                    double best_err = std::numeric_limits<double>::infinity();
                    for (int k = 0; k < kClipSteps; ++k) {
                        const double ratio = 0.5 + 0.5 * k / (kClipSteps - 1);
                        const GroupFit cand = fit_range(ratio * lo, ratio * hi, spec);
                        const double err = group_error(vals, cand, spec);
                        if (err < best_err) {
                            best_err = err;
                            fit = cand;
                        }
                    }
                }
            }
            scales(r, g) = fit.scale;
            zeros(r, g) = fit.zero_point;
        }
    }
    return GridParams(spec, w.cols(), std::move(scales), std::move(zeros));
}

std::size_t nearest_index(const std::vector<double>& ascending, double x) noexcept {
    // First level >= x; the answer is it or its left neighbour.
    const auto it = std::lower_bound(ascending.begin(), ascending.end(), x);
    if (it == ascending.begin()) return 0;
    if (it == ascending.end()) return ascending.size() - 1;
    const auto hi = static_cast<std::size_t>(it - ascending.begin());
    const std::size_t lo = hi - 1;
    return std::abs(ascending[lo] - x) < std::abs(ascending[hi] - x) ? lo : hi;
}

QuantizedMatrix quantize_nearest(const Matrix& w, const GridParams& params) {
    if (w.rows() != params.rows() || w.cols() != params.cols()) {
        throw ShapeMismatch("quantize_nearest: weight shape does not match grid");
    }
    QuantizedMatrix out{IntMatrix(w.rows(), w.cols()), Matrix(w.rows(), w.cols())};
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t c = 0; c < w.cols(); ++c) {
            const LevelPick p = params.nearest_level(w(r, c), r, c);
            out.codes(r, c) = p.code;
            out.dequant(r, c) = p.value;
        }
    }
    return out;
}

Matrix dequantize(const IntMatrix& codes, const GridParams& params) {
    if (codes.rows() != params.rows() || codes.cols() != params.cols()) {
        throw ShapeMismatch("dequantize: code shape does not match grid");
    }
    Matrix out(codes.rows(), codes.cols());
    for (std::size_t r = 0; r < codes.rows(); ++r)
        for (std::size_t c = 0; c < codes.cols(); ++c) out(r, c) = params.dequant(codes(r, c), r, c);
    return out;
}

}  // namespace snrq
