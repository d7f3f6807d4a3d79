// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "snrq/matrix.hpp"

namespace snrq {

/// Counter-based deterministic generator keyed by (seed, stream).
///
/// The output sequence is a pure function of (seed, stream, draw index), so
/// results do not depend on platform, standard library or thread layout. The
/// distributions below are implemented here rather than taken from <random>
/// because the standard leaves their algorithms unspecified.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Independent child generator; substream(k) is stable regardless of how
    /// many draws the parent has made.
    SeededRng substream(std::uint64_t k) const;

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform on (0, 1].
    double uniform_open0() noexcept;
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
    /// Marsaglia-Tsang; shape > 0.
    double gamma(double shape) noexcept;
    double beta(double a, double b) noexcept;

    Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

}  // namespace snrq
