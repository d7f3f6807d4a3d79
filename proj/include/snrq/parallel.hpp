// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace snrq {

/// Worker count: `requested` if non-zero, else SNRQ_THREADS if set and
/// non-zero, else the hardware concurrency (at least 1).
std::size_t resolve_threads(std::size_t requested);

/// Splits [0, count) into contiguous chunks, one per worker, and calls
/// body(begin, end) for each. The first exception thrown by any worker is
/// rethrown after all workers have joined.
void parallel_chunks(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace snrq
