// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>

namespace snrq {

/// Command-line entry point. Returns 0 on success, 1 on usage errors or
/// unreadable inputs, 2 on numerical or validation failures.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace snrq
