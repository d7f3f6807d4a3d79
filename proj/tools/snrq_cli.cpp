// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "snrq/cli.hpp"

int main(int argc, char** argv) { return snrq::cli_main(argc, argv, std::cout, std::cerr); }
