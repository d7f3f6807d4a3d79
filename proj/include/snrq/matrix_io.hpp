// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// SNRQMAT1 binary layout (all little-endian):
//
//   offset 0   8 bytes   ASCII "SNRQMAT1"
//   offset 8   u32       rows
//   offset 12  u32       cols
//   offset 16  u8        dtype: 0 = f32, 1 = f64, 2 = i32
//   offset 17  rows*cols values, row-major
//
// A file that does not start with the magic is parsed as CSV: comma-separated
// values, one matrix row per line, no header.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "snrq/matrix.hpp"

namespace snrq {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, I32 = 2 };

inline constexpr char kMatrixMagic[8] = {'S', 'N', 'R', 'Q', 'M', 'A', 'T', '1'};

std::string encode_matrix(const Matrix& m, DType dtype = DType::F64);
std::string encode_int_matrix(const IntMatrix& m);

/// Decodes a SNRQMAT1 byte string; i32 payloads are widened to double.
Matrix decode_matrix(const std::string& bytes);
IntMatrix decode_int_matrix(const std::string& bytes);
Matrix parse_csv_matrix(const std::string& text);

Matrix read_matrix(const std::filesystem::path& path);
IntMatrix read_int_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const Matrix& m, DType dtype = DType::F64);
void write_int_matrix(const std::filesystem::path& path, const IntMatrix& m);

}  // namespace snrq
