// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/matrix_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "snrq/errors.hpp"

namespace snrq {

namespace {

constexpr std::size_t kHeaderSize = 17;

template <typename U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

template <typename U>
U get_le(const std::string& in, std::size_t offset) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

std::size_t dtype_width(DType d) { return d == DType::F64 ? 8 : 4; }

std::string header(std::size_t rows, std::size_t cols, DType dtype) {
    if (rows > UINT32_MAX || cols > UINT32_MAX) throw FormatError("matrix too large for SNRQMAT1");
    std::string out(kMatrixMagic, sizeof(kMatrixMagic));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cols));
    out.push_back(static_cast<char>(dtype));
    return out;
}

struct Header {
    std::size_t rows;
    std::size_t cols;
    DType dtype;
};

bool has_magic(const std::string& bytes) {
    return bytes.size() >= sizeof(kMatrixMagic) &&
           std::memcmp(bytes.data(), kMatrixMagic, sizeof(kMatrixMagic)) == 0;
}

Header parse_header(const std::string& bytes) {
    if (!has_magic(bytes)) throw FormatError("bad magic (expected SNRQMAT1)");
    if (bytes.size() < kHeaderSize) throw FormatError("truncated header");
    Header h{get_le<std::uint32_t>(bytes, 8), get_le<std::uint32_t>(bytes, 12),
             static_cast<DType>(static_cast<unsigned char>(bytes[16]))};
    if (static_cast<unsigned>(h.dtype) > 2) {
        throw FormatError("unknown dtype code " + std::to_string(static_cast<unsigned>(h.dtype)));
    }
    if (h.rows == 0 || h.cols == 0) throw FormatError("zero-sized matrix");
    const std::size_t expected = kHeaderSize + h.rows * h.cols * dtype_width(h.dtype);
    if (bytes.size() < expected) {
        throw FormatError("truncated payload: " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected));
    }
    if (bytes.size() > expected) throw FormatError("trailing bytes after payload");
    return h;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string encode_matrix(const Matrix& m, DType dtype) {
    std::string out = header(m.rows(), m.cols(), dtype);
    out.reserve(kHeaderSize + m.size() * dtype_width(dtype));
    for (double v : m.data()) {
        switch (dtype) {
            case DType::F64: put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); break;
            case DType::F32:
                put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
                break;
            case DType::I32:
                put_le<std::uint32_t>(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(std::lround(v))));
                break;
        }
    }
    return out;
}

std::string encode_int_matrix(const IntMatrix& m) {
    std::string out = header(m.rows(), m.cols(), DType::I32);
    for (std::int32_t v : m.data()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    return out;
}

Matrix decode_matrix(const std::string& bytes) {
    const Header h = parse_header(bytes);
    Matrix m(h.rows, h.cols);
    auto data = m.data();
    std::size_t off = kHeaderSize;
    for (std::size_t i = 0; i < data.size(); ++i) {
        switch (h.dtype) {
            case DType::F64:
                data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, off));
                off += 8;
                break;
            case DType::F32:
                data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, off));
                off += 4;
                break;
            case DType::I32:
                data[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(bytes, off));
                off += 4;
                break;
        }
        if (!std::isfinite(data[i])) throw FormatError("non-finite entry at index " + std::to_string(i));
    }
    return m;
}

IntMatrix decode_int_matrix(const std::string& bytes) {
    const Header h = parse_header(bytes);
    if (h.dtype != DType::I32) throw FormatError("expected i32 payload");
    IntMatrix m(h.rows, h.cols);
    auto data = m.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(bytes, kHeaderSize + 4 * i));
    }
    return m;
}

Matrix parse_csv_matrix(const std::string& text) {
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::size_t count = 0;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw FormatError("CSV: cannot parse '" + cell + "' on row " + std::to_string(rows + 1));
            }
            if (cell.find_first_not_of(" \t", used) != std::string::npos) {
                throw FormatError("CSV: trailing characters in '" + cell + "'");
            }
            if (!std::isfinite(v)) throw FormatError("CSV: non-finite entry on row " + std::to_string(rows + 1));
            values.push_back(v);
            ++count;
        }
        if (rows == 0) {
            cols = count;
        } else if (count != cols) {
            throw FormatError("CSV: row " + std::to_string(rows + 1) + " has " + std::to_string(count) +
                              " columns, expected " + std::to_string(cols));
        }
        ++rows;
    }
    if (rows == 0 || cols == 0) throw FormatError("CSV: empty matrix");
    return Matrix(rows, cols, std::move(values));
}

Matrix read_matrix(const std::filesystem::path& path) {
    const std::string bytes = slurp(path);
    if (has_magic(bytes)) return decode_matrix(bytes);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "SNRQ") == 0) throw FormatError("bad magic in " + path.string());
    return parse_csv_matrix(bytes);
}

IntMatrix read_int_matrix(const std::filesystem::path& path) { return decode_int_matrix(slurp(path)); }

void write_matrix(const std::filesystem::path& path, const Matrix& m, DType dtype) {
    dump(path, encode_matrix(m, dtype));
}

void write_int_matrix(const std::filesystem::path& path, const IntMatrix& m) {
    dump(path, encode_int_matrix(m));
}

}  // namespace snrq
