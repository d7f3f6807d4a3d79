// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every module. Callers that only care about
// "something numerical went wrong" catch snrq::Error; the subclasses let the
// pipeline react to specific conditions (e.g. raise damping on
// NotPositiveDefinite).

#pragma once

#include <stdexcept>
#include <string>

namespace snrq {

enum class ErrorKind {
    NotPositiveDefinite,
    Format,
    Io,
    InvalidSpec,
    ShapeMismatch,
    NonFinite,
    MemoryBudget,
    BudgetExceeded,
    InvalidArgument,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define SNRQ_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(ErrorKind::Name, what) {} \
    }

SNRQ_DEFINE_ERROR(NotPositiveDefinite);
SNRQ_DEFINE_ERROR(ShapeMismatch);
SNRQ_DEFINE_ERROR(NonFinite);
SNRQ_DEFINE_ERROR(InvalidSpec);
SNRQ_DEFINE_ERROR(MemoryBudget);
SNRQ_DEFINE_ERROR(BudgetExceeded);
SNRQ_DEFINE_ERROR(InvalidArgument);

#undef SNRQ_DEFINE_ERROR

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace snrq
