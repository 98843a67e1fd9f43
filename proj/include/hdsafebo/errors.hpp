#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hdsafebo {

enum class ErrorCode {
    InvalidInput,
    NumericalFailure,
    SeedUnsafe,
    DegenerateData,
    ParseError,
    InvalidMap,
    Conflict,
    NotFound,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Base of every exception thrown by the toolkit. The code is what the HTTP
// layer and the CLI use to pick a status / exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& m) : Error(ErrorCode::InvalidInput, m) {}
};

class NumericalFailure : public Error {
public:
    explicit NumericalFailure(const std::string& m) : Error(ErrorCode::NumericalFailure, m) {}
};

class SeedUnsafe : public Error {
public:
    explicit SeedUnsafe(const std::string& m) : Error(ErrorCode::SeedUnsafe, m) {}
};

class DegenerateData : public Error {
public:
    explicit DegenerateData(const std::string& m) : Error(ErrorCode::DegenerateData, m) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& m) : Error(ErrorCode::ParseError, m) {}
};

class InvalidMap : public Error {
public:
    explicit InvalidMap(const std::string& m) : Error(ErrorCode::InvalidMap, m) {}
};

class ConflictError : public Error {
public:
    explicit ConflictError(const std::string& m) : Error(ErrorCode::Conflict, m) {}
};

class NotFound : public Error {
public:
    explicit NotFound(const std::string& m) : Error(ErrorCode::NotFound, m) {}
};

}  // namespace hdsafebo
