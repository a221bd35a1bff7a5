// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace beamctl {

enum class Errc {
    InvalidPath,
    InvalidValue,
    TypeMismatch,
    NotFound,
    StreamClosed,
    FormatError,
    ParseError,
    UnboundVariable,
    DispatchError,
    NotWaiting,
    NotRunning,
    UnknownComponent,
    IoError,
    BadFactors,
    CorruptPayload,
    NoData,
    BindError,
    BadRequest,
    Busy,
    Timeout,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure surfaced by the library carries one of the codes above; the
/// gateway maps them one-to-one onto wire error codes.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Script syntax error with its 1-based source line.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& reason)
        : Error(Errc::ParseError, "line " + std::to_string(line) + ": " + reason),
          line_(line), reason_(reason) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t line_;
    std::string reason_;
};

}  // namespace beamctl
