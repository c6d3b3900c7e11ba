// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <stdexcept>
#include <string>

namespace ctxprobe {

enum class ErrorKind {
  kInvalidArgument,
  kOutOfRange,
  kCellNotCovered,
  kSegmentTooLong,
  kUnknownToken,
  kTransport,
  kProtocol,
  kBackend,
  kDataFormat,
  kIo,
  kInternal,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; the kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ctxprobe
