// Copyright 2026 The SAKED Authors
// SPDX-License-Identifier: Apache-2.0

#include "saked/error.hpp"

namespace saked {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput:
      return "invalid input";
    case ErrorKind::kConfig:
      return "config error";
    case ErrorKind::kFormat:
      return "format error";
    case ErrorKind::kValidation:
      return "validation error";
    case ErrorKind::kIo:
      return "I/O error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
      kind_(kind) {}

}  // namespace saked
