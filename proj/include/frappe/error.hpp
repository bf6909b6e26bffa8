// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace frappe {

enum class ErrorKind {
  Schema,
  Parse,
  EmptyDataset,
  SplitTooSmall,
  InvalidFraction,
  Dim,
  MissingBaseScores,
  EmptyGroup,
  InsufficientSample,
  Diverged,
  InnerNotConverged,
  Config,
  Io,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace frappe
