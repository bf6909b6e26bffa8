// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include "frappe/error.hpp"

namespace frappe {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Schema: return "SchemaError";
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::SplitTooSmall: return "SplitTooSmall";
    case ErrorKind::InvalidFraction: return "InvalidFraction";
    case ErrorKind::Dim: return "DimError";
    case ErrorKind::MissingBaseScores: return "MissingBaseScores";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::InsufficientSample: return "InsufficientSample";
    case ErrorKind::Diverged: return "DivergedError";
    case ErrorKind::InnerNotConverged: return "InnerNotConverged";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

}  // namespace frappe
