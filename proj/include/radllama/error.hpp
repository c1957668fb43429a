// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace radllama {

enum class ErrorKind {
  kEmptyInput,
  kMalformedDelimiter,
  kIoError,
  kBadRatios,
  kMalformedRecord,
  kBadSize,
  kInvalidId,
  kShapeMismatch,
  kNotScalar,
  kBadConfig,
  kSequenceTooLong,
  kUnknownTarget,
  kAlreadyMerged,
  kPromptTooLong,
  kEmptyMask,
  kEmptyDataset,
  kEmptyCorpus,
  kMalformedRow,
  kDuplicateKey,
  kOutOfRange,
  kIncompleteDesign,
  kNeedTwoRaters,
  kIdMismatch,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kMalformedDelimiter: return "MalformedDelimiter";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kBadRatios: return "BadRatios";
    case ErrorKind::kMalformedRecord: return "MalformedRecord";
    case ErrorKind::kBadSize: return "BadSize";
    case ErrorKind::kInvalidId: return "InvalidId";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNotScalar: return "NotScalar";
    case ErrorKind::kBadConfig: return "BadConfig";
    case ErrorKind::kSequenceTooLong: return "SequenceTooLong";
    case ErrorKind::kUnknownTarget: return "UnknownTarget";
    case ErrorKind::kAlreadyMerged: return "AlreadyMerged";
    case ErrorKind::kPromptTooLong: return "PromptTooLong";
    case ErrorKind::kEmptyMask: return "EmptyMask";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kEmptyCorpus: return "EmptyCorpus";
    case ErrorKind::kMalformedRow: return "MalformedRow";
    case ErrorKind::kDuplicateKey: return "DuplicateKey";
    case ErrorKind::kOutOfRange: return "OutOfRange";
    case ErrorKind::kIncompleteDesign: return "IncompleteDesign";
    case ErrorKind::kNeedTwoRaters: return "NeedTwoRaters";
    case ErrorKind::kIdMismatch: return "IdMismatch";
  }
  return "Unknown";
}

/// Data or contract error raised by every module. `kind()` identifies the
/// failure class; the message carries the offending detail (row, id, shape).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace radllama
