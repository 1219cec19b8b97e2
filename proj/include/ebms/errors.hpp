#pragma once

#include <stdexcept>
#include <string>

namespace ebms {

// Every failure the library can raise, split into two families:
// input/validation problems (bad files, malformed structures) and
// numerical problems (estimation broke down on valid input).  The CLI
// maps the families to distinct exit codes, so the split is part of the
// public contract.
enum class ErrorKind {
  // validation
  MissingColumn,
  InconsistentInterval,
  UnknownTransition,
  DuplicateStatusOne,
  IncompleteOutboundSet,
  SelfTransition,
  DuplicateTransition,
  NotTree,
  MissingTransitionRow,
  BadInput,
  // numerical
  EmptyRiskSet,
  SingularHessian,
  NotConverged,
  DegenerateGroup,
  NegativeDiagonal,
  AllReplicatesFailed,
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::InconsistentInterval: return "InconsistentInterval";
    case ErrorKind::UnknownTransition: return "UnknownTransition";
    case ErrorKind::DuplicateStatusOne: return "DuplicateStatusOne";
    case ErrorKind::IncompleteOutboundSet: return "IncompleteOutboundSet";
    case ErrorKind::SelfTransition: return "SelfTransition";
    case ErrorKind::DuplicateTransition: return "DuplicateTransition";
    case ErrorKind::NotTree: return "NotTree";
    case ErrorKind::MissingTransitionRow: return "MissingTransitionRow";
    case ErrorKind::BadInput: return "BadInput";
    case ErrorKind::EmptyRiskSet: return "EmptyRiskSet";
    case ErrorKind::SingularHessian: return "SingularHessian";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::DegenerateGroup: return "DegenerateGroup";
    case ErrorKind::NegativeDiagonal: return "NegativeDiagonal";
    case ErrorKind::AllReplicatesFailed: return "AllReplicatesFailed";
  }
  return "Unknown";
}

inline bool is_validation_kind(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingColumn:
    case ErrorKind::InconsistentInterval:
    case ErrorKind::UnknownTransition:
    case ErrorKind::DuplicateStatusOne:
    case ErrorKind::IncompleteOutboundSet:
    case ErrorKind::SelfTransition:
    case ErrorKind::DuplicateTransition:
    case ErrorKind::NotTree:
    case ErrorKind::MissingTransitionRow:
    case ErrorKind::BadInput:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + msg),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool is_validation() const noexcept { return is_validation_kind(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace ebms
