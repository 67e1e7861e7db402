#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace secpol {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable name used by tests and by the CLI's diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SECPOL_DEFINE_ERROR(Name)                                  \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : Error("ParseError", std::to_string(line) + ":" + std::to_string(column) +
                                ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// relmodel
SECPOL_DEFINE_ERROR(DanglingForeignKey);
SECPOL_DEFINE_ERROR(DuplicateRelation);
SECPOL_DEFINE_ERROR(InvalidSchema);
SECPOL_DEFINE_ERROR(TypeMismatch);
SECPOL_DEFINE_ERROR(UnknownRelation);
SECPOL_DEFINE_ERROR(DuplicatePrimaryKey);

// policy-core
SECPOL_DEFINE_ERROR(UnknownAttribute);
SECPOL_DEFINE_ERROR(IncompatibleComposition);
SECPOL_DEFINE_ERROR(DuplicatePolicyForTable);
SECPOL_DEFINE_ERROR(InvalidPolicy);

// oracle
SECPOL_DEFINE_ERROR(DivisionByZero);
SECPOL_DEFINE_ERROR(MissingContextParam);
SECPOL_DEFINE_ERROR(EvaluationError);

// depgraph
SECPOL_DEFINE_ERROR(SchemaFkCycle);
SECPOL_DEFINE_ERROR(CyclicPolicySet);

// sqlgen
SECPOL_DEFINE_ERROR(RLSUnsupportedMasking);
SECPOL_DEFINE_ERROR(UnparseableFromClause);
SECPOL_DEFINE_ERROR(RewriterFailed);
SECPOL_DEFINE_ERROR(RewriterTimeout);

// bench
SECPOL_DEFINE_ERROR(SetupFailed);
SECPOL_DEFINE_ERROR(ConnectionLost);
SECPOL_DEFINE_ERROR(QueryFailed);
SECPOL_DEFINE_ERROR(MissingBaseline);
SECPOL_DEFINE_ERROR(IoError);

#undef SECPOL_DEFINE_ERROR

}  // namespace secpol
