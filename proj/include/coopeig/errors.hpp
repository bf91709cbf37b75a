#pragma once

#include <stdexcept>
#include <string>

namespace coopeig {

// Every error message is prefixed with "module.operation:" so batch logs
// identify the failing stage without a stack trace.
class Error : public std::runtime_error {
public:
  enum class Kind { Validation, Numeric };

  Error(Kind kind, std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), kind_(kind), where_(std::move(where)) {}

  Kind kind() const { return kind_; }
  const std::string& where() const { return where_; }

private:
  Kind kind_;
  std::string where_;
};

struct ValidationError : Error {
  ValidationError(const std::string& where, const std::string& what)
      : Error(Kind::Validation, where, what) {}
};

struct NumericError : Error {
  NumericError(const std::string& where, const std::string& what)
      : Error(Kind::Numeric, where, what) {}
};

}  // namespace coopeig
