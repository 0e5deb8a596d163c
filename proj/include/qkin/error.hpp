#pragma once

#include <stdexcept>
#include <string>

namespace qkin {

/// Malformed or incomplete experiment configuration (CLI exit code 2).
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A named precondition of an operation does not hold for its inputs.
/// Reported with the same exit code as configuration errors.
class precondition_error : public std::invalid_argument {
public:
  precondition_error(std::string name, const std::string& detail)
      : std::invalid_argument(name + ": " + detail), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

private:
  std::string name_;
};

/// Numerical failure during a computation (NaN, blow-up); CLI exit code 3.
class numerical_error : public std::runtime_error {
public:
  numerical_error(std::string stage, const std::string& detail)
      : std::runtime_error(stage + ": " + detail), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

} // namespace qkin
