#pragma once

#include <stdexcept>
#include <string>

namespace pieclam {

/// Malformed or out-of-range input (bad file, bad index, bad parameter).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on model state was violated, e.g. a Lorentz pairing that
/// went negative because a row left its cone.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Optimization or evaluation produced a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pieclam
