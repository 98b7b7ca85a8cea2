#pragma once

#include <stdexcept>
#include <string>

namespace emv {

/// Malformed input: unparseable files, bad headers, duplicate keys.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that the model cannot handle (non-identifying
/// constraint, insufficient data, non-estimable function, ...).
class DomainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Internal numerical self-check failed.
class ConsistencyError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

} // namespace emv
