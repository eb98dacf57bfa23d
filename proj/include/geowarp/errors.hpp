#pragma once

#include <stdexcept>
#include <string>

namespace geowarp {

// Malformed or missing input data (files, dataset layout, scene specs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or a diverged optimisation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace geowarp
