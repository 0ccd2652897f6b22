// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace maea {

/// Raised for every contract violation in the library (bad shapes, non-finite
/// values, malformed files, degenerate statistics).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A timestep or statistic whose value is undefined (all-zero attribution,
/// empty instruction). Callers are expected to count and skip these.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace maea
