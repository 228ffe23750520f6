#pragma once

#include <stdexcept>
#include <string>

namespace execlab {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed config files, missing inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where a finite number was required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A step was requested past the end of the trading horizon.
class HorizonError : public Error {
 public:
  using Error::Error;
};

/// The requested computation has no implementation for these parameters.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A query point fell outside the domain of a solution grid.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Problems with market data files or their contents.
class DataError : public Error {
 public:
  using Error::Error;
};

/// The backward Riccati integration diverged before reaching t = 0.
class SingularityError : public NumericError {
 public:
  SingularityError(const std::string& what, double blowup_time)
      : NumericError(what), blowup_time_(blowup_time) {}
  double blowup_time() const noexcept { return blowup_time_; }

 private:
  double blowup_time_;
};

}  // namespace execlab
