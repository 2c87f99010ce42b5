#pragma once

#include <stdexcept>
#include <string>

namespace hdeepc {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NonConvex : public Error {
 public:
  using Error::Error;
};

class TooShort : public Error {
 public:
  using Error::Error;
};

class LengthTooShort : public Error {
 public:
  using Error::Error;
};

class ExcitationFailed : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class MissingTransform : public Error {
 public:
  using Error::Error;
};

class BoxesUnsupported : public Error {
 public:
  using Error::Error;
};

/// Raised when the coupling equations admit no solution; carries the
/// residual of the best least-squares candidate.
class TransformInfeasible : public Error {
 public:
  TransformInfeasible(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  [[nodiscard]] double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ConfigInvalid : public Error {
 public:
  ConfigInvalid(const std::string& key, const std::string& what)
      : Error("invalid config key '" + key + "': " + what), key_(key) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hdeepc
