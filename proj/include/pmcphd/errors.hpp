#pragma once

#include <stdexcept>
#include <string>

namespace pmcphd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A covariance needed to be strictly positive definite and was not.
class SingularCovarianceError : public Error {
 public:
  using Error::Error;
};

/// Factorization failed at every jitter level.
class NotPsdError : public Error {
 public:
  NotPsdError(const std::string& what, double most_negative_pivot)
      : Error(what), most_negative_pivot_(most_negative_pivot) {}
  double most_negative_pivot() const noexcept { return most_negative_pivot_; }

 private:
  double most_negative_pivot_;
};

/// HMC-to-PMC construction produced an invalid noise covariance.
class InvalidEmbeddingError : public Error {
 public:
  InvalidEmbeddingError(const std::string& what, std::string block)
      : Error(what), block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinite weights encountered in a particle cloud.
class NumericCorruptionError : public Error {
 public:
  using Error::Error;
};

/// Importance proposal assigned zero density to one of its own samples.
class WeightDegeneracyError : public Error {
 public:
  WeightDegeneracyError(const std::string& what, std::size_t particle)
      : Error(what), particle_(particle) {}
  std::size_t particle() const noexcept { return particle_; }

 private:
  std::size_t particle_;
};

/// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pmcphd
