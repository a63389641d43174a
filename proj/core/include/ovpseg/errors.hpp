#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ovpseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or size disagreement between tensor operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vector where a direction is required (cosine, class embeddings).
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

// Inconsistent run/scene configuration (camera vs map counts, bad ranges).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized data; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// Requested configuration cannot be satisfied (prototype separation,
// more segments than queries).
class CapacityError : public Error {
 public:
  using Error::Error;
};

// API contract violation (non-scalar objective, mismatched point sets).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Scene placement failed after bounded retries.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Training aborted on a non-finite loss or gradient.
class TrainDivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ovpseg
