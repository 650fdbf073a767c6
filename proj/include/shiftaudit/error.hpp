#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shiftaudit {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or lengths do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A parameter is outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A data value is outside its admissible range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// An index (output class, sample, layer) does not exist.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data. Carries the byte offset at which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit FormatError(const std::string& what) : Error(what), offset_(0) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A pattern estimate has no usable statistics (empty positive regime or a vanishing
/// normalizer).
class DegeneratePatternError : public Error {
 public:
  using Error::Error;
};

/// The twin network does not reproduce the original network's outputs.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// No pixel of an attack target can be forced.
class AttackInfeasibleError : public Error {
 public:
  using Error::Error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

}  // namespace shiftaudit
