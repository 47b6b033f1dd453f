#pragma once

#include <stdexcept>
#include <string>

namespace hat {

// Base for every error the library throws on purpose. The CLI maps these to
// exit code 1; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& msg)
      : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

private:
  std::string category_;
};

// Tensor dimension mismatches. Messages name both shapes.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

// Bad caller-supplied values: out-of-vocab ids, empty sequences, bad ranges.
class InputError : public Error {
public:
  explicit InputError(const std::string& msg) : Error("input", msg) {}
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

// Malformed files. Messages carry a byte offset or line number.
class ParseError : public Error {
public:
  explicit ParseError(const std::string& msg) : Error("parse", msg) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

// Misuse of the autodiff tape, e.g. differentiating a value that was never
// recorded on it.
class TapeError : public Error {
public:
  explicit TapeError(const std::string& msg) : Error("tape", msg) {}
};

// Training aborts (non-finite loss and similar).
class TrainError : public Error {
public:
  explicit TrainError(const std::string& msg) : Error("train", msg) {}
};

}  // namespace hat
