// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace artic {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point fell behind the camera plane.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

/// Frame index outside [0, T).
class FrameRangeError : public Error {
 public:
  FrameRangeError(int frame, int frame_count)
      : Error("frame " + std::to_string(frame) + " out of range [0, " +
              std::to_string(frame_count) + ")") {}
};

/// Malformed input document; `path` names the offending field (JSON pointer style).
class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A file could not be opened.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A structural invariant does not hold (counts disagree, ids out of range, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// A loss term became NaN or infinite.
class NumericalError : public Error {
 public:
  NumericalError(std::string term, const std::string& what)
      : Error(what), term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// A distillation prior could not produce a gradient; the step is skipped.
class PriorError : public Error {
 public:
  using Error::Error;
};

}  // namespace artic
