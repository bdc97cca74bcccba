#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace acam {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A sound source coincides with a microphone; TDOA derivatives are undefined there.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedProblem : public Error {
 public:
  using Error::Error;
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

// The residual became non-finite. Carries the step norms taken so far.
class Divergence : public Error {
 public:
  Divergence(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& step_norm_trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class NoSignal : public Error {
 public:
  using Error::Error;
};

class AmbiguousPeak : public Error {
 public:
  using Error::Error;
};

// Malformed input file; `line` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& msg)
      : Error(file + (line ? ":" + std::to_string(line) : std::string{}) + ": " + msg),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace acam
