#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace divfree {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid mesh topology or geometry (degenerate cells, bad indices, ...).
class MeshError : public Error {
 public:
  using Error::Error;
};

/// Mesh file parse failure. `line()` is 1-based; 0 means "no specific line".
class ParseError : public MeshError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : MeshError(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A split construction step whose geometric guard failed.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Factorization of a saddle system hit a (numerically) zero pivot.
class SingularSystemError : public Error {
 public:
  SingularSystemError(std::string block, const std::string& what)
      : Error(what + " [block: " + block + "]"), block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

/// An iterative method stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace divfree
