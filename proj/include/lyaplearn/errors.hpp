#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lyl {

/// Base for failures of a numerical procedure (as opposed to bad input).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A QR diagonal entry fell below the rank threshold.
class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(std::size_t step, std::size_t column)
      : NumericalError("rank deficiency at step " + std::to_string(step) + ", column " + std::to_string(column)),
        step_(step),
        column_(column) {}
  std::size_t step() const noexcept { return step_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t step_;
  std::size_t column_;
};

/// A tangent vector shrank below the collapse threshold.
class CollapseError : public NumericalError {
 public:
  explicit CollapseError(std::size_t step)
      : NumericalError("tangent vector collapsed at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A trajectory left the finite/bounded region.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(std::size_t step, const std::string& detail = "trajectory diverged")
      : NumericalError(detail + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace lyl
