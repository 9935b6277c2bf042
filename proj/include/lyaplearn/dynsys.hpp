#pragma once

// Reference dynamical systems: the Lorenz flow integrated with RK4, the
// regime-shift dataset built from it, and small analytic maps with known
// Lyapunov exponents used as test oracles.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lyaplearn/diffcore.hpp"
#include "lyaplearn/errors.hpp"
#include "lyaplearn/matrix.hpp"

namespace lyl {

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

/// Right-hand side (sigma (y - x), x (rho - z) - y, x y - beta z).
template <class S>
std::array<S, 3> lorenz_rhs(std::span<const S> s, const LorenzParams& p) {
  return {p.sigma * (s[1] - s[0]), s[0] * (p.rho - s[2]) - s[1], s[0] * s[1] - p.beta * s[2]};
}

/// One classical RK4 step without a finiteness check; usable with Var.
template <class S>
std::vector<S> lorenz_rk4(std::span<const S> s, const LorenzParams& p, double dt) {
  auto shifted = [&](const std::array<S, 3>& k, double c) {
    return std::array<S, 3>{s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]};
  };
  const auto k1 = lorenz_rhs<S>(s, p);
  const auto s2 = shifted(k1, 0.5 * dt);
  const auto k2 = lorenz_rhs<S>(s2, p);
  const auto s3 = shifted(k2, 0.5 * dt);
  const auto k3 = lorenz_rhs<S>(s3, p);
  const auto s4 = shifted(k3, dt);
  const auto k4 = lorenz_rhs<S>(s4, p);
  std::vector<S> out;
  out.reserve(3);
  for (std::size_t i = 0; i < 3; ++i) out.push_back(s[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
  return out;
}

/// RK4 step; throws DivergenceError on a non-finite result.
std::array<double, 3> lorenz_step(const std::array<double, 3>& s, const LorenzParams& p, double dt);

/// Jacobian of the right-hand side: [[-sigma, sigma, 0], [rho - z, -1, -x], [y, x, -beta]].
MatrixD lorenz_jacobian(const std::array<double, 3>& s, const LorenzParams& p);

/// Exact Jacobian of one RK4 step (variational RK4 on the tangent equation).
MatrixD lorenz_step_jacobian(const std::array<double, 3>& s, const LorenzParams& p, double dt);

/// Time series of states. Exponents computed from it are per step; divide by
/// dt for continuous-time units.
struct Trajectory {
  std::vector<std::vector<double>> states;  // raw * (1 / scale)
  double dt = 0.01;
  std::optional<std::size_t> shift_index;
  double scale = 1.0;
  LorenzParams params_a;
  LorenzParams params_b;
  std::uint64_t seed = 0;
  std::string generator;

  std::size_t size() const { return states.size(); }
  std::size_t dim() const { return states.empty() ? 0 : states.front().size(); }
};

struct RegimeShiftConfig {
  LorenzParams params_a{20.0, 28.0, 8.0 / 3.0};
  LorenzParams params_b{10.0, 28.0, 8.0 / 3.0};
  std::size_t n_per_regime = 5000;
  double dt = 0.01;
  std::array<double, 3> x0{1.0, 1.0, 1.0};
  std::size_t transient = 1000;
  double scale = 30.0;
  double jitter = 1e-3;
};

/// Integrates params_a from a seed-jittered x0, drops the transient, keeps
/// n_per_regime states, then continues from the last state under params_b
/// for n_per_regime more. states[shift_index] is the first state produced
/// by a params_b step.
Trajectory generate_regime_shift(const RegimeShiftConfig& cfg, std::uint64_t seed);

/// Analytic reference map with step and Jacobian in double precision.
class OracleMap {
 public:
  using Scalar = double;
  using StepFn = std::function<std::vector<double>(std::span<const double>)>;
  using JacobianFn = std::function<MatrixD(std::span<const double>)>;

  OracleMap(std::string name, std::size_t dim, StepFn step, JacobianFn jacobian)
      : name_(std::move(name)), dim_(dim), step_(std::move(step)), jacobian_(std::move(jacobian)) {}

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  std::vector<double> step(std::span<const double> x) const { return step_(x); }
  MatrixD jacobian(std::span<const double> x) const { return jacobian_(x); }

 private:
  std::string name_;
  std::size_t dim_;
  StepFn step_;
  JacobianFn jacobian_;
};

struct OracleOptions {
  MatrixD linear = MatrixD(3, 3, std::vector<double>{0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.5});
  double logistic_r = 4.0;
  LorenzParams lorenz;
  double dt = 0.01;
};

/// Names accepted by make_oracle_map: "linear", "logistic", "lorenz".
std::vector<std::string> oracle_map_names();
OracleMap make_oracle_map(const std::string& name, const OracleOptions& opts = {});

}  // namespace lyl
