#include "lyaplearn/dynsys.hpp"

#include <cmath>
#include <stdexcept>

#include "lyaplearn/random.hpp"

namespace lyl {

std::array<double, 3> lorenz_step(const std::array<double, 3>& s, const LorenzParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("lorenz_step: dt must be positive");
  const auto next = lorenz_rk4<double>(s, p, dt);
  for (double v : next)
    if (!std::isfinite(v)) throw DivergenceError(0, "Lorenz integration produced a non-finite state");
  return {next[0], next[1], next[2]};
}

MatrixD lorenz_jacobian(const std::array<double, 3>& s, const LorenzParams& p) {
  return MatrixD(3, 3, {-p.sigma, p.sigma, 0.0, p.rho - s[2], -1.0, -s[0], s[1], s[0], -p.beta});
}

MatrixD lorenz_step_jacobian(const std::array<double, 3>& s, const LorenzParams& p, double dt) {
  const MatrixD eye = MatrixD::identity(3);
  auto affine = [](const MatrixD& a, const MatrixD& b, double c) {  // a + c b
    MatrixD out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += c * b.data()[i];
    return out;
  };
  auto shifted = [&](const std::array<double, 3>& k, double c) {
    return std::array<double, 3>{s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]};
  };
  const auto k1 = lorenz_rhs<double>(s, p);
  const MatrixD m1 = lorenz_jacobian(s, p);
  const auto s2 = shifted(k1, 0.5 * dt);
  const auto k2 = lorenz_rhs<double>(s2, p);
  const MatrixD m2 = lorenz_jacobian(s2, p) * affine(eye, m1, 0.5 * dt);
  const auto s3 = shifted(k2, 0.5 * dt);
  const auto k3 = lorenz_rhs<double>(s3, p);
  const MatrixD m3 = lorenz_jacobian(s3, p) * affine(eye, m2, 0.5 * dt);
  const auto s4 = shifted(k3, dt);
  const MatrixD m4 = lorenz_jacobian(s4, p) * affine(eye, m3, dt);
  MatrixD out = eye;
  for (std::size_t i = 0; i < 9; ++i)
    out.data()[i] += dt / 6.0 * (m1.data()[i] + 2.0 * m2.data()[i] + 2.0 * m3.data()[i] + m4.data()[i]);
  return out;
}

Trajectory generate_regime_shift(const RegimeShiftConfig& cfg, std::uint64_t seed) {
  if (cfg.n_per_regime < 1) throw std::invalid_argument("n_per_regime must be >= 1");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(cfg.scale > 0.0)) throw std::invalid_argument("scale must be positive");

  Engine rng = make_stream(seed, "data");
  std::array<double, 3> s = cfg.x0;
  for (double& v : s) v += cfg.jitter * uniform(rng, -1.0, 1.0);

  auto step = [&](const LorenzParams& p, std::size_t index) {
    try {
      s = lorenz_step(s, p, cfg.dt);
    } catch (const DivergenceError&) {
      throw DivergenceError(index, "Lorenz integration produced a non-finite state");
    }
  };
  for (std::size_t t = 0; t < cfg.transient; ++t) step(cfg.params_a, t);

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.scale = cfg.scale;
  traj.shift_index = cfg.n_per_regime;
  traj.params_a = cfg.params_a;
  traj.params_b = cfg.params_b;
  traj.seed = seed;
  traj.generator = "lorenz-rk4-regime-shift";
  const double inv_scale = 1.0 / cfg.scale;
  const std::size_t total = 2 * cfg.n_per_regime;
  traj.states.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (i > 0) step(i < cfg.n_per_regime ? cfg.params_a : cfg.params_b, i);
    traj.states.push_back({s[0] * inv_scale, s[1] * inv_scale, s[2] * inv_scale});
  }
  return traj;
}

std::vector<std::string> oracle_map_names() { return {"linear", "logistic", "lorenz"}; }

OracleMap make_oracle_map(const std::string& name, const OracleOptions& opts) {
  if (name == "linear") {
    const MatrixD a = opts.linear;
    if (a.rows() != a.cols()) throw std::invalid_argument("linear oracle map needs a square matrix");
    return OracleMap(
        name, a.rows(), [a](std::span<const double> x) { return a * x; },
        [a](std::span<const double>) { return a; });
  }
  if (name == "logistic") {
    const double r = opts.logistic_r;
    return OracleMap(
        name, 1, [r](std::span<const double> x) { return std::vector<double>{r * x[0] * (1.0 - x[0])}; },
        [r](std::span<const double> x) { return MatrixD(1, 1, std::vector<double>{r - 2.0 * r * x[0]}); });
  }
  if (name == "lorenz") {
    const LorenzParams p = opts.lorenz;
    const double dt = opts.dt;
    return OracleMap(
        name, 3,
        [p, dt](std::span<const double> x) {
          const auto n = lorenz_step({x[0], x[1], x[2]}, p, dt);
          return std::vector<double>(n.begin(), n.end());
        },
        [p, dt](std::span<const double> x) { return lorenz_step_jacobian({x[0], x[1], x[2]}, p, dt); });
  }
  throw std::invalid_argument("unknown oracle map '" + name + "'");
}

}  // namespace lyl
