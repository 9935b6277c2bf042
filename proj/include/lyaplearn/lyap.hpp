#pragma once

// Finite-time Lyapunov exponents.
//
// spectrum() runs the QR recursion over a Jacobian sequence:
//
//     A_t = J_t Q_{t-1},   A_t = Q_t R_t  (R_ii > 0),   lambda_i = (1/T) sum_t ln R_ii(t)
//
// with Q_0 = I and QR by modified Gram-Schmidt, which uses only dot products,
// scaling, sqrt and ln. Instantiated with Var the exponents are tape nodes.
//
// largest_exponent() propagates a single tangent vector instead, which is
// cheaper when only lambda_1 is needed.
//
// Exponents are per discrete step (nats/step). Divide by dt for flows.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lyaplearn/diffcore.hpp"
#include "lyaplearn/errors.hpp"
#include "lyaplearn/matrix.hpp"
#include "lyaplearn/net.hpp"

namespace lyl {

inline constexpr double kRankThreshold = 1e-12;
inline constexpr double kCollapseThreshold = 1e-12;
inline constexpr double kDivergenceBound = 1e6;

template <class S>
struct SpectrumEstimateT {
  std::vector<S> exponents;          // descending
  std::size_t horizon = 0;           // T
  Matrix<S> log_diag_history;        // T x d, columns in the order of exponents
  S sum_exponents{};
};

using SpectrumEstimate = SpectrumEstimateT<double>;

/// Values of a (possibly tape-backed) estimate.
template <class S>
SpectrumEstimate values_of(const SpectrumEstimateT<S>& s) {
  SpectrumEstimate out;
  out.horizon = s.horizon;
  for (const S& e : s.exponents) out.exponents.push_back(value_of(e));
  std::vector<double> hist;
  hist.reserve(s.log_diag_history.data().size());
  for (const S& h : s.log_diag_history.data()) hist.push_back(value_of(h));
  out.log_diag_history = MatrixD(s.log_diag_history.rows(), s.log_diag_history.cols(), std::move(hist));
  out.sum_exponents = value_of(s.sum_exponents);
  return out;
}

/// Called after every QR step with the value of Q_t and R_t.
using QrObserver = std::function<void(std::size_t step, const MatrixD& q, const MatrixD& r)>;

namespace detail {

/// Constant with the same scalar type as `like` (a tape constant for Var).
inline double constant_like(double, double c) { return c; }
inline Var constant_like(Var like, double c) { return like.tape->constant(c); }

template <class S>
std::vector<S> mat_vec(const Matrix<S>& m, std::span<const S> v) {
  std::vector<S> out;
  out.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out.push_back(dot(m.row(i), v));
  return out;
}

}  // namespace detail

/// Streaming form of the QR recursion; push Jacobians one at a time.
template <class S>
class SpectrumAccumulator {
 public:
  explicit SpectrumAccumulator(QrObserver observer = {}) : observer_(std::move(observer)) {}

  void push(const Matrix<S>& jac) {
    if (jac.rows() != jac.cols()) throw std::invalid_argument("spectrum: Jacobian must be square");
    for (const S& v : jac.data())
      if (!std::isfinite(value_of(v))) throw std::invalid_argument("spectrum: non-finite Jacobian entry at step " + std::to_string(step_));
    const std::size_t d = jac.rows();
    if (step_ == 0) {
      dim_ = d;
    } else if (d != dim_) {
      throw std::invalid_argument("spectrum: Jacobian dimension changed at step " + std::to_string(step_));
    }

    // Columns of A = J Q_{t-1}; Q_0 = I gives the columns of J.
    std::vector<std::vector<S>> cols(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (step_ == 0) {
        cols[j].reserve(d);
        for (std::size_t i = 0; i < d; ++i) cols[j].push_back(jac(i, j));
      } else {
        cols[j] = detail::mat_vec(jac, std::span<const S>(q_[j]));
      }
    }

    // Modified Gram-Schmidt; R_jj = |v_j| > 0 by construction.
    std::vector<S> logs;
    logs.reserve(d);
    std::vector<std::vector<S>> r_upper(observer_ ? d : 0);
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<S>& v = cols[j];
      for (std::size_t i = 0; i < j; ++i) {
        const S r = dot(std::span<const S>(cols[i]), std::span<const S>(v));
        for (std::size_t k = 0; k < d; ++k) v[k] = v[k] - r * cols[i][k];
        if (observer_) r_upper[j].push_back(r);
      }
      const S norm_sq = dot(std::span<const S>(v), std::span<const S>(v));
      if (!(value_of(norm_sq) >= kRankThreshold * kRankThreshold)) throw RankDeficiencyError(step_, j);
      using std::log;
      using std::sqrt;
      const S norm = sqrt(norm_sq);
      for (std::size_t k = 0; k < d; ++k) v[k] = v[k] / norm;
      logs.push_back(0.5 * log(norm_sq));
      if (observer_) r_upper[j].push_back(norm);
    }
    q_ = std::move(cols);

    if (observer_) {
      MatrixD q(d, d), r(d, d, 0.0);
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < d; ++i) q(i, j) = value_of(q_[j][i]);
        for (std::size_t i = 0; i <= j; ++i) r(i, j) = value_of(r_upper[j][i]);
      }
      observer_(step_, q, r);
    }
    history_.push_back(std::move(logs));
    ++step_;
  }

  std::size_t steps() const noexcept { return step_; }

  SpectrumEstimateT<S> finish() const {
    if (step_ == 0) throw std::invalid_argument("spectrum: empty Jacobian sequence");
    const std::size_t d = dim_;
    const double inv_t = 1.0 / static_cast<double>(step_);
    std::vector<S> col_sums;
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<S> col;
      col.reserve(step_);
      for (const auto& row : history_) col.push_back(row[i]);
      col_sums.push_back(sum(std::span<const S>(col)));
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value_of(col_sums[a]) > value_of(col_sums[b]); });

    SpectrumEstimateT<S> out;
    out.horizon = step_;
    std::vector<S> hist;
    hist.reserve(step_ * d);
    for (const auto& row : history_)
      for (std::size_t i : order) hist.push_back(row[i]);
    out.log_diag_history = Matrix<S>(step_, d, std::move(hist));
    for (std::size_t i : order) out.exponents.push_back(col_sums[i] * inv_t);
    std::vector<S> all(out.log_diag_history.data());
    out.sum_exponents = sum(std::span<const S>(all)) * inv_t;
    return out;
  }

 private:
  QrObserver observer_;
  std::size_t step_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::vector<S>> q_;  // columns of Q_t
  std::vector<std::vector<S>> history_;
};

/// Lyapunov spectrum of a Jacobian sequence.
template <class S>
SpectrumEstimateT<S> spectrum(std::span<const Matrix<S>> jacobians, QrObserver observer = {}) {
  if (jacobians.empty()) throw std::invalid_argument("spectrum: empty Jacobian sequence");
  SpectrumAccumulator<S> acc(std::move(observer));
  for (const auto& j : jacobians) acc.push(j);
  return acc.finish();
}

template <class S>
SpectrumEstimateT<S> spectrum(const std::vector<Matrix<S>>& jacobians, QrObserver observer = {}) {
  return spectrum(std::span<const Matrix<S>>(jacobians), std::move(observer));
}

/// A differentiable state map: step(x) and jacobian(x) over a scalar type.
template <class M>
concept DifferentiableMap = requires(const M& m, std::span<const typename M::Scalar> x) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.step(x) } -> std::same_as<std::vector<typename M::Scalar>>;
  { m.jacobian(x) } -> std::same_as<Matrix<typename M::Scalar>>;
};

/// (F(x), J(x) v), using the map's own fused implementation when it has one.
template <DifferentiableMap M>
std::pair<std::vector<typename M::Scalar>, std::vector<typename M::Scalar>> advance_tangent(
    const M& map, std::span<const typename M::Scalar> x, std::span<const typename M::Scalar> v) {
  using S = typename M::Scalar;
  if constexpr (requires { map.advance(x, v); }) {
    return map.advance(x, v);
  } else {
    const Matrix<S> j = map.jacobian(x);
    return {map.step(x), detail::mat_vec(j, v)};
  }
}

/// Largest exponent by single-vector propagation:
/// v_t = J_t v_{t-1}, log growth accumulated and v renormalised every
/// renorm_every steps, lambda = total log growth / steps.
template <DifferentiableMap M>
typename M::Scalar largest_exponent(const M& map, std::span<const typename M::Scalar> x0, std::size_t steps,
                                    std::size_t renorm_every = 1, std::size_t transient = 0) {
  using S = typename M::Scalar;
  if (steps < 1) throw std::invalid_argument("largest_exponent: steps must be >= 1");
  if (renorm_every < 1) throw std::invalid_argument("largest_exponent: renorm_every must be >= 1");
  const std::size_t d = map.dim();
  if (x0.size() != d) throw std::invalid_argument("largest_exponent: state dimension mismatch");

  std::vector<S> x(x0.begin(), x0.end());
  for (std::size_t t = 0; t < transient; ++t) x = map.step(x);

  const double unit = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<S> v;
  v.reserve(d);
  for (std::size_t i = 0; i < d; ++i) v.push_back(detail::constant_like(x[0], unit));

  std::vector<S> logs;
  for (std::size_t t = 1; t <= steps; ++t) {
    auto [next, tangent] = advance_tangent(map, std::span<const S>(x), std::span<const S>(v));
    x = std::move(next);
    v = std::move(tangent);
    for (const S& xi : x)
      if (!std::isfinite(value_of(xi))) throw DivergenceError(t);
    if (t % renorm_every == 0 || t == steps) {
      const S norm_sq = dot(std::span<const S>(v), std::span<const S>(v));
      if (!(value_of(norm_sq) >= kCollapseThreshold * kCollapseThreshold) || !std::isfinite(value_of(norm_sq)))
        throw CollapseError(t);
      using std::log;
      using std::sqrt;
      logs.push_back(0.5 * log(norm_sq));
      if (t != steps) {
        const S norm = sqrt(norm_sq);
        for (S& vi : v) vi = vi / norm;
      }
    }
  }
  return sum(std::span<const S>(logs)) * (1.0 / static_cast<double>(steps));
}

/// A network viewed as the map x -> F(x).
template <class S>
class NetworkMap {
 public:
  using Scalar = S;
  explicit NetworkMap(const Network<S>& net) : net_(&net) {
    if (net.input_dim() != net.output_dim()) throw std::invalid_argument("network is not a square map");
  }
  std::size_t dim() const { return net_->input_dim(); }
  std::vector<S> step(std::span<const S> x) const { return forward(*net_, x); }
  Matrix<S> jacobian(std::span<const S> x) const { return input_jacobian(*net_, x); }
  std::pair<std::vector<S>, std::vector<S>> advance(std::span<const S> x, std::span<const S> v) const {
    ForwardCache<S> cache;
    auto y = forward(*net_, x, &cache);
    return {std::move(y), jacobian_vector(*net_, cache, v)};
  }

 private:
  const Network<S>* net_;
};

/// Iterates x_{t+1} = F(x_t), discards `transient` steps, then feeds the
/// Jacobian at each of the next `steps` states to the QR recursion.
/// If final_state is given it receives the state after the last step.
template <class S>
SpectrumEstimateT<S> spectrum_of_network(const Network<S>& net, std::span<const S> x0, std::size_t steps,
                                         std::size_t transient = 0, std::vector<S>* final_state = nullptr) {
  if (steps < 1) throw std::invalid_argument("spectrum_of_network: steps must be >= 1");
  if (net.input_dim() != net.output_dim()) throw std::invalid_argument("network is not a square map");
  auto check = [](const std::vector<S>& x, std::size_t t) {
    for (const S& xi : x)
      if (!(std::abs(value_of(xi)) <= kDivergenceBound)) throw DivergenceError(t);
  };
  std::vector<S> x(x0.begin(), x0.end());
  check(x, 0);
  for (std::size_t t = 0; t < transient; ++t) {
    x = forward(net, std::span<const S>(x));
    check(x, t + 1);
  }
  SpectrumAccumulator<S> acc;
  ForwardCache<S> cache;
  for (std::size_t t = 0; t < steps; ++t) {
    auto next = forward(net, std::span<const S>(x), &cache);
    try {
      acc.push(input_jacobian(net, cache));
    } catch (const RankDeficiencyError& e) {
      throw RankDeficiencyError(transient + t, e.column());
    }
    x = std::move(next);
    check(x, transient + t + 1);
  }
  if (final_state) *final_state = x;
  return acc.finish();
}

struct ChaosReport {
  bool chaotic = false;
  double largest = 0.0;
  double sum = 0.0;
};

/// lambda_1 > 0 (sensitive dependence) and sum lambda_i < 0 (dissipative).
ChaosReport is_chaotic_attractor(const SpectrumEstimate& s);

/// {exponents, horizon, sum, chaotic}
nlohmann::json spectrum_report(const SpectrumEstimate& s);

}  // namespace lyl
