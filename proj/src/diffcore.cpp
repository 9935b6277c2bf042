#include "lyaplearn/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lyl {

Tape::Edge* Tape::EdgeBuffer::grow(std::size_t n) {
  if (size_ + n > capacity_) {
    const std::size_t cap = std::max<std::size_t>({size_ + n, 2 * capacity_, 1024});
    std::unique_ptr<Edge[]> bigger(new Edge[cap]);
    std::copy(data_.get(), data_.get() + size_, bigger.get());
    data_ = std::move(bigger);
    capacity_ = cap;
  }
  Edge* out = data_.get() + size_;
  size_ += n;
  return out;
}

Var Tape::variable(double value) {
  values_.push_back(value);
  offsets_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return {this, static_cast<std::uint32_t>(values_.size() - 1)};
}

void Tape::truncate(std::size_t checkpoint) {
  if (checkpoint > values_.size()) throw std::out_of_range("Tape::truncate: checkpoint beyond tape end");
  values_.resize(checkpoint);
  offsets_.resize(checkpoint + 1);
  edges_.resize_down(offsets_.back());
}

void Tape::set_value(Var leaf, double value) {
  if (leaf.tape != this || leaf.id >= values_.size()) throw std::invalid_argument("Tape::set_value: node not on this tape");
  if (!is_leaf(leaf)) throw std::invalid_argument("Tape::set_value: node " + std::to_string(leaf.id) + " is not a leaf");
  values_[leaf.id] = value;
}

std::vector<std::pair<std::uint32_t, double>> Tape::parents(Var v) const {
  std::vector<std::pair<std::uint32_t, double>> out;
  for (auto e = offsets_[v.id]; e < offsets_[v.id + 1]; ++e) out.emplace_back(edges_[e].parent, edges_[e].partial);
  return out;
}

void Tape::check_same(Var a) const {
  if (a.tape != this) throw std::invalid_argument("operands live on different tapes");
}

Var Tape::unary(double value, Var a, double da) {
  check_same(a);
  edges_.push_back({da, a.id});
  return end_node(value);
}

Var Tape::binary(double value, Var a, double da, Var b, double db) {
  check_same(a);
  check_same(b);
  edges_.push_back({da, a.id});
  edges_.push_back({db, b.id});
  return end_node(value);
}

Var Tape::end_node(double value) {
  values_.push_back(value);
  offsets_.push_back(static_cast<std::uint32_t>(edges_.size()));
  return {this, static_cast<std::uint32_t>(values_.size() - 1)};
}

Gradients Tape::backward(Var root) const {
  check_same(root);
  std::vector<double> grads(root.id + 1, 0.0);
  grads[root.id] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    const double g = grads[i];
    if (std::isnan(g)) throw GradientError("NaN gradient at node " + std::to_string(i), static_cast<std::uint32_t>(i));
    if (g == 0.0) continue;
    for (auto e = offsets_[i]; e < offsets_[i + 1]; ++e) grads[edges_[e].parent] += edges_[e].partial * g;
  }
  return Gradients(std::move(grads));
}

Var operator+(Var a, Var b) { return a.tape->binary(a.value() + b.value(), a, 1.0, b, 1.0); }
Var operator+(Var a, double b) { return a.tape->unary(a.value() + b, a, 1.0); }
Var operator+(double a, Var b) { return b + a; }
Var operator-(Var a, Var b) { return a.tape->binary(a.value() - b.value(), a, 1.0, b, -1.0); }
Var operator-(Var a, double b) { return a.tape->unary(a.value() - b, a, 1.0); }
Var operator-(double a, Var b) { return b.tape->unary(a - b.value(), b, -1.0); }
Var operator*(Var a, Var b) { return a.tape->binary(a.value() * b.value(), a, b.value(), b, a.value()); }
Var operator*(Var a, double b) { return a.tape->unary(a.value() * b, a, b); }
Var operator*(double a, Var b) { return b * a; }
Var operator-(Var a) { return a.tape->unary(-a.value(), a, -1.0); }

Var operator/(Var a, Var b) {
  const double bv = b.value();
  if (bv == 0.0) throw DomainError("division by zero at node " + std::to_string(b.id));
  const double q = a.value() / bv;
  return a.tape->binary(q, a, 1.0 / bv, b, -q / bv);
}

Var operator/(Var a, double b) {
  if (b == 0.0) throw DomainError("division by zero constant");
  return a.tape->unary(a.value() / b, a, 1.0 / b);
}

Var operator/(double a, Var b) {
  const double bv = b.value();
  if (bv == 0.0) throw DomainError("division by zero at node " + std::to_string(b.id));
  const double q = a / bv;
  return b.tape->unary(q, b, -q / bv);
}

Var tanh(Var a) {
  const double t = std::tanh(a.value());
  return a.tape->unary(t, a, 1.0 - t * t);
}

Var exp(Var a) {
  const double e = std::exp(a.value());
  return a.tape->unary(e, a, e);
}

Var log(Var a) {
  const double v = a.value();
  if (!(v > 0.0)) throw DomainError("ln of non-positive value " + std::to_string(v) + " at node " + std::to_string(a.id));
  return a.tape->unary(std::log(v), a, 1.0 / v);
}

Var abs(Var a) {
  const double v = a.value();
  const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return a.tape->unary(std::abs(v), a, s);
}

Var sqrt(Var a) {
  const double v = a.value();
  if (!(v > 0.0)) throw DomainError("sqrt of non-positive value " + std::to_string(v) + " at node " + std::to_string(a.id));
  const double r = std::sqrt(v);
  return a.tape->unary(r, a, 0.5 / r);
}

Var square(Var a) {
  const double v = a.value();
  return a.tape->unary(v * v, a, 2.0 * v);
}

Var max(Var a, Var b) {
  // ties go to the first operand
  return a.value() >= b.value() ? a.tape->binary(a.value(), a, 1.0, b, 0.0)
                                : a.tape->binary(b.value(), a, 0.0, b, 1.0);
}

Var max(Var a, double b) {
  const double v = a.value();
  return v >= b ? a.tape->unary(v, a, 1.0) : a.tape->unary(b, a, 0.0);
}

Var Tape::dot_nodes(std::span<const Var> a, std::span<const Var> b) {
  const std::size_t n = a.size();
  Edge* e = edges_.grow(2 * n);
  const double* v = values_.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double av = v[a[i].id];
    const double bv = v[b[i].id];
    acc += av * bv;
    e[2 * i] = {bv, a[i].id};
    e[2 * i + 1] = {av, b[i].id};
  }
  return end_node(acc);
}

Var Tape::dot_mixed(std::span<const double> a, std::span<const Var> b) {
  const std::size_t n = a.size();
  Edge* e = edges_.grow(n);
  const double* v = values_.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += a[i] * v[b[i].id];
    e[i] = {a[i], b[i].id};
  }
  return end_node(acc);
}

Var Tape::sum_nodes(std::span<const Var> a) {
  Edge* e = edges_.grow(a.size());
  const double* v = values_.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += v[a[i].id];
    e[i] = {1.0, a[i].id};
  }
  return end_node(acc);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("dot: size mismatch or empty operands");
  if (a[0].tape != b[0].tape) throw std::invalid_argument("operands live on different tapes");
  return a[0].tape->dot_nodes(a, b);
}

Var dot(std::span<const double> a, std::span<const Var> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("dot: size mismatch or empty operands");
  return b[0].tape->dot_mixed(a, b);
}

Var sum(std::span<const Var> a) {
  if (a.empty()) throw std::invalid_argument("sum: empty operand");
  return a[0].tape->sum_nodes(a);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v;
  return acc;
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("central_difference: step must be positive");
  std::vector<double> p(point.begin(), point.end());
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(p);
    p[i] = orig - h;
    const double fm = f(p);
    p[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("central_difference: non-finite function value at coordinate " + std::to_string(i));
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_grad, std::span<const double> point, double h) {
  if (analytic_grad.size() != point.size()) throw std::invalid_argument("finite_diff_check: gradient size mismatch");
  const auto numeric = central_difference(f, point, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double err = std::abs(analytic_grad[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_diff_check(const TapeFunction& f, std::span<const double> point, double h) {
  auto evaluate = [&f](std::span<const double> p) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(p.size());
    for (double v : p) leaves.push_back(tape.variable(v));
    return f(tape, leaves).value();
  };

  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (double v : point) leaves.push_back(tape.variable(v));
  const Var root = f(tape, leaves);
  if (!std::isfinite(root.value())) throw std::domain_error("finite_diff_check: non-finite function value");
  const Gradients g = tape.backward(root);
  std::vector<double> analytic;
  analytic.reserve(leaves.size());
  for (const Var& leaf : leaves) analytic.push_back(g[leaf]);
  return finite_diff_check(evaluate, analytic, point, h);
}

}  // namespace lyl
