#pragma once

// Reverse-mode automatic differentiation over double-precision scalars.
//
// Every operation appends one node to a Tape. A node stores its value and a
// list of (parent id, local partial) edges. Parents always have smaller ids
// than their children, so a single reverse sweep over ids is a valid
// topological order for backpropagation.
//
// Fused n-ary nodes (dot, sum) are ordinary nodes with many parents; they
// keep the tape small for the matrix-vector products of a dense network.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyl {

class Tape;

/// Raised when a primitive is evaluated outside its domain (ln/sqrt of a
/// non-positive number, division by zero).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by backward when a NaN gradient is produced.
class GradientError : public std::runtime_error {
 public:
  GradientError(const std::string& what, std::uint32_t node)
      : std::runtime_error(what), node_(node) {}
  std::uint32_t node() const noexcept { return node_; }

 private:
  std::uint32_t node_;
};

/// Handle to a node on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  double value() const;
};

/// dRoot/dNode for every node at or below the root.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<double> grads) : grads_(std::move(grads)) {}

  double operator[](Var v) const { return v.id < grads_.size() ? grads_[v.id] : 0.0; }
  double at(std::uint32_t id) const { return id < grads_.size() ? grads_[id] : 0.0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::vector<double> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf node (a parameter or an input).
  Var variable(double value);
  /// Alias of variable(); constants are leaves whose gradient is ignored.
  Var constant(double value) { return variable(value); }

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  /// Current size; pass to truncate() to discard everything recorded later.
  std::size_t checkpoint() const noexcept { return size(); }
  void truncate(std::size_t checkpoint);

  double value(std::uint32_t id) const { return values_[id]; }
  double value(Var v) const { return values_[v.id]; }

  /// Overwrite the value of a leaf. Nodes that depend on it are not
  /// recomputed, so this is only meaningful right after truncate().
  void set_value(Var leaf, double value);
  bool is_leaf(Var v) const { return offsets_[v.id] == offsets_[v.id + 1]; }

  /// Parents of a node as (id, local partial) pairs.
  std::vector<std::pair<std::uint32_t, double>> parents(Var v) const;

  /// Reverse sweep from root. grad(root) == 1 exactly.
  Gradients backward(Var root) const;

  // Node construction used by the operators below.
  Var unary(double value, Var a, double da);
  Var binary(double value, Var a, double da, Var b, double db);

  /// Closes a node whose edges were appended since the previous node.
  Var end_node(double value);

  // Fused kernels behind the free dot()/sum() functions.
  Var dot_nodes(std::span<const Var> a, std::span<const Var> b);
  Var dot_mixed(std::span<const double> a, std::span<const Var> b);
  Var sum_nodes(std::span<const Var> a);

 private:
  struct Edge {
    double partial;
    std::uint32_t parent;
  };

  // Growable edge storage that leaves new slots uninitialised.
  class EdgeBuffer {
   public:
    std::size_t size() const noexcept { return size_; }
    Edge* data() noexcept { return data_.get(); }
    const Edge* data() const noexcept { return data_.get(); }
    const Edge& operator[](std::size_t i) const { return data_[i]; }
    Edge* grow(std::size_t n);
    void push_back(const Edge& e) { *grow(1) = e; }
    void resize_down(std::size_t n) { size_ = n; }

   private:
    std::unique_ptr<Edge[]> data_;
    std::size_t size_ = 0;
    std::size_t capacity_ = 0;
  };

  void check_same(Var a) const;

  std::vector<double> values_;
  std::vector<std::uint32_t> offsets_{0};
  EdgeBuffer edges_;
};

inline double Var::value() const { return tape->value(id); }

// Primitive operations. Mixed Var/double overloads record a single-parent node.
Var operator+(Var a, Var b);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var operator-(Var a);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var sqrt(Var a);
Var square(Var a);
Var max(Var a, Var b);
Var max(Var a, double b);

/// sum_i a_i * b_i as a single node.
Var dot(std::span<const Var> a, std::span<const Var> b);
Var dot(std::span<const double> a, std::span<const Var> b);
/// sum_i a_i as a single node; summation order is index order.
Var sum(std::span<const Var> a);

// Double overloads so templated numerical code can be written once for both
// double and Var.
inline double square(double a) { return a * a; }
double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);

inline double value_of(double x) { return x; }
inline double value_of(Var x) { return x.value(); }

/// Scalar function recorded on a tape from a vector of leaf parameters.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over coordinates of |analytic - central difference| /
/// max(1, |central difference|). The analytic gradient comes from backward
/// on a fresh tape; the differences from re-recording f at p +- h e_i.
double finite_diff_check(const TapeFunction& f, std::span<const double> point, double h);

/// Same measure against a caller-supplied analytic gradient.
double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic_grad,
                         std::span<const double> point, double h);

/// Central-difference gradient of f at point.
std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> point, double h);

}  // namespace lyl
