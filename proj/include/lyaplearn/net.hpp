#pragma once

// Feed-forward network used as a discrete dynamical map x_{t+1} = F(x_t).
//
// Hidden layers apply tanh (or identity), the output layer is affine. The
// input Jacobian is built explicitly as
//
//     J = W_L * D_{L-1} * W_{L-1} * ... * D_1 * W_1,   D_k = diag(1 - h_k^2)
//
// from the cached hidden activations h_k. With Var parameters every entry of
// J is a tape node, so first-order backward through any scalar function of J
// reaches the weights without nested differentiation.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "lyaplearn/diffcore.hpp"
#include "lyaplearn/matrix.hpp"

namespace lyl {

enum class Activation { tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

template <class S>
struct Layer {
  Matrix<S> weight;  // (size_{k+1} x size_k)
  std::vector<S> bias;
};

template <class S>
struct Network {
  std::vector<std::size_t> sizes;
  Activation hidden = Activation::tanh;
  std::vector<Layer<S>> layers;

  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }
  std::size_t parameter_count() const;
};

/// Values-only parameters: immutable snapshots, shareable across threads.
using NetworkParams = Network<double>;
/// Parameters bound to leaves of a tape.
using TapeNetwork = Network<Var>;

/// Post-activation values of every hidden layer from the last forward pass.
template <class S>
struct ForwardCache {
  std::vector<std::vector<S>> hidden;
};

/// Per hidden layer multipliers (0 or 1/(1-p)) for inverted dropout.
using DropoutMask = std::vector<std::vector<double>>;

/// Weights ~ N(0, 1/fan_in), biases zero, drawn from the "init" stream of seed.
NetworkParams init_network(std::span<const std::size_t> sizes, std::uint64_t seed,
                           Activation hidden = Activation::tanh);

/// Zero-initialised network of the given shape.
NetworkParams zero_network(std::span<const std::size_t> sizes, Activation hidden = Activation::tanh);

/// Flat parameter order: per layer, weights row-major then bias.
std::vector<double> flatten(const NetworkParams& net);
std::vector<Var> flatten(const TapeNetwork& net);
NetworkParams unflatten(std::span<const std::size_t> sizes, Activation hidden, std::span<const double> flat);

/// Creates one leaf per parameter on the tape, in flat order.
TapeNetwork bind(const NetworkParams& net, Tape& tape);
/// Overwrites the leaf values of a bound network (flat order).
void assign(TapeNetwork& net, std::span<const double> flat);
NetworkParams snapshot(const TapeNetwork& net);

template <class S>
std::vector<S> forward(const Network<S>& net, std::span<const S> x, std::type_identity_t<ForwardCache<S>>* cache = nullptr,
                       const DropoutMask* dropout = nullptr);

/// d x d Jacobian of the output with respect to the input at the point the
/// cache was produced for.
template <class S>
Matrix<S> input_jacobian(const Network<S>& net, const ForwardCache<S>& cache);

template <class S>
Matrix<S> input_jacobian(const Network<S>& net, std::span<const S> x);

/// Jacobian-vector product J(x) v from a forward cache.
template <class S>
std::vector<S> jacobian_vector(const Network<S>& net, const ForwardCache<S>& cache, std::span<const S> v);

/// Draws an inverted-dropout mask for the hidden layers of net.
template <class S, class Rng>
DropoutMask draw_dropout_mask(const Network<S>& net, double p, Rng&& uniform01);

// Text snapshot: header line, activation, sizes, then one value per line with
// 17 significant digits so a round trip is bit-exact.
void write_network(std::ostream& out, const NetworkParams& net);
NetworkParams read_network(std::istream& in);
void save_network(const std::string& path, const NetworkParams& net);
NetworkParams load_network(const std::string& path);

template <class S, class Rng>
DropoutMask draw_dropout_mask(const Network<S>& net, double p, Rng&& uniform01) {
  DropoutMask mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t k = 1; k + 1 < net.sizes.size(); ++k) {
    std::vector<double> m(net.sizes[k]);
    for (double& v : m) v = uniform01() < p ? 0.0 : keep_scale;
    mask.push_back(std::move(m));
  }
  return mask;
}

}  // namespace lyl
