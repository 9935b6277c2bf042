#include "lyaplearn/net.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lyaplearn/random.hpp"

namespace lyl {

namespace {

void validate_sizes(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("network needs at least two layer sizes");
  for (std::size_t s : sizes)
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
}

template <class S>
S activate(Activation a, S x) {
  using std::tanh;
  return a == Activation::tanh ? tanh(x) : x;
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

template <class S>
std::size_t Network<S>::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) n += sizes[k + 1] * sizes[k] + sizes[k + 1];
  return n;
}

template struct Network<double>;
template struct Network<Var>;

NetworkParams zero_network(std::span<const std::size_t> sizes, Activation hidden) {
  validate_sizes(sizes);
  NetworkParams net;
  net.sizes.assign(sizes.begin(), sizes.end());
  net.hidden = hidden;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k)
    net.layers.push_back({MatrixD(sizes[k + 1], sizes[k], 0.0), std::vector<double>(sizes[k + 1], 0.0)});
  return net;
}

NetworkParams init_network(std::span<const std::size_t> sizes, std::uint64_t seed, Activation hidden) {
  NetworkParams net = zero_network(sizes, hidden);
  Engine rng = make_stream(seed, "init");
  for (auto& layer : net.layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (double& w : layer.weight.data()) w = scale * normal(rng);
  }
  return net;
}

std::vector<double> flatten(const NetworkParams& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const auto& layer : net.layers) {
    flat.insert(flat.end(), layer.weight.data().begin(), layer.weight.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

std::vector<Var> flatten(const TapeNetwork& net) {
  std::vector<Var> flat;
  flat.reserve(net.parameter_count());
  for (const auto& layer : net.layers) {
    flat.insert(flat.end(), layer.weight.data().begin(), layer.weight.data().end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
  return flat;
}

NetworkParams unflatten(std::span<const std::size_t> sizes, Activation hidden, std::span<const double> flat) {
  NetworkParams net = zero_network(sizes, hidden);
  if (flat.size() != net.parameter_count())
    throw std::invalid_argument("unflatten: expected " + std::to_string(net.parameter_count()) + " values, got " +
                                std::to_string(flat.size()));
  std::size_t pos = 0;
  for (auto& layer : net.layers) {
    for (double& w : layer.weight.data()) w = flat[pos++];
    for (double& b : layer.bias) b = flat[pos++];
  }
  return net;
}

TapeNetwork bind(const NetworkParams& net, Tape& tape) {
  TapeNetwork out;
  out.sizes = net.sizes;
  out.hidden = net.hidden;
  for (const auto& layer : net.layers) {
    Layer<Var> bound;
    std::vector<Var> w;
    w.reserve(layer.weight.data().size());
    for (double v : layer.weight.data()) w.push_back(tape.variable(v));
    bound.weight = Matrix<Var>(layer.weight.rows(), layer.weight.cols(), std::move(w));
    for (double v : layer.bias) bound.bias.push_back(tape.variable(v));
    out.layers.push_back(std::move(bound));
  }
  return out;
}

void assign(TapeNetwork& net, std::span<const double> flat) {
  const auto leaves = flatten(net);
  if (leaves.size() != flat.size()) throw std::invalid_argument("assign: parameter count mismatch");
  for (std::size_t i = 0; i < leaves.size(); ++i) leaves[i].tape->set_value(leaves[i], flat[i]);
}

NetworkParams snapshot(const TapeNetwork& net) {
  std::vector<double> flat;
  for (const Var& v : flatten(net)) flat.push_back(v.value());
  return unflatten(net.sizes, net.hidden, flat);
}

template <class S>
std::vector<S> forward(const Network<S>& net, std::span<const S> x, std::type_identity_t<ForwardCache<S>>* cache,
                       const DropoutMask* dropout) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) + " entries, network expects " +
                                std::to_string(net.input_dim()));
  if (cache) cache->hidden.clear();
  std::vector<S> h(x.begin(), x.end());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    const bool is_output = k + 1 == net.layers.size();
    std::vector<S> next;
    next.reserve(layer.weight.rows());
    for (std::size_t i = 0; i < layer.weight.rows(); ++i) {
      S pre = dot(std::span<const S>(layer.weight.row(i)), std::span<const S>(h)) + layer.bias[i];
      next.push_back(is_output ? pre : activate(net.hidden, pre));
    }
    if (!is_output) {
      if (cache) cache->hidden.push_back(next);
      if (dropout) {
        const auto& m = (*dropout)[k];
        for (std::size_t i = 0; i < next.size(); ++i) next[i] = next[i] * m[i];
      }
    }
    h = std::move(next);
  }
  return h;
}

namespace {

// In-place u <- D_k u with D_k = diag(1 - h^2) (identity for linear hidden layers).
template <class S>
void apply_derivative(Activation a, const std::vector<S>& h, std::vector<S>& u) {
  if (a != Activation::tanh) return;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = (1.0 - square(h[i])) * u[i];
}

template <class S>
std::vector<S> mat_vec(const Matrix<S>& w, const std::vector<S>& u) {
  std::vector<S> out;
  out.reserve(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) out.push_back(dot(std::span<const S>(w.row(i)), std::span<const S>(u)));
  return out;
}

}  // namespace

template <class S>
Matrix<S> input_jacobian(const Network<S>& net, const ForwardCache<S>& cache) {
  if (cache.hidden.size() + 1 != net.layers.size()) throw std::invalid_argument("input_jacobian: stale forward cache");
  const std::size_t d_in = net.input_dim();
  const std::size_t d_out = net.output_dim();
  // Columns of W_1, then propagated column by column.
  std::vector<std::vector<S>> cols(d_in);
  const auto& first = net.layers.front().weight;
  for (std::size_t j = 0; j < d_in; ++j) {
    cols[j].reserve(first.rows());
    for (std::size_t i = 0; i < first.rows(); ++i) cols[j].push_back(first(i, j));
  }
  // D_k multiplies entrywise by a shared factor; build it once per layer.
  for (std::size_t k = 1; k < net.layers.size(); ++k) {
    const auto& h = cache.hidden[k - 1];
    if (net.hidden == Activation::tanh) {
      std::vector<S> deriv;
      deriv.reserve(h.size());
      for (const S& hv : h) deriv.push_back(1.0 - square(hv));
      for (auto& c : cols)
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = deriv[i] * c[i];
    }
    for (auto& c : cols) c = mat_vec(net.layers[k].weight, c);
  }
  std::vector<S> data;
  data.reserve(d_out * d_in);
  for (std::size_t i = 0; i < d_out; ++i)
    for (std::size_t j = 0; j < d_in; ++j) data.push_back(cols[j][i]);
  return Matrix<S>(d_out, d_in, std::move(data));
}

template <class S>
Matrix<S> input_jacobian(const Network<S>& net, std::span<const S> x) {
  ForwardCache<S> cache;
  forward(net, x, &cache);
  return input_jacobian(net, cache);
}

template <class S>
std::vector<S> jacobian_vector(const Network<S>& net, const ForwardCache<S>& cache, std::span<const S> v) {
  if (v.size() != net.input_dim()) throw std::invalid_argument("jacobian_vector: dimension mismatch");
  if (cache.hidden.size() + 1 != net.layers.size()) throw std::invalid_argument("jacobian_vector: stale forward cache");
  std::vector<S> u = mat_vec(net.layers.front().weight, std::vector<S>(v.begin(), v.end()));
  for (std::size_t k = 1; k < net.layers.size(); ++k) {
    apply_derivative(net.hidden, cache.hidden[k - 1], u);
    u = mat_vec(net.layers[k].weight, u);
  }
  return u;
}

template std::vector<double> forward(const Network<double>&, std::span<const double>, ForwardCache<double>*,
                                     const DropoutMask*);
template std::vector<Var> forward(const Network<Var>&, std::span<const Var>, ForwardCache<Var>*, const DropoutMask*);
template Matrix<double> input_jacobian(const Network<double>&, const ForwardCache<double>&);
template Matrix<Var> input_jacobian(const Network<Var>&, const ForwardCache<Var>&);
template Matrix<double> input_jacobian(const Network<double>&, std::span<const double>);
template Matrix<Var> input_jacobian(const Network<Var>&, std::span<const Var>);
template std::vector<double> jacobian_vector(const Network<double>&, const ForwardCache<double>&,
                                             std::span<const double>);
template std::vector<Var> jacobian_vector(const Network<Var>&, const ForwardCache<Var>&, std::span<const Var>);

void write_network(std::ostream& out, const NetworkParams& net) {
  out << "lyaplearn-network 1\n";
  out << "activation " << to_string(net.hidden) << "\n";
  out << "sizes";
  for (std::size_t s : net.sizes) out << ' ' << s;
  out << "\n";
  char buf[32];
  for (double v : flatten(net)) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << "\n";
  }
}

NetworkParams read_network(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "lyaplearn-network 1") throw std::runtime_error("network file: bad header");
  std::string key, act;
  if (!std::getline(in, line)) throw std::runtime_error("network file: missing activation");
  std::istringstream(line) >> key >> act;
  if (key != "activation") throw std::runtime_error("network file: expected activation line");
  if (!std::getline(in, line)) throw std::runtime_error("network file: missing sizes");
  std::istringstream sizes_line(line);
  sizes_line >> key;
  if (key != "sizes") throw std::runtime_error("network file: expected sizes line");
  std::vector<std::size_t> sizes;
  for (std::size_t s; sizes_line >> s;) sizes.push_back(s);
  std::vector<double> flat;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw std::runtime_error("network file: bad value '" + line + "'");
    flat.push_back(v);
  }
  return unflatten(sizes, activation_from_string(act), flat);
}

void save_network(const std::string& path, const NetworkParams& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_network(out, net);
}

NetworkParams load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_network(in);
}

}  // namespace lyl
