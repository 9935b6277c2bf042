#include "lyaplearn/random.hpp"

#include <cmath>
#include <numbers>

namespace lyl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(splitmix64(seed) ^ fnv1a(name));
}

Engine make_stream(std::uint64_t seed, std::string_view name) { return Engine(stream_seed(seed, name)); }

double uniform01(Engine& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

double uniform(Engine& engine, double lo, double hi) { return lo + (hi - lo) * uniform01(engine); }

double normal(Engine& engine) {
  // 1 - u keeps the log argument in (0, 1]
  const double u1 = 1.0 - uniform01(engine);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lyl
