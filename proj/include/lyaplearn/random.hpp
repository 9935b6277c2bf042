#pragma once

// Seeded randomness. All draws go through std::mt19937_64; the conversions
// to uniform and normal variates are spelled out here so results do not
// depend on the standard library's distribution implementations.

#include <cstdint>
#include <random>
#include <string_view>

namespace lyl {

using Engine = std::mt19937_64;

/// Named stream derived from a run seed ("data", "init", "dropout", ...).
/// Streams with different names are decorrelated, so adding draws to one
/// consumer never shifts another's.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);
Engine make_stream(std::uint64_t seed, std::string_view name);

/// Uniform on [0, 1) with 53 random bits.
double uniform01(Engine& engine);
double uniform(Engine& engine, double lo, double hi);
/// Standard normal via Box-Muller.
double normal(Engine& engine);

}  // namespace lyl
