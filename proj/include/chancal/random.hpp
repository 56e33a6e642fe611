#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace chancal {

using Rng = std::mt19937_64;

// Stream seed for a (master, a, b) triple, e.g. (run seed, iteration, candidate).
// Streams depend only on the triple, never on scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

} // namespace chancal
