#pragma once

#include <cstdint>
#include <random>

namespace trialsent {

/// All stochastic choices in the pipeline draw from this engine so a single
/// seed fixes a run.
using Rng = std::mt19937_64;

/// Derives an independent stream for a named sub-stage from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace trialsent
