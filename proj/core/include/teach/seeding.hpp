#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace teach {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t splitmix64(std::uint64_t x);

/// Order-sensitive combination of two seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// FNV-1a over the bytes of `tag`, so named streams get stable ids.
std::uint64_t tag_hash(std::string_view tag);

/// Independent generator for a named sub-stream of `seed`.
Rng stream_rng(std::uint64_t seed, std::string_view tag);

}  // namespace teach
