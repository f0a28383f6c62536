#pragma once

#include <cstdint>

namespace gvci {

// Independent per-subsystem seeds from one root seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    std::uint64_t z = root + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace seed_stream {
constexpr std::uint64_t synth = 1;
constexpr std::uint64_t split = 2;
constexpr std::uint64_t refine = 3;
constexpr std::uint64_t model_init = 4;
constexpr std::uint64_t train = 5;
constexpr std::uint64_t refine_sampling = 6;
constexpr std::uint64_t estimate = 7;
}  // namespace seed_stream

}  // namespace gvci
