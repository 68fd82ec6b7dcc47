#ifndef ESSAY_AUDIT_RNG_HPP
#define ESSAY_AUDIT_RNG_HPP

#include <cstdint>
#include <random>

namespace essay_audit {

// splitmix64 finalizer; used to derive independent per-task seeds so that
// parallel loops give results that do not depend on scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(mix_seed(seed, stream));
}

}  // namespace essay_audit

#endif
