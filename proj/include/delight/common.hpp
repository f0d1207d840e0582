#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace delight {

// Error taxonomy mirrored by the CLI exit codes:
//   contract_error   -> 4 (a documented invariant or precondition was violated)
//   bad_input_error  -> 3 (unreadable or malformed user input)
//   missing_artifact_error -> 2 (a required file such as a checkpoint is absent)
class contract_error : public std::runtime_error {
public:
    explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

class bad_input_error : public std::runtime_error {
public:
    explicit bad_input_error(const std::string& msg) : std::runtime_error(msg) {}
};

class missing_artifact_error : public std::runtime_error {
public:
    explicit missing_artifact_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw contract_error(msg);
}

template <typename T>
inline T clamp(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

inline float clamp01(float v) { return clamp(v, 0.0f, 1.0f); }

// FNV-1a, used for config hashes and deterministic id -> stream derivation.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), seed);
}

}  // namespace delight
