#pragma once

// Shared deterministic primitives: hashing, seeding, and sampling helpers.
// All randomness in the toolkit flows through std::mt19937_64 with the
// distributions below, so identical seeds give identical streams on every
// platform (the standard pins the engine's bit stream; the standard library's
// distribution objects are implementation-defined and are not used).

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rheval {

inline constexpr std::string_view kCodeVersion = "0.1.0";

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seed combinator for per-cell RNG streams.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

inline uint64_t mix_seed(uint64_t a, std::string_view b) {
    return mix_seed(a, fnv1a64(b));
}

// Uniform double in [0, 1) from the top 53 bits of the engine output.
inline double uniform_double(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller without cached state; consumes exactly two engine outputs.
inline double normal_double(std::mt19937_64& rng) {
    double u1 = uniform_double(rng);
    double u2 = uniform_double(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Categorical sample from unnormalized logits at the given temperature.
inline size_t sample_logits(std::mt19937_64& rng, std::span<const double> logits,
                            double temperature) {
    if (logits.empty()) throw std::invalid_argument("sample_logits: empty logits");
    if (temperature <= 0.0) throw std::invalid_argument("sample_logits: temperature must be > 0");
    double max_logit = logits[0];
    for (double l : logits) max_logit = std::max(max_logit, l);
    std::vector<double> w(logits.size());
    double total = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp((logits[i] - max_logit) / temperature);
        total += w[i];
    }
    double u = uniform_double(rng) * total;
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u < acc) return i;
    }
    return w.size() - 1;
}

inline size_t sample_uniform_index(std::mt19937_64& rng, size_t n) {
    if (n == 0) throw std::invalid_argument("sample_uniform_index: n == 0");
    // Rejection-free modulo is fine here; n is tiny relative to 2^64.
    return static_cast<size_t>(rng() % n);
}

}  // namespace rheval
