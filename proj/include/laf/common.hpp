#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace laf {

// Error hierarchy. Every failure the library raises derives from laf::Error;
// the category() string is stable and is what the CLI prints.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& msg)
        : std::runtime_error(category + ": " + msg), category_(std::move(category)) {}
    const std::string& category() const { return category_; }

private:
    std::string category_;
};

#define LAF_DEFINE_ERROR(NAME, CATEGORY)                                     \
    class NAME : public Error {                                              \
    public:                                                                  \
        explicit NAME(const std::string& msg) : Error(CATEGORY, msg) {}      \
    }

LAF_DEFINE_ERROR(InvalidArgument, "invalid argument");
LAF_DEFINE_ERROR(InvalidDataset, "invalid dataset");
LAF_DEFINE_ERROR(FormatError, "format error");
LAF_DEFINE_ERROR(UnsupportedVersion, "unsupported version");
LAF_DEFINE_ERROR(UndefinedMetric, "undefined metric");
LAF_DEFINE_ERROR(DegenerateVariance, "degenerate variance");
LAF_DEFINE_ERROR(DegenerateGeometry, "degenerate geometry");
LAF_DEFINE_ERROR(DegenerateActivation, "degenerate activation");

#undef LAF_DEFINE_ERROR

// Deterministic RNG. mt19937_64 plus hand-rolled transforms, because the
// std::*_distribution classes are implementation-defined and would break
// bit-level reproducibility across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1). 53-bit mantissa method.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    uint64_t uniform_int(uint64_t n);

    // Standard normal via Box-Muller, pair cached.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates, descending index order.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// Combine a base seed with a stream index into a fresh seed. SplitMix64 mix.
uint64_t derive_seed(uint64_t base, uint64_t stream);

// Environment override used by the CLI: if LAF_SEED is set, it replaces the
// configured seed everywhere. Returns true and fills 'seed' when present.
bool env_seed_override(uint64_t& seed);

// Write 'contents' to 'path' atomically (temp file in same directory, then
// rename). Raises FormatError on IO failure.
void atomic_write_file(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace laf
