#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace conseg {

// Deterministic RNG: mt19937_64 engine (its output sequence is pinned by the
// language standard) with hand-rolled distributions, so streams are
// bit-identical across platforms and standard-library versions.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_(seed), draws_(0) {}

    uint64_t next_u64() {
        ++draws_;
        return eng_();
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive on both ends, unbiased via rejection
    int64_t uniform_int(int64_t lo, int64_t hi);

    // Box-Muller, one value per call (the pair's second half is discarded to
    // keep the draw count independent of call parity)
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t seed() const { return seed_; }
    uint64_t draw_count() const { return draws_; }

    // "seed:count" token sufficient to reconstruct the stream position
    std::string state_token() const;

    // Stable derivation of sub-stream seeds from a master seed and a tag.
    static uint64_t derive(uint64_t seed, const std::string& tag);

  private:
    std::mt19937_64 eng_;
    uint64_t seed_;
    uint64_t draws_;
};

}  // namespace conseg
