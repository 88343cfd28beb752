#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cwp {

// Deterministic random stream. All sampling goes through explicit
// transforms of mt19937 output so two runs with the same seed produce
// bitwise-identical values regardless of the standard library's
// distribution implementations.
class Rng {
  public:
    explicit Rng(uint32_t seed) : engine_(seed), seed_(seed) {}

    uint32_t next_u32() { return engine_(); }

    // Uniform in [0,1) with 24 bits of mantissa.
    float uniform() { return static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes two uniforms per pair, caches the second.
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        const float r = std::sqrt(-2.0f * std::log(u1));
        const float a = 6.28318530717958647692f * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    float normal(float mean, float stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n). Modulo bias is irrelevant here; what
    // matters is that the result is reproducible.
    uint32_t below(uint32_t n) { return n == 0 ? 0 : engine_() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent child stream (per-record degradation noise,
    // data workers) without disturbing the parent's sequence.
    Rng split(uint32_t salt) const {
        return Rng(seed_ ^ (salt * 2654435761u + 0x9e3779b9u));
    }

  private:
    std::mt19937 engine_;
    uint32_t seed_;
    float spare_ = 0.0f;
    bool has_spare_ = false;
};

}  // namespace cwp
