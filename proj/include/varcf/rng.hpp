#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "varcf/tensor.hpp"

namespace varcf {

// xoshiro256** seeded through splitmix64. Normals come from Box-Muller with the
// second value of each pair cached, so the cache is part of the replayable state.
class Rng {
public:
    struct State {
        std::array<std::uint64_t, 4> words{};
        bool has_spare = false;
        std::uint64_t spare_bits = 0;

        friend bool operator==(const State&, const State&) = default;
    };

    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Unbiased draw from [0, bound); bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept;
    double normal() noexcept;

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    State state() const noexcept { return state_; }
    void restore(const State& s) noexcept { state_ = s; }

    // Text form "s0:s1:s2:s3:spare_flag:spare_bits" (hex words).
    std::string serialize() const;
    static Rng deserialize(const std::string& text);

private:
    std::uint64_t seed_ = 0;
    State state_;
};

// Independent stream derived from a base seed and a stream label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

Matrix sample_standard_normal(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace varcf
