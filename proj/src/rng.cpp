#include "varcf/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "varcf/error.hpp"

namespace varcf {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& w : state_.words) w = splitmix64(x);
}

std::uint64_t Rng::next_u64() noexcept {
    auto& s = state_.words;
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
    // Rejection on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound + 1) % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x > limit);
    return x % bound;
}

double Rng::normal() noexcept {
    if (state_.has_spare) {
        state_.has_spare = false;
        return std::bit_cast<double>(state_.spare_bits);
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    state_.has_spare = true;
    state_.spare_bits = std::bit_cast<std::uint64_t>(radius * std::sin(angle));
    return radius * std::cos(angle);
}

std::string Rng::serialize() const {
    std::ostringstream out;
    out << std::hex;
    for (auto w : state_.words) out << w << ':';
    out << (state_.has_spare ? 1 : 0) << ':' << state_.spare_bits;
    return out.str();
}

Rng Rng::deserialize(const std::string& text) {
    std::vector<std::uint64_t> parts;
    std::stringstream in(text);
    std::string token;
    while (std::getline(in, token, ':')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stoull(token, &used, 16));
            if (used != token.size()) throw std::invalid_argument(token);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Format, "malformed rng state '" + text + "'");
        }
    }
    if (parts.size() != 6 || parts[4] > 1) {
        throw Error(ErrorKind::Format, "malformed rng state '" + text + "'");
    }
    Rng rng;
    for (std::size_t i = 0; i < 4; ++i) rng.state_.words[i] = parts[i];
    rng.state_.has_spare = parts[4] == 1;
    rng.state_.spare_bits = parts[5];
    return rng;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
    std::uint64_t x = base ^ (0xd1b54a32d192ed03ULL * (stream + 1));
    splitmix64(x);
    return splitmix64(x);
}

Matrix sample_standard_normal(Rng& rng, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw Error(ErrorKind::Dimension, "sample_standard_normal needs a non-empty shape, got (" +
                                              std::to_string(rows) + "x" + std::to_string(cols) + ")");
    }
    Matrix out(rows, cols);
    for (double& v : out.values()) v = rng.normal();
    return out;
}

}  // namespace varcf
