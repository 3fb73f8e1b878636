#include "lobdif/rng.hpp"

#include <cmath>
#include <numbers>

namespace lobdif::num {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed + kGamma)), counter_(0) {}

Rng Rng::derive(std::uint64_t stream_id) const noexcept {
    return Rng(mix64(key_ ^ mix64(stream_id * kGamma + 0x632BE59BD9B4E019ULL)), 0, true);
}

Rng Rng::from_state(std::uint64_t key, std::uint64_t counter) noexcept { return Rng(key, counter, true); }

std::uint64_t Rng::next_u64() noexcept {
    // Two rounds of the splitmix finalizer over (key, counter).
    const std::uint64_t c = counter_++;
    return mix64(mix64(key_ + c * kGamma) ^ key_);
}

double Rng::uniform() noexcept {
    // 53 random bits shifted into (0, 1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() noexcept {
    // Box-Muller, cosine branch only; two counters per draw keeps streams stateless.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());
    // Rejection to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t draw = next_u64();
    while (draw >= limit) draw = next_u64();
    return lo + static_cast<std::int64_t>(draw % span);
}

Tensor gaussian(Rng& rng, const Shape& shape) {
    Tensor out(shape);
    for (double& v : out.values()) v = rng.normal();
    return out;
}

} // namespace lobdif::num
