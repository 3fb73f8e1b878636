#pragma once

#include <cstdint>

#include "lobdif/tensor.hpp"

namespace lobdif::num {

/// Counter-based generator: every draw is a pure function of (key, counter),
/// so independent streams can be split off without touching the parent.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept;

    /// Child stream keyed by `stream_id`; the parent's counter is not advanced.
    [[nodiscard]] Rng derive(std::uint64_t stream_id) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal() noexcept;
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }
    static Rng from_state(std::uint64_t key, std::uint64_t counter) noexcept;

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    Rng(std::uint64_t key, std::uint64_t counter, bool) noexcept : key_(key), counter_(counter) {}

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

/// i.i.d. standard normal entries.
[[nodiscard]] Tensor gaussian(Rng& rng, const Shape& shape);

} // namespace lobdif::num
