#pragma once

#include <cmath>

#include "lobdif/rng.hpp"
#include "lobdif/tensor.hpp"

namespace lobdif::init {

/// Glorot-uniform fan_in x fan_out matrix.
inline num::Tensor xavier(num::Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    num::Tensor out = num::Tensor::matrix(fan_in, fan_out);
    for (double& v : out.values()) v = bound * (2.0 * rng.uniform() - 1.0);
    return out;
}

} // namespace lobdif::init
