#pragma once

#include <vector>

#include "lobdif/rng.hpp"

namespace lobdif::diffusion {

/// Linear variance schedule. Arrays are indexed by step k = 0..K; entry 0 of
/// beta/alpha/var_post is unused (0, 1, 0) and alpha_bar[0] = 1.
struct Schedule {
    int K = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> var_post;
};

[[nodiscard]] Schedule make_schedule(int K, double beta_start, double beta_end);

/// Noisy (t, e) pair at diffusion step k. At k = 0 the t channel holds the
/// standardized log10 inter-arrival and e the signed one-hot class vector.
struct DiffusionState {
    double t = 0.0;
    std::vector<double> e;
    int k = 0;

    [[nodiscard]] std::size_t dim() const noexcept { return 1 + e.size(); }
    [[nodiscard]] std::vector<double> flat() const;
    static DiffusionState from_flat(const std::vector<double>& values, int k);
};

/// Signed one-hot: +1 at `cls`, -1 elsewhere.
[[nodiscard]] std::vector<double> signed_one_hot(int cls, int num_classes);
[[nodiscard]] DiffusionState clean_state(double standardized_t, int cls, int num_classes);

/// Closed-form jump x0 -> x_k: sqrt(abar_k) * x0 + sqrt(1 - abar_k) * eps.
/// `eps` is laid out as [t, e...]. k = 0 returns x0 unchanged.
[[nodiscard]] DiffusionState forward_sample(const DiffusionState& x0, int k, const std::vector<double>& eps,
                                            const Schedule& schedule);

/// Iterative chain x_k = sqrt(1 - beta_k) x_{k-1} + sqrt(beta_k) eps_k, returning
/// the states for k = 1..K.
[[nodiscard]] std::vector<DiffusionState> forward_chain(const DiffusionState& x0, const Schedule& schedule,
                                                        num::Rng& rng);

} // namespace lobdif::diffusion
