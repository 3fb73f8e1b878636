#include "lobdif/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lobdif::diffusion {

Schedule make_schedule(int K, double beta_start, double beta_end) {
    if (K < 1) throw std::invalid_argument("make_schedule: K must be at least 1");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("make_schedule: need 0 < beta_start < beta_end < 1");
    }
    Schedule s;
    s.K = K;
    const auto n = static_cast<std::size_t>(K) + 1;
    s.beta.assign(n, 0.0);
    s.alpha.assign(n, 1.0);
    s.alpha_bar.assign(n, 1.0);
    s.var_post.assign(n, 0.0);
    for (int k = 1; k <= K; ++k) {
        const double frac = K == 1 ? 0.0 : static_cast<double>(k - 1) / static_cast<double>(K - 1);
        const auto i = static_cast<std::size_t>(k);
        // K == 1 cannot be strictly increasing; it uses beta_start alone
        s.beta[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[i] = 1.0 - s.beta[i];
        s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
        s.var_post[i] = (1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]) * s.beta[i];
    }
    return s;
}

std::vector<double> DiffusionState::flat() const {
    std::vector<double> out;
    out.reserve(dim());
    out.push_back(t);
    out.insert(out.end(), e.begin(), e.end());
    return out;
}

DiffusionState DiffusionState::from_flat(const std::vector<double>& values, int k) {
    if (values.empty()) throw std::invalid_argument("DiffusionState::from_flat: empty");
    DiffusionState s;
    s.t = values.front();
    s.e.assign(values.begin() + 1, values.end());
    s.k = k;
    return s;
}

std::vector<double> signed_one_hot(int cls, int num_classes) {
    if (cls < 0 || cls >= num_classes) {
        throw std::invalid_argument("signed_one_hot: class " + std::to_string(cls) + " out of range");
    }
    std::vector<double> v(static_cast<std::size_t>(num_classes), -1.0);
    v[static_cast<std::size_t>(cls)] = 1.0;
    return v;
}

DiffusionState clean_state(double standardized_t, int cls, int num_classes) {
    return DiffusionState{standardized_t, signed_one_hot(cls, num_classes), 0};
}

DiffusionState forward_sample(const DiffusionState& x0, int k, const std::vector<double>& eps,
                              const Schedule& schedule) {
    if (k < 0 || k > schedule.K) throw std::out_of_range("forward_sample: step " + std::to_string(k) + " out of range");
    if (eps.size() != x0.dim()) throw std::invalid_argument("forward_sample: noise has wrong dimension");
    const double abar = schedule.alpha_bar[static_cast<std::size_t>(k)];
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    DiffusionState out;
    out.k = k;
    out.t = signal * x0.t + noise * eps[0];
    out.e.resize(x0.e.size());
    for (std::size_t i = 0; i < x0.e.size(); ++i) out.e[i] = signal * x0.e[i] + noise * eps[i + 1];
    return out;
}

std::vector<DiffusionState> forward_chain(const DiffusionState& x0, const Schedule& schedule, num::Rng& rng) {
    std::vector<DiffusionState> chain;
    chain.reserve(static_cast<std::size_t>(schedule.K));
    DiffusionState x = x0;
    for (int k = 1; k <= schedule.K; ++k) {
        const double beta = schedule.beta[static_cast<std::size_t>(k)];
        const double keep = std::sqrt(1.0 - beta);
        const double noise = std::sqrt(beta);
        x.t = keep * x.t + noise * rng.normal();
        for (double& v : x.e) v = keep * v + noise * rng.normal();
        x.k = k;
        chain.push_back(x);
    }
    return chain;
}

} // namespace lobdif::diffusion
