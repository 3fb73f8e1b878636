#include "lobdif/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lobdif::sampler {

using diffusion::DiffusionState;
using diffusion::Schedule;

namespace {

std::vector<double> checked_eps(const NoiseFn& eps_fn, const DiffusionState& x, int k) {
    auto eps = eps_fn(x, k);
    if (eps.size() != x.dim()) throw std::invalid_argument("sampler: noise prediction has wrong dimension");
    return eps;
}

} // namespace

DiffusionState reverse_step(const DiffusionState& x_k, int k, const NoiseFn& eps_fn, const Schedule& schedule,
                            num::Rng& rng, bool stochastic) {
    if (k < 1 || k > schedule.K) throw std::out_of_range("reverse_step: k must lie in [1, K]");
    const auto i = static_cast<std::size_t>(k);
    const auto eps = checked_eps(eps_fn, x_k, k);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha[i]);
    const double coeff = (1.0 - schedule.alpha[i]) / std::sqrt(1.0 - schedule.alpha_bar[i]);
    const double sigma = (stochastic && k > 1) ? std::sqrt(schedule.var_post[i]) : 0.0;

    auto x = x_k.flat();
    for (std::size_t d = 0; d < x.size(); ++d) {
        x[d] = inv_sqrt_alpha * (x[d] - coeff * eps[d]);
        if (sigma > 0.0) x[d] += sigma * rng.normal();
    }
    return DiffusionState::from_flat(x, k - 1);
}

std::vector<int> visited_steps(int K, int tau) {
    if (tau < 1 || tau > K) throw std::invalid_argument("tau must lie in [1, K]");
    if (K % tau != 0) {
        throw std::invalid_argument("tau=" + std::to_string(tau) + " does not divide K=" + std::to_string(K));
    }
    std::vector<int> steps;
    for (int k = K; k >= 0; k -= tau) steps.push_back(k);
    return steps;
}

DiffusionState sample_skip(const DiffusionState& x_K, const NoiseFn& eps_fn, const Schedule& schedule, int tau,
                           num::Rng& rng, bool stochastic, const StepObserver& observer) {
    const auto steps = visited_steps(schedule.K, tau);
    DiffusionState x = x_K;
    x.k = schedule.K;
    if (observer) observer(x.k, x);
    for (std::size_t p = 0; p + 1 < steps.size(); ++p) {
        const int k = steps[p];
        const int s = steps[p + 1];
        const bool final_pair = s == 0;
        const double abar_k = schedule.alpha_bar[static_cast<std::size_t>(k)];
        const double abar_s = schedule.alpha_bar[static_cast<std::size_t>(s)];
        const double sigma2 = (stochastic && !final_pair) ? schedule.var_post[static_cast<std::size_t>(k)] : 0.0;
        const double dir = std::sqrt(std::max(0.0, 1.0 - abar_s - sigma2));
        const double sigma = std::sqrt(sigma2);

        const auto eps = checked_eps(eps_fn, x, k);
        auto values = x.flat();
        for (std::size_t d = 0; d < values.size(); ++d) {
            const double x0_hat = (values[d] - std::sqrt(1.0 - abar_k) * eps[d]) / std::sqrt(abar_k);
            values[d] = std::sqrt(abar_s) * x0_hat + dir * eps[d];
            if (sigma > 0.0) values[d] += sigma * rng.normal();
        }
        x = DiffusionState::from_flat(values, s);
        if (observer) observer(s, x);
    }
    return x;
}

int decode_class(std::span<const double> raw_e) {
    if (raw_e.empty()) throw std::invalid_argument("decode_class: empty event channel");
    // max_element returns the first maximum
    return static_cast<int>(std::max_element(raw_e.begin(), raw_e.end()) - raw_e.begin());
}

Prediction decode(const DiffusionState& x0, const ingest::NormStats& norm) {
    Prediction p;
    p.raw_t = x0.t;
    p.raw_e = x0.e;
    p.cls = decode_class(x0.e);
    p.dt_seconds = norm.destandardize(x0.t);
    if (!std::isfinite(p.dt_seconds)) throw std::domain_error("decode: non-finite inter-arrival");
    return p;
}

Predictor::Predictor(const model::Model& model, const Schedule& schedule, const ingest::NormStats& norm)
    : model_(model), schedule_(schedule), norm_(norm), encoder_(model), noise_(model) {
    if (!model.params.all_finite()) throw std::domain_error("predictor: model parameters are not finite");
}

Prediction Predictor::predict(std::span<const ingest::Event> context, const SamplerConfig& config, num::Rng& rng,
                              const StepObserver& observer) {
    const model::Conditioning cond = encoder_.encode(context);
    const int C = model_.config.C;
    DiffusionState x_K;
    x_K.k = schedule_.K;
    x_K.t = rng.normal();
    x_K.e.resize(static_cast<std::size_t>(C));
    for (double& v : x_K.e) v = rng.normal();
    const NoiseFn eps_fn = [&](const DiffusionState& x, int k) { return noise_.predict(cond, x, k).flat(); };
    const DiffusionState x0 = sample_skip(x_K, eps_fn, schedule_, config.tau, rng, config.stochastic, observer);
    return decode(x0, norm_);
}

num::Rng window_rng(std::uint64_t seed, std::uint64_t window_index) { return num::Rng(seed).derive(window_index); }

Prediction predict_next(std::span<const ingest::Event> context, const model::Model& model, const Schedule& schedule,
                        const SamplerConfig& config, const ingest::NormStats& norm) {
    Predictor predictor(model, schedule, norm);
    num::Rng rng = window_rng(config.seed, 0);
    return predictor.predict(context, config, rng);
}

std::vector<TraceRow> trace_denoising(const std::vector<ingest::TrainingPair>& windows, const model::Model& model,
                                      const Schedule& schedule, const ingest::NormStats& norm, int tau,
                                      const std::vector<int>& checkpoints, std::uint64_t seed) {
    const auto visited = visited_steps(schedule.K, tau);
    for (int c : checkpoints) {
        if (std::find(visited.begin(), visited.end(), c) == visited.end()) {
            throw std::invalid_argument("trace: checkpoint " + std::to_string(c) + " is not a visited step for tau=" +
                                        std::to_string(tau));
        }
    }
    Predictor predictor(model, schedule, norm);
    SamplerConfig config{tau, false, seed};
    std::vector<TraceRow> rows;
    rows.reserve(windows.size() * checkpoints.size());
    for (std::size_t w = 0; w < windows.size(); ++w) {
        std::vector<TraceRow> local;
        const StepObserver observer = [&](int k, const DiffusionState& x) {
            if (std::find(checkpoints.begin(), checkpoints.end(), k) != checkpoints.end()) {
                local.push_back({w, k, x.t, decode_class(x.e)});
            }
        };
        num::Rng rng = window_rng(seed, w);
        (void)predictor.predict(windows[w].context, config, rng, observer);
        // emit in checkpoint order
        for (int c : checkpoints) {
            for (const TraceRow& r : local) {
                if (r.k == c) rows.push_back(r);
            }
        }
    }
    return rows;
}

std::string write_trace_csv(const std::vector<TraceRow>& rows) {
    std::string out = "window_id,k,raw_t,class\n";
    for (const TraceRow& r : rows) {
        out += std::to_string(r.window_id) + ',' + std::to_string(r.k) + ',' + ingest::format_double(r.raw_t) + ',' +
               std::to_string(r.cls) + '\n';
    }
    return out;
}

} // namespace lobdif::sampler
