#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lobdif/diffusion.hpp"
#include "lobdif/ingest.hpp"
#include "lobdif/model.hpp"

namespace lobdif::sampler {

struct SamplerConfig {
    int tau = 1;             // skip stride, must divide K
    bool stochastic = false; // adds the sigma_k noise term
    std::uint64_t seed = 0;
};

struct Prediction {
    double dt_seconds = 0.0;
    int cls = 0;
    double raw_t = 0.0;
    std::vector<double> raw_e;
};

/// eps_theta(x_k, k) as a flat [t, e...] vector; conditioning is bound inside.
using NoiseFn = std::function<std::vector<double>(const diffusion::DiffusionState& x, int k)>;
/// Called with (k, x_k) for every visited step, starting with k = K.
using StepObserver = std::function<void(int k, const diffusion::DiffusionState& x)>;

/// Ancestral step k -> k-1:
/// x_{k-1} = (x_k - (1-alpha_k)/sqrt(1-abar_k) eps_theta) / sqrt(alpha_k) + sqrt(var_post_k) z,
/// with z = 0 when `stochastic` is off or k = 1.
[[nodiscard]] diffusion::DiffusionState reverse_step(const diffusion::DiffusionState& x_k, int k, const NoiseFn& eps_fn,
                                                     const diffusion::Schedule& schedule, num::Rng& rng,
                                                     bool stochastic);

/// Skip-step sampling over the pairs (K, K-tau), ..., (tau, 0):
/// x_s = sqrt(abar_s) x0_hat + sqrt(1 - abar_s - sigma_k^2) eps_theta + sigma_k z,
/// x0_hat = (x_k - sqrt(1 - abar_k) eps_theta) / sqrt(abar_k).
/// sigma_k^2 = var_post_k when `stochastic` is set, else 0; the final pair is
/// always noise-free.
[[nodiscard]] diffusion::DiffusionState sample_skip(const diffusion::DiffusionState& x_K, const NoiseFn& eps_fn,
                                                    const diffusion::Schedule& schedule, int tau, num::Rng& rng,
                                                    bool stochastic = false, const StepObserver& observer = {});

/// The steps sample_skip visits, K first and 0 last.
[[nodiscard]] std::vector<int> visited_steps(int K, int tau);

/// argmax of the event channel; ties go to the lowest class index.
[[nodiscard]] int decode_class(std::span<const double> raw_e);
[[nodiscard]] Prediction decode(const diffusion::DiffusionState& x0, const ingest::NormStats& norm);

/// Trained model + schedule + normalization, with reusable graphs. Not
/// thread-safe; use one instance per thread.
class Predictor {
public:
    Predictor(const model::Model& model, const diffusion::Schedule& schedule, const ingest::NormStats& norm);

    /// Runs encoder, draws x_K from `rng`, denoises and decodes.
    [[nodiscard]] Prediction predict(std::span<const ingest::Event> context, const SamplerConfig& config, num::Rng& rng,
                                     const StepObserver& observer = {});
    /// Denoiser evaluations since construction.
    [[nodiscard]] std::size_t evaluations() const noexcept { return noise_.evaluations(); }

private:
    const model::Model& model_;
    const diffusion::Schedule& schedule_;
    ingest::NormStats norm_;
    model::ConditionEncoder encoder_;
    model::NoisePredictor noise_;
};

/// RNG stream for window `window_index` under `seed`.
[[nodiscard]] num::Rng window_rng(std::uint64_t seed, std::uint64_t window_index);

[[nodiscard]] Prediction predict_next(std::span<const ingest::Event> context, const model::Model& model,
                                      const diffusion::Schedule& schedule, const SamplerConfig& config,
                                      const ingest::NormStats& norm);

struct TraceRow {
    std::size_t window_id = 0;
    int k = 0;
    double raw_t = 0.0;
    int cls = 0;
};

/// Partial denoising states at `checkpoints` for every context window.
[[nodiscard]] std::vector<TraceRow> trace_denoising(const std::vector<ingest::TrainingPair>& windows,
                                                    const model::Model& model, const diffusion::Schedule& schedule,
                                                    const ingest::NormStats& norm, int tau,
                                                    const std::vector<int>& checkpoints, std::uint64_t seed);

/// CSV with header `window_id,k,raw_t,class`.
[[nodiscard]] std::string write_trace_csv(const std::vector<TraceRow>& rows);

} // namespace lobdif::sampler
