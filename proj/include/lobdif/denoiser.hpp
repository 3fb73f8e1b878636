#pragma once

#include <string>
#include <vector>

#include "lobdif/encoder.hpp"
#include "lobdif/graph.hpp"
#include "lobdif/params.hpp"

namespace lobdif::denoiser {

enum class DenoiserKind {
    attention, // time/event attention over the two branch features
    mlp,       // 3-layer MLP ablation arm
    gru,       // recurrent ablation arm
};

[[nodiscard]] const char* kind_name(DenoiserKind kind) noexcept;
[[nodiscard]] DenoiserKind parse_kind(const std::string& name);

struct DenoiserConfig {
    int M = 64;
    int C = 4;
    int Mk = 0; // step-embedding width; 0 means M
    DenoiserKind kind = DenoiserKind::attention;

    [[nodiscard]] int step_width() const noexcept { return Mk > 0 ? Mk : M; }
    /// Width of h_{i-1} fed to the denoiser.
    [[nodiscard]] int condition_width() const noexcept { return kind == DenoiserKind::gru ? M : 3 * M; }
};

/// Sinusoidal embedding of the integer step k (same formula as time_encoding).
[[nodiscard]] std::vector<double> step_embedding(int k, int width);

void init_denoiser_params(num::ParamSet& params, const DenoiserConfig& config, num::Rng& rng);

struct NoisePrediction {
    double eps_t = 0.0;
    std::vector<double> eps_e;

    [[nodiscard]] std::vector<double> flat() const;
};

/// Conditioning graph nodes. For the gru arm `h_prev` is the recurrent
/// summary and the track rows are unused.
struct ConditionVars {
    num::Var h_prev;   // 1 x condition_width
    num::Var h_t_prev; // 1 x M
    num::Var h_e_prev; // 1 x M
};

struct DenoiserVars {
    num::Var x_t;     // 1 x 1 noisy time channel
    num::Var x_e;     // 1 x C noisy event channel
    num::Var phi_k;   // 1 x Mk step embedding
    num::Var omega_t; // attention arm only
    num::Var omega_e; // attention arm only
    num::Var x_hat;   // 1 x 2M branch features (attention and gru arms)
    num::Var eps;     // 1 x (1 + C), [eps_t | eps_e]
};

[[nodiscard]] DenoiserVars build_denoiser(num::Graph& graph, const DenoiserConfig& config, const ConditionVars& cond,
                                          const num::ParamSet& params, num::ParamSet* grads);

/// Recurrent summary used by the gru arm: a single-layer GRU over the rows of
/// `sequence` (L x M); returns the final hidden state.
[[nodiscard]] num::Var gru_summary(num::Graph& graph, num::Var sequence, int L, int M, const num::ParamSet& params,
                                   num::ParamSet* grads);

} // namespace lobdif::denoiser
