#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lobdif/denoiser.hpp"
#include "lobdif/diffusion.hpp"
#include "lobdif/encoder.hpp"
#include "lobdif/ingest.hpp"

namespace lobdif::model {

struct ModelConfig {
    int L = 50;
    int M = 64;
    int C = 4;
    int Mk = 0;
    bool use_time_encoding = true;
    bool use_event_embedding = true;
    denoiser::DenoiserKind kind = denoiser::DenoiserKind::attention;

    [[nodiscard]] encoder::EncoderConfig encoder() const {
        return {M, L, C, use_time_encoding, use_event_embedding};
    }
    [[nodiscard]] denoiser::DenoiserConfig denoiser() const { return {M, C, Mk, kind}; }
};

/// Encoder + denoiser weights under one configuration.
struct Model {
    ModelConfig config;
    num::ParamSet params;

    static Model initialize(const ModelConfig& config, std::uint64_t seed);
};

/// Conditioning vectors for one context window (last encoder row).
struct Conditioning {
    std::vector<double> h_prev;
    std::vector<double> h_t_prev;
    std::vector<double> h_e_prev;
};

/// The x0 the diffusion target is built from: standardized log10 gap to the
/// target and its signed one-hot class.
[[nodiscard]] diffusion::DiffusionState target_state(const ingest::TrainingPair& pair, const ingest::NormStats& norm,
                                                     int num_classes);

/// Inference-time encoder. Holds a reusable graph bound to the model's
/// parameters; one instance per thread.
class ConditionEncoder {
public:
    explicit ConditionEncoder(const Model& model);
    [[nodiscard]] Conditioning encode(std::span<const ingest::Event> context);

private:
    ModelConfig config_;
    num::Graph graph_;
    encoder::ContextInputs inputs_;
    num::Var h_prev_, h_t_, h_e_;
};

/// Inference-time eps_theta(x_k, h_{i-1}, k). One instance per thread.
class NoisePredictor {
public:
    explicit NoisePredictor(const Model& model);

    /// `x.k` is ignored; the step index passed here is the one embedded.
    [[nodiscard]] denoiser::NoisePrediction predict(const Conditioning& cond, const diffusion::DiffusionState& x,
                                                    int k);

    [[nodiscard]] const num::Graph& graph() const noexcept { return graph_; }
    [[nodiscard]] const denoiser::DenoiserVars& vars() const noexcept { return vars_; }
    [[nodiscard]] std::size_t evaluations() const noexcept { return evaluations_; }

private:
    ModelConfig config_;
    num::Graph graph_;
    num::Var h_prev_, h_t_, h_e_;
    denoiser::DenoiserVars vars_;
    std::size_t evaluations_ = 0;
};

/// Training graph: context window + noised target -> ||eps - eps_theta||^2.
class LossGraph {
public:
    /// Gradients accumulate into `grads` (may be null for forward-only use).
    LossGraph(const Model& model, num::ParamSet* grads);

    /// Loss for one pair at step k with noise `eps` ([t, e...]).
    double evaluate(const ingest::TrainingPair& pair, const ingest::NormStats& norm, int k,
                    const std::vector<double>& eps, const diffusion::Schedule& schedule);
    /// evaluate() followed by backward; gradients are scaled by `weight`.
    double accumulate(const ingest::TrainingPair& pair, const ingest::NormStats& norm, int k,
                      const std::vector<double>& eps, const diffusion::Schedule& schedule, double weight);

    [[nodiscard]] num::Graph& graph() noexcept { return graph_; }
    [[nodiscard]] num::Var loss() const noexcept { return loss_; }
    [[nodiscard]] const denoiser::DenoiserVars& denoiser_vars() const noexcept { return vars_; }

private:
    ModelConfig config_;
    num::Graph graph_;
    encoder::ContextInputs inputs_;
    denoiser::DenoiserVars vars_;
    num::Var eps_target_;
    num::Var loss_;
};

} // namespace lobdif::model
