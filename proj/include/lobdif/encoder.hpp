#pragma once

#include <span>
#include <vector>

#include "lobdif/graph.hpp"
#include "lobdif/ingest.hpp"
#include "lobdif/params.hpp"
#include "lobdif/rng.hpp"

namespace lobdif::encoder {

struct EncoderConfig {
    int M = 64; // embedding width, also the attention key width
    int L = 50;
    int C = 4;
    bool use_time_encoding = true;
    bool use_event_embedding = true;

    void validate() const;
};

/// Sinusoidal encoding; 1-based entry j is cos(t / 10000^((j-1)/M)) for odd j
/// and sin(...) for even j.
[[nodiscard]] std::vector<double> time_encoding(double t, int M);

/// Adds the encoder's parameters (prefix "enc.") to `params`. Without
/// `with_tracks` only the embedding layers are created.
void init_encoder_params(num::ParamSet& params, const EncoderConfig& config, num::Rng& rng, bool with_tracks = true);

/// Row `e` of the learned event embedding.
[[nodiscard]] std::vector<double> event_embedding(int e, const EncoderConfig& config, const num::ParamSet& params);

/// Binds a named parameter as a graph leaf, with its gradient sink when
/// `grads` is given.
num::Var bind_param(num::Graph& graph, const num::ParamSet& params, num::ParamSet* grads, const std::string& name);

/// Graph inputs carrying one context window.
struct ContextInputs {
    num::Var time;  // L x M sinusoids, or L x 1 raw relative times for the ablation arm
    num::Var event; // L x C one-hot, or L x M padded one-hot when the embedding is disabled
};

[[nodiscard]] ContextInputs declare_context_inputs(num::Graph& graph, const EncoderConfig& config);
/// Times are taken relative to the first event of the window.
void fill_context_inputs(num::Graph& graph, const ContextInputs& inputs, std::span<const ingest::Event> context,
                         const EncoderConfig& config);

struct Embeddings {
    num::Var phi_t;  // L x M
    num::Var phi_e;  // L x M
    num::Var phi_te; // L x M, phi_t + phi_e
};

[[nodiscard]] Embeddings embed_context(num::Graph& graph, const ContextInputs& inputs, const EncoderConfig& config,
                                       const num::ParamSet& params, num::ParamSet* grads);

struct TrackVars {
    num::Var attention; // rows x L attention weights
    num::Var output;    // rows x M
};

/// Single-head scaled dot-product self-attention followed by a residual
/// position-wise feed-forward layer. With `last_row_only` only the final
/// query row is computed, which is all the conditioning vector needs.
[[nodiscard]] TrackVars self_attention_track(num::Graph& graph, num::Var x, const std::string& prefix,
                                             const EncoderConfig& config, const num::ParamSet& params,
                                             num::ParamSet* grads, bool last_row_only);

struct EncoderVars {
    ContextInputs inputs;
    Embeddings embeddings;
    TrackVars te, t, e;
    num::Var h; // rows x 3M, [h_te | h_t | h_e]
};

[[nodiscard]] EncoderVars build_encoder(num::Graph& graph, const EncoderConfig& config, const num::ParamSet& params,
                                        num::ParamSet* grads, bool last_row_only);

struct EncoderOutput {
    num::Tensor h;    // L x 3M
    num::Tensor h_te; // L x M
    num::Tensor h_t;  // L x M
    num::Tensor h_e;  // L x M

    /// Last rows: h_{i-1} and its time/event tracks.
    [[nodiscard]] std::vector<double> h_prev() const;
    [[nodiscard]] std::vector<double> h_t_prev() const;
    [[nodiscard]] std::vector<double> h_e_prev() const;
};

/// Full L-row encoding of a context window.
[[nodiscard]] EncoderOutput encode_history(std::span<const ingest::Event> context, const EncoderConfig& config,
                                           const num::ParamSet& params);

} // namespace lobdif::encoder
