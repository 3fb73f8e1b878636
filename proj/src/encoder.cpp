#include "lobdif/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lobdif/init.hpp"

namespace lobdif::encoder {

using num::Graph;
using num::ParamSet;
using num::Tensor;
using num::Var;

void EncoderConfig::validate() const {
    if (M < 2 || M % 2 != 0) throw std::invalid_argument("encoder: M must be even and at least 2");
    if (L < 1) throw std::invalid_argument("encoder: L must be at least 1");
    if (C < 1) throw std::invalid_argument("encoder: C must be at least 1");
    if (!use_event_embedding && C > M) throw std::invalid_argument("encoder: one-hot ablation needs C <= M");
}

std::vector<double> time_encoding(double t, int M) {
    std::vector<double> out(static_cast<std::size_t>(M));
    for (int j = 1; j <= M; ++j) {
        const double angle = t / std::pow(10000.0, static_cast<double>(j - 1) / static_cast<double>(M));
        out[static_cast<std::size_t>(j - 1)] = (j % 2 == 1) ? std::cos(angle) : std::sin(angle);
    }
    return out;
}

void init_encoder_params(ParamSet& params, const EncoderConfig& config, num::Rng& rng, bool with_tracks) {
    config.validate();
    const auto M = static_cast<std::size_t>(config.M);
    const auto C = static_cast<std::size_t>(config.C);
    if (config.use_event_embedding) params.add("enc.event_emb", init::xavier(rng, C, M));
    if (!config.use_time_encoding) {
        params.add("enc.time_proj.w", init::xavier(rng, 1, M));
        params.add("enc.time_proj.b", Tensor::matrix(1, M));
    }
    if (!with_tracks) return;
    for (const char* track : {"te", "t", "e"}) {
        const std::string p = std::string("enc.") + track + ".";
        params.add(p + "wq", init::xavier(rng, M, M));
        params.add(p + "wk", init::xavier(rng, M, M));
        params.add(p + "wv", init::xavier(rng, M, M));
        params.add(p + "ff.w1", init::xavier(rng, M, 4 * M));
        params.add(p + "ff.b1", Tensor::matrix(1, 4 * M));
        params.add(p + "ff.w2", init::xavier(rng, 4 * M, M));
        params.add(p + "ff.b2", Tensor::matrix(1, M));
    }
}

std::vector<double> event_embedding(int e, const EncoderConfig& config, const ParamSet& params) {
    if (e < 0 || e >= config.C) {
        throw std::out_of_range("event_embedding: class " + std::to_string(e) + " outside [0," +
                                std::to_string(config.C) + ")");
    }
    const auto M = static_cast<std::size_t>(config.M);
    if (!config.use_event_embedding) {
        std::vector<double> out(M, 0.0);
        out[static_cast<std::size_t>(e)] = 1.0;
        return out;
    }
    const Tensor& table = params.get("enc.event_emb");
    const auto row = static_cast<std::size_t>(e);
    return {table.data().begin() + static_cast<std::ptrdiff_t>(row * M),
            table.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * M)};
}

Var bind_param(Graph& graph, const ParamSet& params, ParamSet* grads, const std::string& name) {
    return graph.param(name, params.get(name), grads != nullptr ? &grads->get(name) : nullptr);
}

ContextInputs declare_context_inputs(Graph& graph, const EncoderConfig& config) {
    config.validate();
    const auto L = static_cast<std::size_t>(config.L);
    const auto M = static_cast<std::size_t>(config.M);
    const auto C = static_cast<std::size_t>(config.C);
    ContextInputs in;
    in.time = graph.input("ctx.time", {L, config.use_time_encoding ? M : std::size_t{1}});
    in.event = graph.input("ctx.event", {L, config.use_event_embedding ? C : M});
    return in;
}

void fill_context_inputs(Graph& graph, const ContextInputs& inputs, std::span<const ingest::Event> context,
                         const EncoderConfig& config) {
    if (context.size() != static_cast<std::size_t>(config.L)) {
        throw std::invalid_argument("encoder: context has " + std::to_string(context.size()) + " events, expected " +
                                    std::to_string(config.L));
    }
    const auto M = static_cast<std::size_t>(config.M);
    std::vector<double> inv_freq(M);
    for (std::size_t j = 0; j < M; ++j) {
        inv_freq[j] = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(config.M));
    }
    const double origin = context.front().t;
    Tensor& time = graph.input_value(inputs.time);
    Tensor& event = graph.input_value(inputs.event);
    event.fill(0.0);
    const std::size_t event_cols = event.cols();
    for (std::size_t i = 0; i < context.size(); ++i) {
        const double rel = context[i].t - origin;
        if (config.use_time_encoding) {
            double* row = time.data().data() + i * M;
            for (std::size_t j = 0; j < M; ++j) {
                // j is 0-based here, so even j is the cosine entry
                row[j] = (j % 2 == 0) ? std::cos(rel * inv_freq[j]) : std::sin(rel * inv_freq[j]);
            }
        } else {
            time[i] = rel;
        }
        const int cls = context[i].e;
        if (cls < 0 || cls >= config.C) {
            throw std::out_of_range("encoder: context class " + std::to_string(cls) + " out of range");
        }
        event[i * event_cols + static_cast<std::size_t>(cls)] = 1.0;
    }
}

Embeddings embed_context(Graph& graph, const ContextInputs& inputs, const EncoderConfig& config,
                         const ParamSet& params, ParamSet* grads) {
    Embeddings emb;
    if (config.use_time_encoding) {
        emb.phi_t = inputs.time;
    } else {
        const Var w = bind_param(graph, params, grads, "enc.time_proj.w");
        const Var b = bind_param(graph, params, grads, "enc.time_proj.b");
        emb.phi_t = graph.add(graph.matmul(inputs.time, w), b, "enc.phi_t");
    }
    if (config.use_event_embedding) {
        emb.phi_e = graph.matmul(inputs.event, bind_param(graph, params, grads, "enc.event_emb"), "enc.phi_e");
    } else {
        emb.phi_e = inputs.event;
    }
    emb.phi_te = graph.add(emb.phi_t, emb.phi_e, "enc.phi_te");
    return emb;
}

TrackVars self_attention_track(Graph& graph, Var x, const std::string& prefix, const EncoderConfig& config,
                               const ParamSet& params, ParamSet* grads, bool last_row_only) {
    const Var wq = bind_param(graph, params, grads, prefix + "wq");
    const Var wk = bind_param(graph, params, grads, prefix + "wk");
    const Var wv = bind_param(graph, params, grads, prefix + "wv");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.M));

    TrackVars out;
    Var attended;
    if (last_row_only) {
        // q K^T = (q Wk^T) X^T and a V = (a X) Wv, so K and V are never formed.
        const auto L = static_cast<std::size_t>(config.L);
        const Var q = graph.matmul(graph.slice_rows(x, L - 1, L), wq, prefix + "q");
        const Var qk = graph.matmul_nt(q, wk);
        const Var scores = graph.affine(graph.matmul_nt(qk, x), inv_sqrt_d, 0.0, prefix + "scores");
        out.attention = graph.row_softmax(scores, prefix + "attn");
        attended = graph.matmul(graph.matmul(out.attention, x), wv, prefix + "s");
    } else {
        const Var q = graph.matmul(x, wq, prefix + "q");
        const Var k = graph.matmul(x, wk, prefix + "k");
        const Var v = graph.matmul(x, wv, prefix + "v");
        const Var scores = graph.affine(graph.matmul_nt(q, k), inv_sqrt_d, 0.0, prefix + "scores");
        out.attention = graph.row_softmax(scores, prefix + "attn");
        attended = graph.matmul(out.attention, v, prefix + "s");
    }
    const Var hidden = graph.relu(
        graph.add(graph.matmul(attended, bind_param(graph, params, grads, prefix + "ff.w1")),
                  bind_param(graph, params, grads, prefix + "ff.b1")),
        prefix + "ff.hidden");
    const Var ff = graph.add(graph.matmul(hidden, bind_param(graph, params, grads, prefix + "ff.w2")),
                             bind_param(graph, params, grads, prefix + "ff.b2"));
    out.output = graph.add(attended, ff, prefix + "out");
    return out;
}

EncoderVars build_encoder(Graph& graph, const EncoderConfig& config, const ParamSet& params, ParamSet* grads,
                          bool last_row_only) {
    EncoderVars vars;
    vars.inputs = declare_context_inputs(graph, config);
    vars.embeddings = embed_context(graph, vars.inputs, config, params, grads);
    vars.te = self_attention_track(graph, vars.embeddings.phi_te, "enc.te.", config, params, grads, last_row_only);
    vars.t = self_attention_track(graph, vars.embeddings.phi_t, "enc.t.", config, params, grads, last_row_only);
    vars.e = self_attention_track(graph, vars.embeddings.phi_e, "enc.e.", config, params, grads, last_row_only);
    vars.h = graph.concat_cols({vars.te.output, vars.t.output, vars.e.output}, "enc.h");
    return vars;
}

namespace {

std::vector<double> last_row(const Tensor& t) {
    const std::size_t cols = t.cols();
    return {t.data().end() - static_cast<std::ptrdiff_t>(cols), t.data().end()};
}

} // namespace

std::vector<double> EncoderOutput::h_prev() const { return last_row(h); }
std::vector<double> EncoderOutput::h_t_prev() const { return last_row(h_t); }
std::vector<double> EncoderOutput::h_e_prev() const { return last_row(h_e); }

EncoderOutput encode_history(std::span<const ingest::Event> context, const EncoderConfig& config,
                             const ParamSet& params) {
    Graph graph;
    const EncoderVars vars = build_encoder(graph, config, params, nullptr, false);
    fill_context_inputs(graph, vars.inputs, context, config);
    graph.forward();
    return EncoderOutput{graph.value(vars.h), graph.value(vars.te.output), graph.value(vars.t.output),
                         graph.value(vars.e.output)};
}

} // namespace lobdif::encoder
