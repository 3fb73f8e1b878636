#include "lobdif/model.hpp"

#include <stdexcept>

namespace lobdif::model {

using num::Graph;
using num::ParamSet;
using num::Tensor;
using num::Var;

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
    Model m;
    m.config = config;
    num::Rng rng(seed);
    num::Rng enc_rng = rng.derive(1);
    num::Rng den_rng = rng.derive(2);
    const bool tracks = config.kind != denoiser::DenoiserKind::gru;
    encoder::init_encoder_params(m.params, config.encoder(), enc_rng, tracks);
    denoiser::init_denoiser_params(m.params, config.denoiser(), den_rng);
    return m;
}

diffusion::DiffusionState target_state(const ingest::TrainingPair& pair, const ingest::NormStats& norm,
                                       int num_classes) {
    if (pair.context.empty()) throw std::invalid_argument("target_state: empty context");
    const double gap = pair.target.t - pair.context.back().t;
    return diffusion::clean_state(norm.standardize(gap), pair.target.e, num_classes);
}

namespace {

struct ConditionNodes {
    encoder::ContextInputs inputs;
    denoiser::ConditionVars cond;
};

// Context window -> conditioning vectors, last row only.
ConditionNodes build_condition(Graph& g, const ModelConfig& config, const ParamSet& params, ParamSet* grads) {
    ConditionNodes out;
    const auto M = static_cast<std::size_t>(config.M);
    if (config.kind == denoiser::DenoiserKind::gru) {
        out.inputs = encoder::declare_context_inputs(g, config.encoder());
        const auto emb = encoder::embed_context(g, out.inputs, config.encoder(), params, grads);
        out.cond.h_prev = denoiser::gru_summary(g, emb.phi_te, config.L, config.M, params, grads);
        out.cond.h_t_prev = out.cond.h_prev;
        out.cond.h_e_prev = out.cond.h_prev;
        return out;
    }
    const auto enc = encoder::build_encoder(g, config.encoder(), params, grads, true);
    out.inputs = enc.inputs;
    out.cond.h_prev = enc.h;
    out.cond.h_t_prev = g.slice_cols(enc.h, M, 2 * M, "enc.h_t_prev");
    out.cond.h_e_prev = g.slice_cols(enc.h, 2 * M, 3 * M, "enc.h_e_prev");
    return out;
}

std::vector<double> to_vector(const Tensor& t) { return t.values(); }

void fill_state(Graph& g, const denoiser::DenoiserVars& vars, const diffusion::DiffusionState& x, int k, int C,
                int Mk) {
    if (x.e.size() != static_cast<std::size_t>(C)) throw std::invalid_argument("denoiser: event channel has wrong size");
    g.input_value(vars.x_t)[0] = x.t;
    Tensor& xe = g.input_value(vars.x_e);
    std::copy(x.e.begin(), x.e.end(), xe.data().begin());
    const auto phi = denoiser::step_embedding(k, Mk);
    Tensor& pk = g.input_value(vars.phi_k);
    std::copy(phi.begin(), phi.end(), pk.data().begin());
}

} // namespace

ConditionEncoder::ConditionEncoder(const Model& model) : config_(model.config) {
    auto nodes = build_condition(graph_, config_, model.params, nullptr);
    inputs_ = nodes.inputs;
    h_prev_ = nodes.cond.h_prev;
    h_t_ = nodes.cond.h_t_prev;
    h_e_ = nodes.cond.h_e_prev;
}

Conditioning ConditionEncoder::encode(std::span<const ingest::Event> context) {
    encoder::fill_context_inputs(graph_, inputs_, context, config_.encoder());
    graph_.forward();
    return {to_vector(graph_.value(h_prev_)), to_vector(graph_.value(h_t_)), to_vector(graph_.value(h_e_))};
}

NoisePredictor::NoisePredictor(const Model& model) : config_(model.config) {
    const auto dc = config_.denoiser();
    const auto M = static_cast<std::size_t>(config_.M);
    h_prev_ = graph_.input("cond.h_prev", {1, static_cast<std::size_t>(dc.condition_width())});
    h_t_ = graph_.input("cond.h_t_prev", {1, M});
    h_e_ = graph_.input("cond.h_e_prev", {1, M});
    vars_ = denoiser::build_denoiser(graph_, dc, {h_prev_, h_t_, h_e_}, model.params, nullptr);
}

denoiser::NoisePrediction NoisePredictor::predict(const Conditioning& cond, const diffusion::DiffusionState& x,
                                                  int k) {
    auto copy_in = [&](Var v, const std::vector<double>& src) {
        Tensor& dst = graph_.input_value(v);
        if (src.size() != dst.size()) {
            throw std::invalid_argument("denoiser: conditioning input '" + graph_.name(v) + "' has wrong size");
        }
        std::copy(src.begin(), src.end(), dst.data().begin());
    };
    copy_in(h_prev_, cond.h_prev);
    if (config_.kind == denoiser::DenoiserKind::gru) {
        graph_.input_value(h_t_).fill(0.0);
        graph_.input_value(h_e_).fill(0.0);
    } else {
        copy_in(h_t_, cond.h_t_prev);
        copy_in(h_e_, cond.h_e_prev);
    }
    fill_state(graph_, vars_, x, k, config_.C, config_.denoiser().step_width());
    graph_.forward();
    ++evaluations_;
    const Tensor& eps = graph_.value(vars_.eps);
    denoiser::NoisePrediction out;
    out.eps_t = eps[0];
    out.eps_e.assign(eps.data().begin() + 1, eps.data().end());
    return out;
}

LossGraph::LossGraph(const Model& model, ParamSet* grads) : config_(model.config) {
    graph_.set_input_gradients(false);
    auto nodes = build_condition(graph_, config_, model.params, grads);
    inputs_ = nodes.inputs;
    vars_ = denoiser::build_denoiser(graph_, config_.denoiser(), nodes.cond, model.params, grads);
    eps_target_ = graph_.input("loss.eps", {1, static_cast<std::size_t>(1 + config_.C)});
    loss_ = graph_.sum_square_diff(vars_.eps, eps_target_, "loss");
}

double LossGraph::evaluate(const ingest::TrainingPair& pair, const ingest::NormStats& norm, int k,
                           const std::vector<double>& eps, const diffusion::Schedule& schedule) {
    if (k < 1 || k > schedule.K) throw std::out_of_range("loss: step k out of range");
    if (eps.size() != static_cast<std::size_t>(1 + config_.C)) throw std::invalid_argument("loss: noise has wrong size");
    encoder::fill_context_inputs(graph_, inputs_, pair.context, config_.encoder());
    const auto x0 = target_state(pair, norm, config_.C);
    const auto xk = diffusion::forward_sample(x0, k, eps, schedule);
    fill_state(graph_, vars_, xk, k, config_.C, config_.denoiser().step_width());
    Tensor& target = graph_.input_value(eps_target_);
    std::copy(eps.begin(), eps.end(), target.data().begin());
    graph_.forward();
    return graph_.value(loss_)[0];
}

double LossGraph::accumulate(const ingest::TrainingPair& pair, const ingest::NormStats& norm, int k,
                             const std::vector<double>& eps, const diffusion::Schedule& schedule, double weight) {
    const double loss = evaluate(pair, norm, k, eps, schedule);
    const Tensor seed = Tensor::scalar(weight);
    graph_.backward(loss_, &seed);
    return loss;
}

} // namespace lobdif::model
