#include "lobdif/denoiser.hpp"

#include <stdexcept>

#include "lobdif/init.hpp"

namespace lobdif::denoiser {

using encoder::bind_param;
using num::Graph;
using num::ParamSet;
using num::Tensor;
using num::Var;

const char* kind_name(DenoiserKind kind) noexcept {
    switch (kind) {
    case DenoiserKind::attention: return "attention";
    case DenoiserKind::mlp: return "mlp";
    case DenoiserKind::gru: return "gru";
    }
    return "?";
}

DenoiserKind parse_kind(const std::string& name) {
    if (name == "attention") return DenoiserKind::attention;
    if (name == "mlp") return DenoiserKind::mlp;
    if (name == "gru") return DenoiserKind::gru;
    throw std::invalid_argument("unknown denoiser kind '" + name + "'");
}

std::vector<double> step_embedding(int k, int width) { return encoder::time_encoding(static_cast<double>(k), width); }

std::vector<double> NoisePrediction::flat() const {
    std::vector<double> out{eps_t};
    out.insert(out.end(), eps_e.begin(), eps_e.end());
    return out;
}

void init_denoiser_params(ParamSet& params, const DenoiserConfig& config, num::Rng& rng) {
    const auto M = static_cast<std::size_t>(config.M);
    const auto C = static_cast<std::size_t>(config.C);
    const auto Mk = static_cast<std::size_t>(config.step_width());
    const auto cond = static_cast<std::size_t>(config.condition_width());
    switch (config.kind) {
    case DenoiserKind::attention:
        for (const char* which : {"omega_t", "omega_e"}) {
            const std::string p = std::string("den.") + which + ".";
            params.add(p + "w1", init::xavier(rng, cond + Mk, 2 * M));
            params.add(p + "b1", Tensor::matrix(1, 2 * M));
            params.add(p + "w2", init::xavier(rng, 2 * M, 2 * M));
            params.add(p + "b2", Tensor::matrix(1, 2 * M));
        }
        if (Mk != M) params.add("den.k_proj", init::xavier(rng, Mk, M));
        params.add("den.t_in.w", init::xavier(rng, 1, M));
        params.add("den.t_in.b", Tensor::matrix(1, M));
        params.add("den.t_ff.w", init::xavier(rng, M, M));
        params.add("den.t_ff.b", Tensor::matrix(1, M));
        params.add("den.e_in.w", init::xavier(rng, C, M));
        params.add("den.e_in.b", Tensor::matrix(1, M));
        params.add("den.e_ff.w", init::xavier(rng, M, M));
        params.add("den.e_ff.b", Tensor::matrix(1, M));
        params.add("den.head_t", init::xavier(rng, 2 * M, 1));
        params.add("den.head_e", init::xavier(rng, 2 * M, C));
        break;
    case DenoiserKind::mlp: {
        const std::size_t in = 1 + C + cond + Mk;
        params.add("den.mlp.w1", init::xavier(rng, in, 2 * M));
        params.add("den.mlp.b1", Tensor::matrix(1, 2 * M));
        params.add("den.mlp.w2", init::xavier(rng, 2 * M, 2 * M));
        params.add("den.mlp.b2", Tensor::matrix(1, 2 * M));
        params.add("den.mlp.w3", init::xavier(rng, 2 * M, 1 + C));
        params.add("den.mlp.b3", Tensor::matrix(1, 1 + C));
        break;
    }
    case DenoiserKind::gru:
        for (const char* gate : {"z", "r", "n"}) {
            const std::string p = std::string("den.gru.") + gate;
            params.add(p + ".w", init::xavier(rng, M, M));
            params.add(p + ".u", init::xavier(rng, M, M));
            params.add(p + ".b", Tensor::matrix(1, M));
        }
        params.add("den.fuse.w", init::xavier(rng, 1 + C + cond + Mk, 2 * M));
        params.add("den.fuse.b", Tensor::matrix(1, 2 * M));
        params.add("den.head_t", init::xavier(rng, 2 * M, 1));
        params.add("den.head_e", init::xavier(rng, 2 * M, C));
        break;
    }
}

namespace {

Var dense(Graph& g, Var x, const ParamSet& params, ParamSet* grads, const std::string& w, const std::string& b) {
    return g.add(g.matmul(x, bind_param(g, params, grads, w)), bind_param(g, params, grads, b));
}

} // namespace

DenoiserVars build_denoiser(Graph& g, const DenoiserConfig& config, const ConditionVars& cond,
                            const ParamSet& params, ParamSet* grads) {
    const auto M = static_cast<std::size_t>(config.M);
    const auto C = static_cast<std::size_t>(config.C);
    const auto Mk = static_cast<std::size_t>(config.step_width());
    if (g.shape(cond.h_prev) != num::Shape{1, static_cast<std::size_t>(config.condition_width())}) {
        throw std::invalid_argument("denoiser: conditioning vector has shape " + num::shape_string(g.shape(cond.h_prev)));
    }

    DenoiserVars v;
    v.x_t = g.input("den.x_t", {1, 1});
    v.x_e = g.input("den.x_e", {1, C});
    v.phi_k = g.input("den.phi_k", {1, Mk});

    switch (config.kind) {
    case DenoiserKind::attention: {
        const Var cond_k = g.concat_cols({cond.h_prev, v.phi_k}, "den.cond_k");
        auto attention = [&](const std::string& which) {
            const std::string p = "den." + which + ".";
            const Var hidden = g.relu(dense(g, cond_k, params, grads, p + "w1", p + "b1"), p + "hidden");
            return g.row_softmax(dense(g, hidden, params, grads, p + "w2", p + "b2"), "den." + which);
        };
        v.omega_t = attention("omega_t");
        v.omega_e = attention("omega_e");

        const Var phi_m = Mk != M ? g.matmul(v.phi_k, bind_param(g, params, grads, "den.k_proj"), "den.phi_k_proj") : v.phi_k;
        const Var t_in = dense(g, v.x_t, params, grads, "den.t_in.w", "den.t_in.b");
        const Var t_sum = g.add(g.add(t_in, cond.h_t_prev), phi_m, "den.t_sum");
        const Var t_hat = g.relu(dense(g, t_sum, params, grads, "den.t_ff.w", "den.t_ff.b"), "den.t_hat");
        const Var e_in = dense(g, v.x_e, params, grads, "den.e_in.w", "den.e_in.b");
        const Var e_sum = g.add(g.add(e_in, cond.h_e_prev), phi_m, "den.e_sum");
        const Var e_hat = g.relu(dense(g, e_sum, params, grads, "den.e_ff.w", "den.e_ff.b"), "den.e_hat");
        v.x_hat = g.concat_cols({t_hat, e_hat}, "den.x_hat");

        const Var eps_t = g.matmul(g.mul(v.omega_t, v.x_hat), bind_param(g, params, grads, "den.head_t"), "den.eps_t");
        const Var eps_e = g.matmul(g.mul(v.omega_e, v.x_hat), bind_param(g, params, grads, "den.head_e"), "den.eps_e");
        v.eps = g.concat_cols({eps_t, eps_e}, "den.eps");
        break;
    }
    case DenoiserKind::mlp: {
        const Var in = g.concat_cols({v.x_t, v.x_e, cond.h_prev, v.phi_k}, "den.mlp.in");
        const Var h1 = g.relu(dense(g, in, params, grads, "den.mlp.w1", "den.mlp.b1"));
        v.x_hat = g.relu(dense(g, h1, params, grads, "den.mlp.w2", "den.mlp.b2"), "den.mlp.h2");
        v.eps = dense(g, v.x_hat, params, grads, "den.mlp.w3", "den.mlp.b3");
        break;
    }
    case DenoiserKind::gru: {
        const Var in = g.concat_cols({v.x_t, v.x_e, cond.h_prev, v.phi_k}, "den.fuse.in");
        v.x_hat = g.relu(dense(g, in, params, grads, "den.fuse.w", "den.fuse.b"), "den.x_hat");
        const Var eps_t = g.matmul(v.x_hat, bind_param(g, params, grads, "den.head_t"));
        const Var eps_e = g.matmul(v.x_hat, bind_param(g, params, grads, "den.head_e"));
        v.eps = g.concat_cols({eps_t, eps_e}, "den.eps");
        break;
    }
    }
    return v;
}

Var gru_summary(Graph& g, Var sequence, int L, int M, const ParamSet& params, ParamSet* grads) {
    const auto m = static_cast<std::size_t>(M);
    const Var wz = bind_param(g, params, grads, "den.gru.z.w");
    const Var uz = bind_param(g, params, grads, "den.gru.z.u");
    const Var bz = bind_param(g, params, grads, "den.gru.z.b");
    const Var wr = bind_param(g, params, grads, "den.gru.r.w");
    const Var ur = bind_param(g, params, grads, "den.gru.r.u");
    const Var br = bind_param(g, params, grads, "den.gru.r.b");
    const Var wn = bind_param(g, params, grads, "den.gru.n.w");
    const Var un = bind_param(g, params, grads, "den.gru.n.u");
    const Var bn = bind_param(g, params, grads, "den.gru.n.b");
    Var h = g.input("den.gru.h0", {1, m}); // stays zero
    for (int i = 0; i < L; ++i) {
        const auto row = static_cast<std::size_t>(i);
        const Var x = g.slice_rows(sequence, row, row + 1);
        const Var z = g.sigmoid(g.add(g.add(g.matmul(x, wz), g.matmul(h, uz)), bz));
        const Var r = g.sigmoid(g.add(g.add(g.matmul(x, wr), g.matmul(h, ur)), br));
        const Var n = g.tanh(g.add(g.add(g.matmul(x, wn), g.matmul(g.mul(r, h), un)), bn));
        // h' = (1 - z) n + z h = n + z (h - n)
        h = g.add(n, g.mul(z, g.sub(h, n)));
    }
    return h;
}

} // namespace lobdif::denoiser
