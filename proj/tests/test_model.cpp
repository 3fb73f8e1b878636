#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "lobdif/denoiser.hpp"
#include "lobdif/encoder.hpp"
#include "lobdif/model.hpp"

using namespace lobdif;
using num::Graph;
using num::ParamSet;
using num::Rng;
using num::Tensor;
using num::Var;

namespace {

std::vector<ingest::Event> random_context(Rng& rng, int L, int C) {
    std::vector<ingest::Event> ctx;
    double t = 100.0 * rng.uniform();
    for (int i = 0; i < L; ++i) {
        t += 0.5 * rng.uniform();
        ctx.push_back({t, static_cast<int>(rng.uniform_int(0, C - 1))});
    }
    return ctx;
}

ingest::TrainingPair random_pair(Rng& rng, int L, int C) {
    ingest::TrainingPair p;
    p.context = random_context(rng, L, C);
    p.target = {p.context.back().t + 0.05 + rng.uniform(), static_cast<int>(rng.uniform_int(0, C - 1))};
    return p;
}

model::ModelConfig small_config(denoiser::DenoiserKind kind = denoiser::DenoiserKind::attention) {
    model::ModelConfig c;
    c.L = 5;
    c.M = 4;
    c.C = 3;
    c.kind = kind;
    return c;
}

} // namespace

TEST_CASE("time encoding oracle values") {
    const auto zero = encoder::time_encoding(0.0, 6);
    for (std::size_t j = 0; j < 6; ++j) CHECK(zero[j] == (j % 2 == 0 ? 1.0 : 0.0));
    const auto one = encoder::time_encoding(1.0, 2);
    CHECK(one[0] == doctest::Approx(0.540302).epsilon(1e-6));
    CHECK(one[1] == doctest::Approx(0.0099998).epsilon(1e-6));
}

TEST_CASE("encoder config validation") {
    encoder::EncoderConfig c;
    c.M = 3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.M = 4;
    c.L = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("event embedding rows") {
    encoder::EncoderConfig cfg{4, 3, 4, true, true};
    ParamSet params;
    Rng rng(3);
    encoder::init_encoder_params(params, cfg, rng);
    CHECK(encoder::event_embedding(0, cfg, params) != encoder::event_embedding(1, cfg, params));
    CHECK_THROWS_AS((void)encoder::event_embedding(4, cfg, params), std::out_of_range);

    Tensor& table = params.get("enc.event_emb");
    table.fill(0.0);
    for (std::size_t i = 0; i < 4; ++i) table(i, i) = 1.0;
    CHECK(encoder::event_embedding(1, cfg, params) == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("encoder output shapes and concatenation") {
    encoder::EncoderConfig cfg{64, 50, 4, true, true};
    ParamSet params;
    Rng rng(5);
    encoder::init_encoder_params(params, cfg, rng);
    const auto ctx = random_context(rng, 50, 4);
    const auto out = encoder::encode_history(ctx, cfg, params);
    CHECK(out.h.shape() == num::Shape{50, 192});
    for (std::size_t r = 0; r < 50; ++r) {
        for (std::size_t c = 0; c < 64; ++c) {
            REQUIRE(out.h(r, c) == out.h_te(r, c));
            REQUIRE(out.h(r, 64 + c) == out.h_t(r, c));
            REQUIRE(out.h(r, 128 + c) == out.h_e(r, c));
        }
    }
    CHECK_THROWS_AS((void)encoder::encode_history(std::span(ctx).first(49), cfg, params), std::invalid_argument);
}

TEST_CASE("last-row attention path equals the full path") {
    for (bool te : {true, false}) {
        for (bool ee : {true, false}) {
            encoder::EncoderConfig cfg{8, 7, 3, te, ee};
            ParamSet params;
            Rng rng(17);
            encoder::init_encoder_params(params, cfg, rng);
            const auto ctx = random_context(rng, 7, 3);
            const auto full = encoder::encode_history(ctx, cfg, params);
            Graph g;
            const auto vars = encoder::build_encoder(g, cfg, params, nullptr, true);
            encoder::fill_context_inputs(g, vars.inputs, ctx, cfg);
            g.forward();
            const auto last = g.value(vars.h).values();
            const auto expect = full.h_prev();
            REQUIRE(last.size() == expect.size());
            for (std::size_t i = 0; i < last.size(); ++i) CHECK(last[i] == doctest::Approx(expect[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("single-event window attends fully to itself") {
    encoder::EncoderConfig cfg{4, 1, 2, true, true};
    ParamSet params;
    Rng rng(8);
    encoder::init_encoder_params(params, cfg, rng);
    Graph g;
    const auto vars = encoder::build_encoder(g, cfg, params, nullptr, false);
    const std::vector<ingest::Event> ctx{{3.0, 1}};
    encoder::fill_context_inputs(g, vars.inputs, ctx, cfg);
    g.forward();
    CHECK(g.value(vars.te.attention)[0] == 1.0);
}

TEST_CASE("attention rows sum to one and permute with the input") {
    encoder::EncoderConfig cfg{6, 5, 3, true, true};
    ParamSet params;
    Rng rng(21);
    encoder::init_encoder_params(params, cfg, rng);
    const Tensor X = num::gaussian(rng, {5, 6});
    auto run = [&](const Tensor& x) {
        Graph g;
        const Var in = g.input("x", {5, 6});
        const auto tr = encoder::self_attention_track(g, in, "enc.te.", cfg, params, nullptr, false);
        g.set_input(in, x);
        g.forward();
        return std::pair{g.value(tr.attention), g.value(tr.output)};
    };
    const auto [attn, out] = run(X);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) s += attn(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Tensor P({5, 6});
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 6; ++c) P(r, c) = X(perm[r], c);
    }
    const auto [attn_p, out_p] = run(P);
    for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 0; c < 6; ++c) CHECK(out_p(r, c) == doctest::Approx(out(perm[r], c)).epsilon(1e-12));
    }
}

TEST_CASE("identical events give identical rows") {
    encoder::EncoderConfig cfg{4, 4, 2, true, true};
    ParamSet params;
    Rng rng(2);
    encoder::init_encoder_params(params, cfg, rng);
    const std::vector<ingest::Event> ctx(4, ingest::Event{5.0, 1});
    const auto out = encoder::encode_history(ctx, cfg, params);
    for (std::size_t r = 1; r < 4; ++r) {
        for (std::size_t c = 0; c < 12; ++c) CHECK(out.h(r, c) == doctest::Approx(out.h(0, c)).epsilon(1e-12));
    }
}

TEST_CASE("changing the last context event changes the conditioning vector") {
    encoder::EncoderConfig cfg{8, 6, 4, true, true};
    ParamSet params;
    Rng rng(31);
    encoder::init_encoder_params(params, cfg, rng);
    auto ctx = random_context(rng, 6, 4);
    const auto a = encoder::encode_history(ctx, cfg, params).h_prev();
    ctx.back().e = (ctx.back().e + 1) % 4;
    const auto b = encoder::encode_history(ctx, cfg, params).h_prev();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("time-encoding ablation uses a learned scalar map") {
    encoder::EncoderConfig cfg{4, 3, 2, false, true};
    ParamSet params;
    Rng rng(4);
    encoder::init_encoder_params(params, cfg, rng);
    CHECK(params.contains("enc.time_proj.w"));
    const auto ctx = random_context(rng, 3, 2);
    CHECK(encoder::encode_history(ctx, cfg, params).h.shape() == num::Shape{3, 12});
}

TEST_CASE("step embedding") {
    const auto zero = denoiser::step_embedding(0, 8);
    for (std::size_t j = 0; j < 8; ++j) CHECK(zero[j] == (j % 2 == 0 ? 1.0 : 0.0));
    std::set<std::vector<double>> seen;
    for (int k = 1; k <= 100; ++k) seen.insert(denoiser::step_embedding(k, 64));
    CHECK(seen.size() == 100);
    CHECK(denoiser::step_embedding(17, 64) == denoiser::step_embedding(17, 64));
}

namespace {

struct DenoiserHarness {
    Graph g;
    ParamSet params;
    denoiser::DenoiserVars vars;
    Var h, ht, he;

    explicit DenoiserHarness(denoiser::DenoiserConfig cfg, std::uint64_t seed = 1) {
        Rng rng(seed);
        denoiser::init_denoiser_params(params, cfg, rng);
        h = g.input("h", {1, static_cast<std::size_t>(cfg.condition_width())});
        ht = g.input("ht", {1, static_cast<std::size_t>(cfg.M)});
        he = g.input("he", {1, static_cast<std::size_t>(cfg.M)});
        vars = denoiser::build_denoiser(g, cfg, {h, ht, he}, params, nullptr);
    }
};

} // namespace

TEST_CASE("omega weights are a simplex and uniform at zero weights") {
    denoiser::DenoiserConfig cfg{4, 3, 0, denoiser::DenoiserKind::attention};
    DenoiserHarness d(cfg);
    Rng rng(9);
    d.g.set_input(d.h, num::gaussian(rng, {1, 12}));
    d.g.set_input(d.ht, num::gaussian(rng, {1, 4}));
    d.g.set_input(d.he, num::gaussian(rng, {1, 4}));
    d.g.set_input(d.vars.x_t, num::gaussian(rng, {1, 1}));
    d.g.set_input(d.vars.x_e, num::gaussian(rng, {1, 3}));
    d.g.set_input(d.vars.phi_k, Tensor::row(denoiser::step_embedding(5, 4)));
    d.g.forward();
    for (Var w : {d.vars.omega_t, d.vars.omega_e}) {
        const Tensor& om = d.g.value(w);
        CHECK(om.size() == 8);
        double s = 0.0;
        for (double v : om.values()) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    CHECK(d.g.value(d.vars.omega_t) != d.g.value(d.vars.omega_e));
    CHECK(d.g.value(d.vars.x_hat).size() == 8);

    for (const char* w : {"den.omega_t.w1", "den.omega_t.b1", "den.omega_t.w2", "den.omega_t.b2"}) {
        d.params.get(w).fill(0.0);
    }
    d.g.forward();
    for (double v : d.g.value(d.vars.omega_t).values()) CHECK(v == doctest::Approx(1.0 / 8.0).epsilon(1e-15));
}

TEST_CASE("zero parameters give zero features and zero noise") {
    denoiser::DenoiserConfig cfg{4, 3, 0, denoiser::DenoiserKind::attention};
    DenoiserHarness d(cfg);
    for (std::size_t i = 0; i < d.params.size(); ++i) d.params[i].fill(0.0);
    Rng rng(10);
    d.g.set_input(d.h, num::gaussian(rng, {1, 12}));
    d.g.set_input(d.vars.x_t, Tensor::scalar(0.3));
    d.g.set_input(d.vars.phi_k, Tensor::row(denoiser::step_embedding(5, 4)));
    d.g.forward();
    for (double v : d.g.value(d.vars.x_hat).values()) CHECK(v == 0.0);
    for (double v : d.g.value(d.vars.eps).values()) CHECK(v == 0.0);
    CHECK(d.g.value(d.vars.eps).size() == 4);
}

TEST_CASE("uniform omega and constant features with a summing head") {
    denoiser::DenoiserConfig cfg{4, 2, 0, denoiser::DenoiserKind::attention};
    DenoiserHarness d(cfg);
    for (const char* w : {"den.omega_t.w1", "den.omega_t.b1", "den.omega_t.w2", "den.omega_t.b2"}) {
        d.params.get(w).fill(0.0);
    }
    // Constant branch features c: zero the maps, set the ff bias to c.
    const double c = 0.75;
    for (const char* w : {"den.t_in.w", "den.t_in.b", "den.t_ff.w", "den.e_in.w", "den.e_in.b", "den.e_ff.w"}) {
        d.params.get(w).fill(0.0);
    }
    d.params.get("den.t_ff.b").fill(c);
    d.params.get("den.e_ff.b").fill(c);
    d.params.get("den.head_t").fill(1.0);
    d.g.set_input(d.vars.phi_k, Tensor::row(denoiser::step_embedding(3, 4)));
    d.g.forward();
    CHECK(d.g.value(d.vars.eps)[0] == doctest::Approx(c));
}

TEST_CASE("denoiser is deterministic for every arm") {
    for (auto kind : {denoiser::DenoiserKind::attention, denoiser::DenoiserKind::mlp, denoiser::DenoiserKind::gru}) {
        const auto cfg = small_config(kind);
        const auto m = model::Model::initialize(cfg, 12);
        Rng rng(13);
        const auto ctx = random_context(rng, cfg.L, cfg.C);
        model::ConditionEncoder enc(m);
        model::NoisePredictor np(m);
        const auto cond = enc.encode(ctx);
        const auto x = diffusion::clean_state(0.4, 1, cfg.C);
        const auto a = np.predict(cond, x, 7).flat();
        const auto b = np.predict(cond, x, 7).flat();
        CHECK(a == b);
        CHECK(a.size() == 4);
        CHECK(np.evaluations() == 2);
    }
}

TEST_CASE("parse_kind") {
    CHECK(denoiser::parse_kind("gru") == denoiser::DenoiserKind::gru);
    CHECK_THROWS_AS((void)denoiser::parse_kind("lstm"), std::invalid_argument);
}

TEST_CASE("loss graph gradients match central differences") {
    struct Arm {
        denoiser::DenoiserKind kind;
        bool te, ee;
        int Mk;
    };
    for (const Arm arm : {Arm{denoiser::DenoiserKind::attention, true, true, 0},
                          Arm{denoiser::DenoiserKind::attention, false, false, 6},
                          Arm{denoiser::DenoiserKind::mlp, true, true, 0},
                          Arm{denoiser::DenoiserKind::gru, true, true, 0}}) {
        auto cfg = small_config(arm.kind);
        cfg.use_time_encoding = arm.te;
        cfg.use_event_embedding = arm.ee;
        cfg.Mk = arm.Mk;
        CAPTURE(denoiser::kind_name(arm.kind));
        auto m = model::Model::initialize(cfg, 99);
        ParamSet grads = m.params.zeros_like();
        model::LossGraph lg(m, &grads);
        const auto sched = diffusion::make_schedule(10, 1e-4, 0.2);
        Rng rng(100);
        const auto pair = random_pair(rng, cfg.L, cfg.C);
        std::vector<double> eps;
        for (int i = 0; i <= cfg.C; ++i) eps.push_back(rng.normal());
        (void)lg.evaluate(pair, ingest::NormStats{-0.5, 0.6}, 4, eps, sched);
        const auto res =
            num::check_gradients(lg.graph(), lg.loss(), m.params.pointers(), m.params.names(), 1e-5, 1e-6, 1e-4);
        CAPTURE(res.worst_coordinate);
        CHECK(res.max_relative_error < 1e-4);
    }
}

TEST_CASE("loss is zero for a perfect predictor and non-negative") {
    const auto cfg = small_config();
    auto m = model::Model::initialize(cfg, 4);
    model::LossGraph lg(m, nullptr);
    const auto sched = diffusion::make_schedule(10, 1e-4, 0.2);
    Rng rng(5);
    const auto pair = random_pair(rng, cfg.L, cfg.C);
    const ingest::NormStats norm{0.0, 1.0};
    std::vector<double> eps{0.1, -0.2, 0.3, 0.4};
    CHECK(lg.evaluate(pair, norm, 3, eps, sched) >= 0.0);
    // zero heads make eps_theta == 0, which is exact for eps == 0
    m.params.get("den.head_t").fill(0.0);
    m.params.get("den.head_e").fill(0.0);
    CHECK(lg.evaluate(pair, norm, 3, {0.0, 0.0, 0.0, 0.0}, sched) == 0.0);
    CHECK_THROWS_AS((void)lg.evaluate(pair, norm, 0, eps, sched), std::out_of_range);
    CHECK_THROWS_AS((void)lg.evaluate(pair, norm, 11, eps, sched), std::out_of_range);
}

TEST_CASE("zero predictor has expected loss 1 + C") {
    auto cfg = small_config();
    auto m = model::Model::initialize(cfg, 4);
    m.params.get("den.head_t").fill(0.0);
    m.params.get("den.head_e").fill(0.0);
    model::LossGraph lg(m, nullptr);
    const auto sched = diffusion::make_schedule(10, 1e-4, 0.2);
    Rng rng(6);
    const auto pair = random_pair(rng, cfg.L, cfg.C);
    const ingest::NormStats norm{0.0, 1.0};
    double total = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        std::vector<double> eps;
        for (int d = 0; d <= cfg.C; ++d) eps.push_back(rng.normal());
        total += lg.evaluate(pair, norm, static_cast<int>(rng.uniform_int(1, 10)), eps, sched);
    }
    const double mean = total / n;
    CHECK(std::abs(mean - (1.0 + cfg.C)) / (1.0 + cfg.C) < 0.05);
}
