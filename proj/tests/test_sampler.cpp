#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "lobdif/sampler.hpp"

using namespace lobdif;
using diffusion::DiffusionState;
using num::Rng;

namespace {

sampler::NoiseFn constant_noise(std::vector<double> eps) {
    return [eps](const DiffusionState&, int) { return eps; };
}

} // namespace

TEST_CASE("reverse step fixed point") {
    const auto s = diffusion::make_schedule(10, 1e-4, 0.2);
    Rng rng(1);
    DiffusionState x{0.0, {0.0, 0.0}, 5};
    const auto out = sampler::reverse_step(x, 5, constant_noise({0, 0, 0}), s, rng, false);
    CHECK(out.t == 0.0);
    CHECK(out.e == std::vector<double>{0.0, 0.0});
    CHECK(out.k == 4);
    CHECK_THROWS_AS((void)sampler::reverse_step(x, 0, constant_noise({0, 0, 0}), s, rng, false), std::out_of_range);
}

TEST_CASE("ancestral oracle recovers x0") {
    // eps_theta returns the noise that takes x0 to x_k in closed form.
    const auto s = diffusion::make_schedule(100, 1e-4, 0.2);
    const DiffusionState x0 = diffusion::clean_state(-0.8, 2, 4);
    const std::vector<double> eps{0.3, -1.2, 0.5, 0.9, -0.1};
    const auto x0f = x0.flat();
    const sampler::NoiseFn oracle = [&](const DiffusionState& x, int k) {
        const double ab = s.alpha_bar[static_cast<std::size_t>(k)];
        const auto xf = x.flat();
        std::vector<double> e(xf.size());
        for (std::size_t d = 0; d < xf.size(); ++d) e[d] = (xf[d] - std::sqrt(ab) * x0f[d]) / std::sqrt(1.0 - ab);
        return e;
    };
    Rng rng(3);
    DiffusionState x = diffusion::forward_sample(x0, 100, eps, s);
    for (int k = 100; k >= 1; --k) x = sampler::reverse_step(x, k, oracle, s, rng, false);
    const auto got = x.flat();
    for (std::size_t d = 0; d < got.size(); ++d) CHECK(std::abs(got[d] - x0f[d]) < 1e-6);
}

TEST_CASE("stochastic reverse step is reproducible per seed") {
    const auto s = diffusion::make_schedule(10, 1e-4, 0.2);
    DiffusionState x{0.5, {0.1, -0.3}, 7};
    Rng a(8), b(8);
    const auto ya = sampler::reverse_step(x, 7, constant_noise({0.2, 0.1, 0.0}), s, a, true);
    const auto yb = sampler::reverse_step(x, 7, constant_noise({0.2, 0.1, 0.0}), s, b, true);
    CHECK(ya.flat() == yb.flat());
    Rng c(8);
    const auto det = sampler::reverse_step(x, 7, constant_noise({0.2, 0.1, 0.0}), s, c, false);
    CHECK(ya.flat() != det.flat());
}

TEST_CASE("skip sampling oracle recovery for every stride") {
    const auto s = diffusion::make_schedule(100, 1e-4, 0.2);
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const DiffusionState x0 = diffusion::clean_state(rng.normal(), static_cast<int>(rng.uniform_int(0, 3)), 4);
        std::vector<double> eps;
        for (int d = 0; d < 5; ++d) eps.push_back(rng.normal());
        const auto xK = diffusion::forward_sample(x0, 100, eps, s);
        for (int tau : {1, 2, 5, 10, 20, 25, 50, 100}) {
            std::size_t calls = 0;
            const sampler::NoiseFn fn = [&](const DiffusionState&, int) {
                ++calls;
                return eps;
            };
            Rng r(0);
            const auto out = sampler::sample_skip(xK, fn, s, tau, r, false).flat();
            const auto want = x0.flat();
            for (std::size_t d = 0; d < out.size(); ++d) CHECK(std::abs(out[d] - want[d]) < 1e-6);
            CHECK(calls == static_cast<std::size_t>(100 / tau));
        }
    }
}

TEST_CASE("stride K is a single jump") {
    const auto s = diffusion::make_schedule(100, 1e-4, 0.2);
    const DiffusionState xK{0.4, {1.0, -0.5}, 100};
    const std::vector<double> eps{0.2, 0.7, -0.3};
    Rng r(0);
    const auto out = sampler::sample_skip(xK, constant_noise(eps), s, 100, r, false);
    const double ab = s.alpha_bar[100];
    CHECK(out.t == doctest::Approx((0.4 - std::sqrt(1 - ab) * 0.2) / std::sqrt(ab)).epsilon(1e-12));
    CHECK(out.k == 0);
}

TEST_CASE("tau=1 matches the per-step deterministic recursion at every step") {
    const auto s = diffusion::make_schedule(100, 1e-4, 0.2);
    // A state-dependent eps_theta so the trajectory is non-trivial.
    const sampler::NoiseFn fn = [](const DiffusionState& x, int k) {
        const auto f = x.flat();
        std::vector<double> e(f.size());
        for (std::size_t d = 0; d < f.size(); ++d) e[d] = std::tanh(0.5 * f[d] + 0.01 * k + 0.1 * static_cast<double>(d));
        return e;
    };
    const DiffusionState xK{0.9, {-0.2, 1.3, 0.4}, 100};
    std::vector<std::vector<double>> traj;
    Rng r(0);
    (void)sampler::sample_skip(xK, fn, s, 1, r, false, [&](int, const DiffusionState& x) { traj.push_back(x.flat()); });
    REQUIRE(traj.size() == 101);

    std::vector<double> x = xK.flat();
    for (int k = 100; k >= 1; --k) {
        const auto e = fn(DiffusionState::from_flat(x, k), k);
        const double ab = s.alpha_bar[static_cast<std::size_t>(k)];
        const double ab_prev = s.alpha_bar[static_cast<std::size_t>(k - 1)];
        for (std::size_t d = 0; d < x.size(); ++d) {
            const double x0 = (x[d] - std::sqrt(1.0 - ab) * e[d]) / std::sqrt(ab);
            x[d] = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * e[d];
        }
        const auto& got = traj[static_cast<std::size_t>(101 - k)];
        for (std::size_t d = 0; d < x.size(); ++d) REQUIRE(std::abs(got[d] - x[d]) < 1e-9);
    }
}

TEST_CASE("stride must divide K") {
    const auto s = diffusion::make_schedule(100, 1e-4, 0.2);
    Rng r(0);
    const DiffusionState xK{0.0, {0.0}, 100};
    CHECK_THROWS_AS((void)sampler::sample_skip(xK, constant_noise({0, 0}), s, 3, r), std::invalid_argument);
    CHECK_THROWS_AS((void)sampler::sample_skip(xK, constant_noise({0, 0}), s, 0, r), std::invalid_argument);
    CHECK(sampler::visited_steps(100, 25) == std::vector<int>{100, 75, 50, 25, 0});
}

TEST_CASE("stochastic skip sampling stays finite and reproducible") {
    const auto s = diffusion::make_schedule(100, 1e-4, 0.2);
    const DiffusionState xK{0.3, {0.1, 0.2}, 100};
    for (int tau : {1, 5, 50}) {
        Rng a(5), b(5);
        const auto x = sampler::sample_skip(xK, constant_noise({0.1, 0.1, 0.1}), s, tau, a, true).flat();
        const auto y = sampler::sample_skip(xK, constant_noise({0.1, 0.1, 0.1}), s, tau, b, true).flat();
        CHECK(x == y);
        for (double v : x) CHECK(std::isfinite(v));
    }
}

TEST_CASE("decoding") {
    CHECK(sampler::decode_class(std::vector<double>{0.9, -0.8, -1.1, -1.0}) == 0);
    CHECK(sampler::decode_class(std::vector<double>{0.2, 0.5, 0.5, -1.0}) == 1);
    const ingest::NormStats norm{-1.0, 1.0};
    const auto p = sampler::decode(DiffusionState{0.0, {-1, 1, -1}, 0}, norm);
    CHECK(p.dt_seconds == doctest::Approx(0.1));
    CHECK(p.cls == 1);
    const auto tiny = sampler::decode(DiffusionState{-1e3, {1}, 0}, norm);
    CHECK(tiny.dt_seconds >= norm.floor_dt);
    CHECK(tiny.dt_seconds > 0.0);
}

namespace {

model::Model tiny_model() {
    model::ModelConfig c;
    c.L = 4;
    c.M = 4;
    c.C = 3;
    return model::Model::initialize(c, 21);
}

std::vector<ingest::TrainingPair> tiny_windows(std::size_t n) {
    ingest::EventStream s;
    s.num_classes = 3;
    for (std::size_t i = 0; i < n + 4; ++i) s.events.push_back({0.1 * static_cast<double>(i), static_cast<int>(i % 3)});
    return ingest::build_windows(s, 4);
}

} // namespace

TEST_CASE("predict_next is deterministic and counts evaluations") {
    const auto m = tiny_model();
    const auto s = diffusion::make_schedule(20, 1e-4, 0.2);
    const auto w = tiny_windows(3);
    const ingest::NormStats norm{-1.0, 0.5};
    const sampler::SamplerConfig cfg{5, false, 42};
    const auto a = sampler::predict_next(w[0].context, m, s, cfg, norm);
    const auto b = sampler::predict_next(w[0].context, m, s, cfg, norm);
    CHECK(a.raw_t == b.raw_t);
    CHECK(a.raw_e == b.raw_e);
    CHECK(a.cls == sampler::decode_class(a.raw_e));
    CHECK(a.dt_seconds > 0.0);

    sampler::Predictor p(m, s, norm);
    Rng rng(1);
    (void)p.predict(w[0].context, cfg, rng);
    CHECK(p.evaluations() == 4);
}

TEST_CASE("non-finite parameters are rejected") {
    auto m = tiny_model();
    m.params.get("den.head_t")[0] = std::nan("");
    const auto s = diffusion::make_schedule(10, 1e-4, 0.2);
    const auto w = tiny_windows(1);
    CHECK_THROWS_AS((void)sampler::predict_next(w[0].context, m, s, {}, ingest::NormStats{}), std::domain_error);
}

TEST_CASE("trace rows and checkpoint validation") {
    const auto m = tiny_model();
    const auto s = diffusion::make_schedule(10, 1e-4, 0.2);
    const auto w = tiny_windows(6);
    const auto rows = sampler::trace_denoising(w, m, s, ingest::NormStats{}, 1, {10, 0}, 3);
    CHECK(rows.size() == 2 * w.size());
    CHECK(rows[0].k == 10);
    CHECK(rows[1].k == 0);
    CHECK(rows[1].window_id == 0);
    const auto csv = sampler::write_trace_csv(rows);
    CHECK(csv.rfind("window_id,k,raw_t,class\n", 0) == 0);
    CHECK_THROWS_AS((void)sampler::trace_denoising(w, m, s, ingest::NormStats{}, 5, {3}, 3), std::invalid_argument);
}

TEST_CASE("prior at k=K is standard normal") {
    const auto m = tiny_model();
    const auto s = diffusion::make_schedule(10, 1e-4, 0.2);
    const auto w = tiny_windows(5000);
    const auto rows = sampler::trace_denoising(w, m, s, ingest::NormStats{}, 10, {10}, 9);
    double sum = 0.0, sum2 = 0.0;
    for (const auto& r : rows) {
        sum += r.raw_t;
        sum2 += r.raw_t * r.raw_t;
    }
    const double n = static_cast<double>(rows.size());
    const double mean = sum / n;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(sum2 / n - mean * mean - 1.0) < 0.1);
}
