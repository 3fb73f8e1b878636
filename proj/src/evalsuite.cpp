#include "lobdif/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <tbb/blocked_range.h>
#include <tbb/enumerable_thread_specific.h>
#include <tbb/parallel_for.h>

#include "lobdif/sampler.hpp"

namespace lobdif::eval {

using ingest::Event;
using ingest::EventStream;

// ---------------------------------------------------------------- reports

std::size_t EvalReport::confusion_at(int truth, int predicted) const {
    if (truth < 0 || truth >= num_classes || predicted < 0 || predicted >= num_classes) {
        throw std::out_of_range("confusion_at: class out of range");
    }
    return confusion[static_cast<std::size_t>(truth * num_classes + predicted)];
}

std::string EvalReport::to_text() const {
    using ingest::format_double;
    std::string out;
    out += "n=" + std::to_string(n) + '\n';
    out += "num_classes=" + std::to_string(num_classes) + '\n';
    out += "accuracy=" + format_double(accuracy) + '\n';
    out += "mae_log=" + format_double(mae_log) + '\n';
    out += "wall_time_per_event=" + format_double(wall_time_per_event) + '\n';
    out += "tau=" + std::to_string(tau) + '\n';
    out += "evaluations=" + std::to_string(evaluations) + '\n';
    for (int i = 0; i < num_classes; ++i) {
        for (int j = 0; j < num_classes; ++j) {
            out += "confusion_" + std::to_string(i) + '_' + std::to_string(j) + '=' +
                   std::to_string(confusion_at(i, j)) + '\n';
        }
    }
    return out;
}

std::string EvalReport::csv_header(int num_classes) {
    std::string out = "tau,evaluations,n,accuracy,mae_log,wall_time_per_event";
    for (int i = 0; i < num_classes; ++i) {
        for (int j = 0; j < num_classes; ++j) out += ",confusion_" + std::to_string(i) + '_' + std::to_string(j);
    }
    return out;
}

std::string EvalReport::to_csv_row() const {
    using ingest::format_double;
    std::string out = std::to_string(tau) + ',' + std::to_string(evaluations) + ',' + std::to_string(n) + ',' +
                      format_double(accuracy) + ',' + format_double(mae_log) + ',' +
                      format_double(wall_time_per_event);
    for (std::size_t c : confusion) out += ',' + std::to_string(c);
    return out;
}

EvalReport score(std::span<const Outcome> predictions, std::span<const Outcome> truths, const ingest::NormStats& norm,
                 int num_classes) {
    if (predictions.size() != truths.size()) {
        throw std::invalid_argument("score: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(truths.size()) + " truths");
    }
    if (truths.empty()) throw std::invalid_argument("score: nothing to score");
    if (num_classes < 1) throw std::invalid_argument("score: num_classes must be positive");
    EvalReport r;
    r.n = truths.size();
    r.num_classes = num_classes;
    r.confusion.assign(static_cast<std::size_t>(num_classes * num_classes), 0);
    std::size_t hits = 0;
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const Outcome& p = predictions[i];
        const Outcome& t = truths[i];
        if (p.cls < 0 || p.cls >= num_classes || t.cls < 0 || t.cls >= num_classes) {
            throw std::invalid_argument("score: class out of range at index " + std::to_string(i));
        }
        hits += p.cls == t.cls ? 1 : 0;
        ++r.confusion[static_cast<std::size_t>(t.cls * num_classes + p.cls)];
        abs_sum += std::abs(std::log10(std::max(p.dt, norm.floor_dt)) - std::log10(std::max(t.dt, norm.floor_dt)));
    }
    r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n);
    r.mae_log = abs_sum / static_cast<double>(r.n);
    return r;
}

Outcome truth_of(const ingest::TrainingPair& pair) {
    if (pair.context.empty()) throw std::invalid_argument("truth_of: empty context");
    return {pair.target.t - pair.context.back().t, pair.target.e};
}

std::vector<Outcome> truths_of(const std::vector<ingest::TrainingPair>& windows) {
    std::vector<Outcome> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(truth_of(w));
    return out;
}

// ---------------------------------------------------------------- empirical baseline

EmpiricalBaseline baseline_empirical(const EventStream& train) {
    if (train.size() < 2) throw std::invalid_argument("baseline_empirical: need at least two events");
    std::vector<std::size_t> counts(static_cast<std::size_t>(train.num_classes), 0);
    for (const Event& ev : train.events) ++counts.at(static_cast<std::size_t>(ev.e));
    std::vector<double> gaps;
    gaps.reserve(train.size() - 1);
    for (std::size_t i = 1; i < train.size(); ++i) gaps.push_back(train.events[i].t - train.events[i - 1].t);
    std::sort(gaps.begin(), gaps.end());
    const std::size_t mid = gaps.size() / 2;
    EmpiricalBaseline b;
    b.cls = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    b.dt = gaps.size() % 2 == 1 ? gaps[mid] : 0.5 * (gaps[mid - 1] + gaps[mid]);
    return b;
}

// ---------------------------------------------------------------- Hawkes

namespace {

// Pivots of Gaussian elimination on I - A without pivoting. For A >= 0 the
// spectral radius is below 1 iff every pivot is positive.
bool factor_i_minus_a(const HawkesParams& p, std::vector<double>& lu) {
    const int C = p.dim();
    lu.assign(static_cast<std::size_t>(C * C), 0.0);
    for (int i = 0; i < C; ++i) {
        for (int j = 0; j < C; ++j) lu[static_cast<std::size_t>(i * C + j)] = (i == j ? 1.0 : 0.0) - p.a(i, j);
    }
    for (int k = 0; k < C; ++k) {
        const double piv = lu[static_cast<std::size_t>(k * C + k)];
        if (!(piv > 0.0)) return false;
        for (int i = k + 1; i < C; ++i) {
            const double f = lu[static_cast<std::size_t>(i * C + k)] / piv;
            lu[static_cast<std::size_t>(i * C + k)] = f;
            for (int j = k + 1; j < C; ++j) {
                lu[static_cast<std::size_t>(i * C + j)] -= f * lu[static_cast<std::size_t>(k * C + j)];
            }
        }
    }
    return true;
}

void check_shape(const HawkesParams& p) {
    if (p.mu.empty()) throw std::invalid_argument("hawkes: mu is empty");
    if (p.A.size() != p.mu.size() * p.mu.size()) throw std::invalid_argument("hawkes: A must be C x C");
}

// Per-event features for one decay: R[k*C + j] is the excitation carried by
// class-j events before event k, G[j] the compensator weight of class j.
struct Features {
    int C = 0;
    double span = 0.0;
    std::vector<int> cls;
    std::vector<double> R;
    std::vector<double> G;
    std::vector<std::size_t> count;
};

Features features(const EventStream& s, double decay) {
    Features f;
    f.C = s.num_classes;
    const std::size_t n = s.size();
    const auto C = static_cast<std::size_t>(f.C);
    f.span = s.events.back().t - s.events.front().t;
    f.cls.resize(n);
    f.R.assign(n * C, 0.0);
    f.G.assign(C, 0.0);
    f.count.assign(C, 0);
    const double T = s.events.back().t;
    for (std::size_t k = 0; k < n; ++k) {
        const auto e = static_cast<std::size_t>(s.events[k].e);
        f.cls[k] = s.events[k].e;
        ++f.count[e];
        f.G[e] += 1.0 - std::exp(-decay * (T - s.events[k].t));
        if (k == 0) continue;
        const double d = std::exp(-decay * (s.events[k].t - s.events[k - 1].t));
        const auto prev = static_cast<std::size_t>(s.events[k - 1].e);
        for (std::size_t j = 0; j < C; ++j) {
            f.R[k * C + j] = d * (f.R[(k - 1) * C + j] + (j == prev ? decay : 0.0));
        }
    }
    return f;
}

// theta holds row i as [mu_i, A_i0 .. A_i,C-1].
double row_loglik(const Features& f, const std::vector<double>& theta) {
    const auto C = static_cast<std::size_t>(f.C);
    const std::size_t stride = C + 1;
    double ll = 0.0;
    for (std::size_t k = 0; k < f.cls.size(); ++k) {
        const auto i = static_cast<std::size_t>(f.cls[k]);
        const double* th = &theta[i * stride];
        double lam = th[0];
        for (std::size_t j = 0; j < C; ++j) lam += th[1 + j] * f.R[k * C + j];
        if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
        ll += std::log(lam);
    }
    for (std::size_t i = 0; i < C; ++i) {
        const double* th = &theta[i * stride];
        ll -= th[0] * f.span;
        for (std::size_t j = 0; j < C; ++j) ll -= th[1 + j] * f.G[j];
    }
    return ll;
}

// Sum over events of each feature divided by the event's intensity; the
// gradient is this minus the compensator weights.
std::vector<double> ratio_sums(const Features& f, const std::vector<double>& theta) {
    const auto C = static_cast<std::size_t>(f.C);
    const std::size_t stride = C + 1;
    std::vector<double> s(theta.size(), 0.0);
    for (std::size_t k = 0; k < f.cls.size(); ++k) {
        const auto i = static_cast<std::size_t>(f.cls[k]);
        const double* th = &theta[i * stride];
        double lam = th[0];
        for (std::size_t j = 0; j < C; ++j) lam += th[1 + j] * f.R[k * C + j];
        const double inv = 1.0 / lam;
        s[i * stride] += inv;
        for (std::size_t j = 0; j < C; ++j) s[i * stride + 1 + j] += f.R[k * C + j] * inv;
    }
    return s;
}

HawkesParams to_params(const std::vector<double>& theta, int C, double decay) {
    HawkesParams p;
    p.decay = decay;
    const auto uC = static_cast<std::size_t>(C);
    p.mu.resize(uC);
    p.A.resize(uC * uC);
    for (std::size_t i = 0; i < uC; ++i) {
        p.mu[i] = theta[i * (uC + 1)];
        for (std::size_t j = 0; j < uC; ++j) p.A[i * uC + j] = theta[i * (uC + 1) + 1 + j];
    }
    return p;
}

struct DecayFit {
    std::vector<double> theta;
    double ll = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trajectory;
};

// Gradient ascent preconditioned by theta / c. A unit step is the EM update,
// which never decreases the likelihood; longer steps are tried first and kept
// only when they improve on it.
DecayFit ascend(const Features& f, const HawkesFitOptions& opt) {
    const auto C = static_cast<std::size_t>(f.C);
    const std::size_t stride = C + 1;
    const double n = static_cast<double>(f.cls.size());
    const double mu_floor = 1e-12 * n / f.span;

    DecayFit out;
    out.theta.assign(C * stride, 0.0);
    std::vector<double> weight(C * stride, 0.0); // compensator weight c_p
    for (std::size_t i = 0; i < C; ++i) {
        out.theta[i * stride] = std::max(0.5 * static_cast<double>(f.count[i]) / f.span, mu_floor);
        weight[i * stride] = f.span;
        for (std::size_t j = 0; j < C; ++j) {
            weight[i * stride + 1 + j] = f.G[j];
            const bool active = opt.fit_excitation && f.G[j] > 0.0;
            out.theta[i * stride + 1 + j] = active ? 0.1 / static_cast<double>(C) : 0.0;
        }
    }
    out.ll = row_loglik(f, out.theta);
    double step = 1.0;
    std::vector<double> cand(out.theta.size());
    for (int it = 0; it < opt.max_iterations; ++it) {
        const auto sums = ratio_sums(f, out.theta);
        auto propose = [&](double s) {
            for (std::size_t p = 0; p < cand.size(); ++p) {
                const double th = out.theta[p];
                if (th == 0.0 || weight[p] <= 0.0) {
                    cand[p] = th;
                    continue;
                }
                const double grad = sums[p] - weight[p];
                const double moved = th + s * (th / weight[p]) * grad;
                // keep every coordinate strictly positive so it can recover
                const double floor = (p % stride == 0) ? std::max(mu_floor, 0.1 * th) : 0.1 * th;
                cand[p] = std::max(moved, floor);
            }
            return row_loglik(f, cand);
        };
        double ll_new = -std::numeric_limits<double>::infinity();
        double used = 1.0;
        if (step > 1.0) {
            ll_new = propose(step);
            used = step;
        }
        if (!(ll_new > out.ll)) {
            ll_new = propose(1.0);
            used = 1.0;
        }
        out.iterations = it + 1;
        if (!(ll_new >= out.ll)) {
            out.converged = true; // no further progress possible in floating point
            break;
        }
        const double gain = ll_new - out.ll;
        out.theta = cand;
        out.ll = ll_new;
        out.trajectory.push_back(ll_new);
        step = used > 1.0 ? std::min(2.0 * used, 64.0) : 2.0;
        if (gain <= opt.tolerance * std::max(1.0, std::abs(ll_new))) {
            out.converged = true;
            break;
        }
    }
    return out;
}

void check_fit_stream(const EventStream& s) {
    s.validate();
    if (s.size() < 100) throw std::invalid_argument("hawkes_fit: need at least 100 events");
    if (!(s.events.back().t > s.events.front().t)) throw std::invalid_argument("hawkes_fit: zero observation span");
}

} // namespace

void HawkesParams::validate() const {
    check_shape(*this);
    if (!(decay > 0.0) || !std::isfinite(decay)) throw std::invalid_argument("hawkes: decay must be positive");
    for (double m : mu) {
        if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("hawkes: every mu must be positive");
    }
    for (double a : A) {
        if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("hawkes: A must be non-negative");
    }
    if (!stationary()) throw std::invalid_argument("hawkes: spectral radius of A must be below 1");
}

bool HawkesParams::stationary() const {
    check_shape(*this);
    std::vector<double> lu;
    return factor_i_minus_a(*this, lu);
}

std::vector<double> HawkesParams::stationary_rates() const {
    check_shape(*this);
    std::vector<double> lu;
    if (!factor_i_minus_a(*this, lu)) throw std::invalid_argument("hawkes: no stationary rate for this A");
    const int C = dim();
    std::vector<double> x = mu;
    for (int i = 0; i < C; ++i) {
        for (int k = 0; k < i; ++k) x[static_cast<std::size_t>(i)] -= lu[static_cast<std::size_t>(i * C + k)] * x[static_cast<std::size_t>(k)];
    }
    for (int i = C - 1; i >= 0; --i) {
        for (int k = i + 1; k < C; ++k) x[static_cast<std::size_t>(i)] -= lu[static_cast<std::size_t>(i * C + k)] * x[static_cast<std::size_t>(k)];
        x[static_cast<std::size_t>(i)] /= lu[static_cast<std::size_t>(i * C + i)];
    }
    return x;
}

double hawkes_log_likelihood(const HawkesParams& params, const EventStream& stream) {
    check_shape(params);
    stream.validate();
    if (stream.num_classes != params.dim()) throw std::invalid_argument("hawkes: class count mismatch");
    if (stream.size() < 2) throw std::invalid_argument("hawkes: need at least two events");
    const Features f = features(stream, params.decay);
    const auto C = static_cast<std::size_t>(params.dim());
    std::vector<double> theta(C * (C + 1));
    for (std::size_t i = 0; i < C; ++i) {
        theta[i * (C + 1)] = params.mu[i];
        for (std::size_t j = 0; j < C; ++j) theta[i * (C + 1) + 1 + j] = params.A[i * C + j];
    }
    return row_loglik(f, theta);
}

HawkesFit hawkes_fit(const EventStream& stream, const HawkesFitOptions& options) {
    if (options.decay_grid.empty()) throw std::invalid_argument("hawkes_fit: empty decay grid");
    for (double w : options.decay_grid) {
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("hawkes_fit: decays must be positive");
    }
    if (options.max_iterations < 1) throw std::invalid_argument("hawkes_fit: max_iterations must be positive");
    check_fit_stream(stream);

    HawkesFit best;
    bool have = false;
    for (double w : options.decay_grid) {
        const Features f = features(stream, w);
        DecayFit d = ascend(f, options);
        if (!have || d.ll > best.log_likelihood) {
            have = true;
            best.params = to_params(d.theta, stream.num_classes, w);
            best.log_likelihood = d.ll;
            best.iterations = d.iterations;
            best.warning = !d.converged;
            best.trajectory = std::move(d.trajectory);
        }
    }
    return best;
}

Outcome hawkes_predict(const HawkesParams& params, std::span<const Event> context) {
    check_shape(params);
    const int C = params.dim();
    const auto uC = static_cast<std::size_t>(C);
    const double w = params.decay;
    std::vector<double> carried(uC, 0.0);
    if (!context.empty()) {
        const double t_last = context.back().t;
        for (const Event& ev : context) {
            if (ev.e < 0 || ev.e >= C) throw std::invalid_argument("hawkes_predict: class out of range");
            carried[static_cast<std::size_t>(ev.e)] += w * std::exp(-w * (t_last - ev.t));
        }
    }
    std::vector<double> excite(uC, 0.0);
    double base = 0.0;
    double burst = 0.0;
    for (std::size_t i = 0; i < uC; ++i) {
        for (std::size_t j = 0; j < uC; ++j) excite[i] += params.A[i * uC + j] * carried[j];
        base += params.mu[i];
        burst += excite[i];
    }
    if (!(base > 0.0)) throw std::invalid_argument("hawkes_predict: total baseline rate must be positive");

    // E[dt] = int_0^inf exp(-base s - burst (1 - e^{-w s}) / w) ds, with s = u / base
    const double ratio = burst / w;
    auto survival = [&](double u) { return std::exp(-u - ratio * -std::expm1(-w * u / base)); };
    boost::math::quadrature::exp_sinh<double> integrator;
    const double dt = integrator.integrate(survival, 0.0, std::numeric_limits<double>::infinity(), 1e-12) / base;

    Outcome out;
    out.dt = dt;
    double best = -1.0;
    const double fade = std::exp(-w * dt);
    for (std::size_t i = 0; i < uC; ++i) {
        const double lam = params.mu[i] + excite[i] * fade;
        if (lam > best) {
            best = lam;
            out.cls = static_cast<int>(i);
        }
    }
    return out;
}

EventStream synth_hawkes(const HawkesParams& params, std::size_t n_events, num::Rng& rng) {
    params.validate();
    const auto C = static_cast<std::size_t>(params.dim());
    const double w = params.decay;
    std::vector<double> colsum(C, 0.0);
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) colsum[j] += params.A[i * C + j];
    }
    double base = 0.0;
    for (double m : params.mu) base += m;

    EventStream s;
    s.num_classes = params.dim();
    s.events.reserve(n_events);
    std::vector<double> carried(C, 0.0);
    std::vector<double> lam(C, 0.0);
    double t = 0.0;
    while (s.events.size() < n_events) {
        // intensity only decays until the next event, so its current value bounds it
        double bound = base;
        for (std::size_t j = 0; j < C; ++j) bound += colsum[j] * carried[j];
        const double wait = -std::log(rng.uniform()) / bound;
        t += wait;
        const double fade = std::exp(-w * wait);
        for (double& c : carried) c *= fade;
        double total = 0.0;
        for (std::size_t i = 0; i < C; ++i) {
            lam[i] = params.mu[i];
            for (std::size_t j = 0; j < C; ++j) lam[i] += params.A[i * C + j] * carried[j];
            total += lam[i];
        }
        const double d = rng.uniform() * bound;
        if (d > total) continue;
        std::size_t cls = C - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < C; ++i) {
            acc += lam[i];
            if (d <= acc) {
                cls = i;
                break;
            }
        }
        if (!s.events.empty() && t <= s.events.back().t) t = std::nextafter(s.events.back().t, 1e300);
        s.events.push_back({t, static_cast<int>(cls)});
        carried[cls] += w;
    }
    return s;
}

EventStream synth_alternating(int C, std::vector<double> gaps, double jitter, std::size_t n_events, num::Rng& rng) {
    if (C < 1) throw std::invalid_argument("synth_alternating: C must be positive");
    if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw std::invalid_argument("synth_alternating: bad jitter");
    if (gaps.empty()) {
        for (int c = 0; c < C; ++c) gaps.push_back(std::pow(10.0, -c));
    }
    if (gaps.size() != static_cast<std::size_t>(C)) {
        throw std::invalid_argument("synth_alternating: need one gap per class");
    }
    for (double g : gaps) {
        if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("synth_alternating: gaps must be positive");
    }
    EventStream s;
    s.num_classes = C;
    s.events.reserve(n_events);
    double t = 0.0;
    for (std::size_t i = 0; i < n_events; ++i) {
        const auto c = static_cast<int>(i % static_cast<std::size_t>(C));
        const double factor = jitter > 0.0 ? std::exp(jitter * rng.normal()) : 1.0;
        t += gaps[static_cast<std::size_t>(c)] * factor;
        s.events.push_back({t, c});
    }
    return s;
}

double alternating_bayes_mae(double jitter) {
    if (!(jitter >= 0.0)) throw std::invalid_argument("alternating_bayes_mae: bad jitter");
    if (jitter == 0.0) return 0.0;
    const double sd = jitter / std::numbers::ln10;
    // 2 * int_0^inf x phi(x; sd) dx
    auto f = [sd](double x) {
        const double z = x / sd;
        return 2.0 * x * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
    };
    boost::math::quadrature::exp_sinh<double> integrator;
    return integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t na = a.size(), nb = b.size();
    if (na == nb) {
        double s = 0.0;
        for (std::size_t i = 0; i < na; ++i) s += std::abs(a[i] - b[i]);
        return s / static_cast<double>(na);
    }
    // integrate |Qa(u) - Qb(u)| over u; breakpoints i/na and j/nb in units of 1/(na nb)
    double s = 0.0;
    std::size_t i = 0, j = 0, prev = 0;
    while (i < na && j < nb) {
        const std::size_t next_a = (i + 1) * nb, next_b = (j + 1) * na;
        const std::size_t next = std::min(next_a, next_b);
        s += std::abs(a[i] - b[j]) * static_cast<double>(next - prev);
        prev = next;
        if (next_a == next) ++i;
        if (next_b == next) ++j;
    }
    return s / (static_cast<double>(na) * static_cast<double>(nb));
}

// ---------------------------------------------------------------- model evaluation

EvalReport evaluate_model(const std::vector<ingest::TrainingPair>& windows, const model::Model& model,
                          const diffusion::Schedule& schedule, const ingest::NormStats& norm, int tau,
                          std::uint64_t seed) {
    (void)sampler::visited_steps(schedule.K, tau); // validates tau
    if (windows.empty()) throw std::invalid_argument("evaluate_model: no windows");
    std::vector<Outcome> preds(windows.size());
    const sampler::SamplerConfig config{tau, false, seed};
    tbb::enumerable_thread_specific<sampler::Predictor> predictors(
        [&] { return sampler::Predictor(model, schedule, norm); });

    const auto start = std::chrono::steady_clock::now();
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, windows.size()),
                      [&](const tbb::blocked_range<std::size_t>& range) {
                          sampler::Predictor& predictor = predictors.local();
                          for (std::size_t w = range.begin(); w != range.end(); ++w) {
                              num::Rng rng = sampler::window_rng(seed, w);
                              const auto p = predictor.predict(windows[w].context, config, rng);
                              preds[w] = {p.dt_seconds, p.cls};
                          }
                      });
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::size_t evals = 0;
    for (const auto& p : predictors) evals += p.evaluations();
    const auto truths = truths_of(windows);
    EvalReport r = score(preds, truths, norm, model.config.C);
    r.wall_time_per_event = elapsed / static_cast<double>(windows.size());
    r.tau = tau;
    r.evaluations = static_cast<int>(evals / windows.size());
    return r;
}

EvalReport evaluate_baseline(const std::vector<ingest::TrainingPair>& windows, const EmpiricalBaseline& baseline,
                             const ingest::NormStats& norm, int num_classes) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<Outcome> preds(windows.size(), baseline.predict());
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EvalReport r = score(preds, truths_of(windows), norm, num_classes);
    r.wall_time_per_event = elapsed / static_cast<double>(windows.size());
    return r;
}

EvalReport evaluate_hawkes(const std::vector<ingest::TrainingPair>& windows, const HawkesParams& params,
                           const ingest::NormStats& norm) {
    std::vector<Outcome> preds(windows.size());
    const auto start = std::chrono::steady_clock::now();
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, windows.size()),
                      [&](const tbb::blocked_range<std::size_t>& range) {
                          for (std::size_t w = range.begin(); w != range.end(); ++w) {
                              preds[w] = hawkes_predict(params, windows[w].context);
                          }
                      });
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EvalReport r = score(preds, truths_of(windows), norm, params.dim());
    r.wall_time_per_event = elapsed / static_cast<double>(windows.size());
    return r;
}

} // namespace lobdif::eval
