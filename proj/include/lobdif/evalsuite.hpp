#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lobdif/diffusion.hpp"
#include "lobdif/ingest.hpp"
#include "lobdif/model.hpp"
#include "lobdif/rng.hpp"

namespace lobdif::eval {

/// A next-event guess or the realized next event: gap to the previous event
/// and class.
struct Outcome {
    double dt = 0.0;
    int cls = 0;
};

struct EvalReport {
    double accuracy = 0.0;
    double mae_log = 0.0;
    std::size_t n = 0;
    int num_classes = 0;
    std::vector<std::size_t> confusion; // row = true class, column = predicted class
    double wall_time_per_event = 0.0;   // seconds
    int tau = 0;                        // 0 when not a diffusion run
    int evaluations = 0;                // denoiser evaluations per prediction

    [[nodiscard]] std::size_t confusion_at(int truth, int predicted) const;
    /// `key=value` lines.
    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] static std::string csv_header(int num_classes);
    [[nodiscard]] std::string to_csv_row() const;
};

/// Accuracy and mean |log10 dt_pred - log10 dt_true|, both gaps clamped at
/// norm.floor_dt.
[[nodiscard]] EvalReport score(std::span<const Outcome> predictions, std::span<const Outcome> truths,
                               const ingest::NormStats& norm, int num_classes);

[[nodiscard]] Outcome truth_of(const ingest::TrainingPair& pair);
[[nodiscard]] std::vector<Outcome> truths_of(const std::vector<ingest::TrainingPair>& windows);

/// Majority class and median gap of a training stream.
struct EmpiricalBaseline {
    int cls = 0;
    double dt = 0.0;

    [[nodiscard]] Outcome predict() const { return {dt, cls}; }
};

[[nodiscard]] EmpiricalBaseline baseline_empirical(const ingest::EventStream& train);

/// Multivariate Hawkes process with kernel A[i][j] * w * exp(-w t): an event
/// of class j raises the intensity of class i.
struct HawkesParams {
    std::vector<double> mu;
    std::vector<double> A; // C x C row-major, A[i * C + j]
    double decay = 1.0;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(mu.size()); }
    [[nodiscard]] double a(int i, int j) const { return A[static_cast<std::size_t>(i * dim() + j)]; }
    /// Throws unless mu > 0, A >= 0, decay > 0 and the spectral radius of A is below 1.
    void validate() const;
    [[nodiscard]] bool stationary() const;
    /// (I - A)^-1 mu.
    [[nodiscard]] std::vector<double> stationary_rates() const;
};

/// Exact log-likelihood on the observation window [first event, last event].
[[nodiscard]] double hawkes_log_likelihood(const HawkesParams& params, const ingest::EventStream& stream);

struct HawkesFitOptions {
    std::vector<double> decay_grid{0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0};
    bool fit_excitation = true; // false fixes A = 0 (Poisson baseline)
    int max_iterations = 2000;
    double tolerance = 1e-10; // relative log-likelihood change that counts as converged
};

struct HawkesFit {
    HawkesParams params;
    double log_likelihood = 0.0;
    int iterations = 0; // for the selected decay
    bool warning = false; // ascent hit max_iterations before converging
    std::vector<double> trajectory; // log-likelihood after each accepted step, selected decay
};

[[nodiscard]] HawkesFit hawkes_fit(const ingest::EventStream& stream, const HawkesFitOptions& options = {});

/// Expected waiting time from the survival function of the total intensity,
/// and the class with the largest intensity at t_last + dt.
[[nodiscard]] Outcome hawkes_predict(const HawkesParams& params, std::span<const ingest::Event> context);

/// Ogata thinning; the first event time is the first accepted point after 0.
[[nodiscard]] ingest::EventStream synth_hawkes(const HawkesParams& params, std::size_t n_events, num::Rng& rng);

/// Classes cycle 0..C-1; the gap before an event of class c is
/// gaps[c] * exp(jitter * z). Empty `gaps` means 10^-c.
[[nodiscard]] ingest::EventStream synth_alternating(int C, std::vector<double> gaps, double jitter,
                                                    std::size_t n_events, num::Rng& rng);

/// Bayes-optimal mae_log on synth_alternating data: the next class is known
/// from the last one and log10 of the gap is normal with sd jitter / ln 10,
/// so the optimum is E|X - median| computed by quadrature.
[[nodiscard]] double alternating_bayes_mae(double jitter);

[[nodiscard]] double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// Runs the diffusion predictor over `windows` with stride `tau` and scores it.
[[nodiscard]] EvalReport evaluate_model(const std::vector<ingest::TrainingPair>& windows, const model::Model& model,
                                        const diffusion::Schedule& schedule, const ingest::NormStats& norm, int tau,
                                        std::uint64_t seed);

[[nodiscard]] EvalReport evaluate_baseline(const std::vector<ingest::TrainingPair>& windows,
                                           const EmpiricalBaseline& baseline, const ingest::NormStats& norm,
                                           int num_classes);

[[nodiscard]] EvalReport evaluate_hawkes(const std::vector<ingest::TrainingPair>& windows, const HawkesParams& params,
                                         const ingest::NormStats& norm);

} // namespace lobdif::eval
