#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobdif/diffusion.hpp"
#include "lobdif/ingest.hpp"
#include "lobdif/model.hpp"
#include "lobdif/params.hpp"

namespace lobdif::trainer {

struct TrainConfig {
    int epochs = 200;
    double lr = 2.0e-3;
    int batch_size = 64;
    std::uint64_t seed = 0;
    int K = 100;
    double beta_start = 1e-4;
    double beta_end = 0.2;
    int tau = 10; // stride used when evaluating during or after training
    model::ModelConfig model;
    int threads = 0; // 0 lets TBB decide; results do not depend on it

    void validate() const;
    [[nodiscard]] diffusion::Schedule schedule() const { return diffusion::make_schedule(K, beta_start, beta_end); }
};

[[nodiscard]] nlohmann::json to_json(const TrainConfig& config);
/// Reads the keys present in `j`; unknown keys are an error.
void update_from_json(TrainConfig& config, const nlohmann::json& j);

/// Windows of the three chronological splits, standardized with the
/// training split's statistics.
struct Dataset {
    std::vector<ingest::TrainingPair> train;
    std::vector<ingest::TrainingPair> valid;
    std::vector<ingest::TrainingPair> test;
    ingest::NormStats norm;
    int num_classes = 4;
};

[[nodiscard]] Dataset make_dataset(const ingest::EventStream& stream, std::size_t L, double train_fraction = 0.8,
                                   double valid_fraction = 0.1, double test_fraction = 0.1);

/// One (k, eps) draw for a training pair.
struct NoiseDraw {
    int k = 1;
    std::vector<double> eps; // [t, e...]
};

[[nodiscard]] NoiseDraw draw_noise(num::Rng& rng, int K, int C);

/// ||eps - eps_theta(x_k, h, k)||^2 for one pair.
[[nodiscard]] double loss_term(const ingest::TrainingPair& pair, int k, const std::vector<double>& eps,
                               const model::Model& model, const diffusion::Schedule& schedule,
                               const ingest::NormStats& norm);

/// Batched loss/gradient evaluation over a fixed number of chunks. Chunks run
/// in parallel and their gradients are summed in chunk order, so results do
/// not depend on the thread count.
class BatchEngine {
public:
    static constexpr std::size_t kChunks = 8;

    BatchEngine(model::Model& model, const diffusion::Schedule& schedule, const ingest::NormStats& norm);
    ~BatchEngine();
    BatchEngine(const BatchEngine&) = delete;
    BatchEngine& operator=(const BatchEngine&) = delete;

    /// Mean loss over the batch; gradients of the mean are left in grads().
    /// `ids` label the pairs in error messages.
    double loss_and_gradient(std::span<const ingest::TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
                             std::span<const std::size_t> ids);
    /// Mean loss without gradients.
    double mean_loss(std::span<const ingest::TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
                     std::span<const std::size_t> ids);
    [[nodiscard]] const num::ParamSet& grads() const noexcept { return total_; }

private:
    struct Worker;
    double run(std::span<const ingest::TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
               std::span<const std::size_t> ids, bool backward);

    model::Model& model_;
    const diffusion::Schedule& schedule_;
    ingest::NormStats norm_;
    std::vector<std::unique_ptr<Worker>> workers_;
    num::ParamSet total_;
};

/// One optimizer step on `pairs` with the given draws. Returns the mean loss.
double train_step(BatchEngine& engine, std::span<const ingest::TrainingPair* const> pairs,
                  std::span<const NoiseDraw> draws, std::span<const std::size_t> ids, model::Model& model,
                  num::AdamState& adam);

/// Convenience form: draws (k, eps) per pair from `rng` in order.
double train_step(std::span<const ingest::TrainingPair> batch, model::Model& model, num::AdamState& adam,
                  num::Rng& rng, const diffusion::Schedule& schedule, const ingest::NormStats& norm);

/// Everything needed to continue training where it stopped.
struct TrainingState {
    num::ParamSet current;
    num::AdamState adam;
    int epoch = 0; // completed epochs
    double best_valid = 0.0;
    int best_epoch = 0;
};

struct Checkpoint {
    TrainConfig config;
    ingest::NormStats norm;
    model::Model model; // best-validation parameters
    TrainingState state;
    std::uint64_t rng_key = 0;
    std::uint64_t rng_counter = 0;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
[[nodiscard]] Checkpoint load_checkpoint(const std::string& path);
[[nodiscard]] std::string serialize_checkpoint(const Checkpoint& ckpt);
[[nodiscard]] Checkpoint deserialize_checkpoint(const std::string& bytes);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
};

/// CSV with header `epoch,train_loss,valid_loss`.
[[nodiscard]] std::string format_loss_log(const std::vector<EpochLog>& log);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Seeded shuffled epochs over the training windows with per-epoch validation
/// loss under fixed draws; the best-validation parameters are kept. With
/// `resume`, training continues from its saved state.
[[nodiscard]] TrainResult train(const Dataset& data, const TrainConfig& config, const Checkpoint* resume = nullptr,
                                const EpochCallback& on_epoch = {});

} // namespace lobdif::trainer
