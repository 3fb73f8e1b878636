#include "lobdif/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/info.h>
#include <tbb/task_arena.h>

namespace lobdif::trainer {

using ingest::TrainingPair;
using num::ParamSet;
using num::Rng;
using num::Tensor;

namespace {

// Stream ids under the master seed.
constexpr std::uint64_t kShuffleStream = 101;
constexpr std::uint64_t kTrainNoiseStream = 102;
constexpr std::uint64_t kValidNoiseStream = 103;

} // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (K < 1) throw std::invalid_argument("K must be positive");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
        throw std::invalid_argument("beta range must satisfy 0 < beta_start < beta_end < 1");
    }
    if (tau < 1 || tau > K || K % tau != 0) throw std::invalid_argument("tau must divide K");
    if (threads < 0) throw std::invalid_argument("threads must be >= 0");
    if (model.Mk < 0) throw std::invalid_argument("Mk must be >= 0");
    model.encoder().validate();
}

nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"epochs", c.epochs},
        {"lr", c.lr},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"K", c.K},
        {"beta_start", c.beta_start},
        {"beta_end", c.beta_end},
        {"tau", c.tau},
        {"L", c.model.L},
        {"M", c.model.M},
        {"C", c.model.C},
        {"Mk", c.model.Mk},
        {"use_time_encoding", c.model.use_time_encoding},
        {"use_event_embedding", c.model.use_event_embedding},
        {"denoiser", denoiser::kind_name(c.model.kind)},
        {"threads", c.threads},
    };
}

void update_from_json(TrainConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "epochs") c.epochs = value.get<int>();
            else if (key == "lr") c.lr = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "K") c.K = value.get<int>();
            else if (key == "beta_start") c.beta_start = value.get<double>();
            else if (key == "beta_end") c.beta_end = value.get<double>();
            else if (key == "tau") c.tau = value.get<int>();
            else if (key == "L") c.model.L = value.get<int>();
            else if (key == "M") c.model.M = value.get<int>();
            else if (key == "C") c.model.C = value.get<int>();
            else if (key == "Mk") c.model.Mk = value.get<int>();
            else if (key == "use_time_encoding") c.model.use_time_encoding = value.get<bool>();
            else if (key == "use_event_embedding") c.model.use_event_embedding = value.get<bool>();
            else if (key == "denoiser") c.model.kind = denoiser::parse_kind(value.get<std::string>());
            else if (key == "threads") c.threads = value.get<int>();
            else throw std::invalid_argument("unknown config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config key '" + key + "': " + e.what());
        }
    }
}

Dataset make_dataset(const ingest::EventStream& stream, std::size_t L, double train_fraction, double valid_fraction,
                     double test_fraction) {
    stream.validate();
    const auto splits = ingest::split_stream(stream, train_fraction, valid_fraction, test_fraction, L);
    Dataset d;
    d.num_classes = stream.num_classes;
    d.norm = ingest::normalize_times(splits.train);
    d.train = ingest::build_windows(splits.train, L);
    d.valid = ingest::build_windows(splits.valid, L);
    d.test = ingest::build_windows(splits.test, L);
    return d;
}

NoiseDraw draw_noise(Rng& rng, int K, int C) {
    NoiseDraw d;
    d.k = static_cast<int>(rng.uniform_int(1, K));
    d.eps.resize(static_cast<std::size_t>(1 + C));
    for (double& v : d.eps) v = rng.normal();
    return d;
}

double loss_term(const TrainingPair& pair, int k, const std::vector<double>& eps, const model::Model& model,
                 const diffusion::Schedule& schedule, const ingest::NormStats& norm) {
    model::LossGraph graph(model, nullptr);
    return graph.evaluate(pair, norm, k, eps, schedule);
}

struct BatchEngine::Worker {
    ParamSet grads;
    std::unique_ptr<model::LossGraph> graph;
    double loss_sum = 0.0;
};

BatchEngine::BatchEngine(model::Model& model, const diffusion::Schedule& schedule, const ingest::NormStats& norm)
    : model_(model), schedule_(schedule), norm_(norm) {
    total_ = model.params.zeros_like();
    for (std::size_t c = 0; c < kChunks; ++c) {
        auto w = std::make_unique<Worker>();
        w->grads = model.params.zeros_like();
        w->graph = std::make_unique<model::LossGraph>(model, &w->grads);
        workers_.push_back(std::move(w));
    }
}

BatchEngine::~BatchEngine() = default;

double BatchEngine::run(std::span<const TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
                        std::span<const std::size_t> ids, bool backward) {
    if (pairs.empty()) throw std::invalid_argument("empty batch");
    if (draws.size() != pairs.size() || ids.size() != pairs.size()) {
        throw std::invalid_argument("batch: pairs, draws and ids differ in length");
    }
    const std::size_t n = pairs.size();
    const double weight = 1.0 / static_cast<double>(n);

    tbb::parallel_for(
        tbb::blocked_range<std::size_t>(0, kChunks, 1),
        [&](const tbb::blocked_range<std::size_t>& range) {
            for (std::size_t c = range.begin(); c != range.end(); ++c) {
                Worker& w = *workers_[c];
                w.loss_sum = 0.0;
                if (backward) w.grads.set_zero();
                const std::size_t lo = c * n / kChunks;
                const std::size_t hi = (c + 1) * n / kChunks;
                for (std::size_t i = lo; i < hi; ++i) {
                    double loss = 0.0;
                    try {
                        loss = backward ? w.graph->accumulate(*pairs[i], norm_, draws[i].k, draws[i].eps, schedule_,
                                                              weight)
                                        : w.graph->evaluate(*pairs[i], norm_, draws[i].k, draws[i].eps, schedule_);
                    } catch (const std::domain_error& e) {
                        throw std::domain_error("non-finite value at window " + std::to_string(ids[i]) +
                                                ", k=" + std::to_string(draws[i].k) + ": " + e.what());
                    }
                    if (!std::isfinite(loss)) {
                        throw std::domain_error("non-finite loss at window " + std::to_string(ids[i]) +
                                                ", k=" + std::to_string(draws[i].k));
                    }
                    w.loss_sum += loss;
                }
            }
        },
        tbb::simple_partitioner());

    double total = 0.0;
    if (backward) total_.set_zero();
    for (const auto& w : workers_) {
        total += w->loss_sum;
        if (backward) total_.axpy(1.0, w->grads);
    }
    return total * weight;
}

double BatchEngine::loss_and_gradient(std::span<const TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
                                      std::span<const std::size_t> ids) {
    return run(pairs, draws, ids, true);
}

double BatchEngine::mean_loss(std::span<const TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
                              std::span<const std::size_t> ids) {
    return run(pairs, draws, ids, false);
}

double train_step(BatchEngine& engine, std::span<const TrainingPair* const> pairs, std::span<const NoiseDraw> draws,
                  std::span<const std::size_t> ids, model::Model& model, num::AdamState& adam) {
    const double loss = engine.loss_and_gradient(pairs, draws, ids);
    num::adam_step(model.params, engine.grads(), adam);
    return loss;
}

double train_step(std::span<const TrainingPair> batch, model::Model& model, num::AdamState& adam, Rng& rng,
                  const diffusion::Schedule& schedule, const ingest::NormStats& norm) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    std::vector<const TrainingPair*> pairs;
    std::vector<NoiseDraw> draws;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        pairs.push_back(&batch[i]);
        draws.push_back(draw_noise(rng, schedule.K, model.config.C));
        ids.push_back(i);
    }
    BatchEngine engine(model, schedule, norm);
    return train_step(engine, pairs, draws, ids, model, adam);
}

// ---------------------------------------------------------------------------
// checkpoint file

namespace {

constexpr char kMagic[7] = {'L', 'O', 'B', 'D', 'I', 'F', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(b)])) << (8 * b);
    }
    return v;
}

struct TensorBlock {
    std::string prefix;
    const ParamSet* set;
};

nlohmann::json norm_json(const ingest::NormStats& n) {
    return {{"mean_log_dt", n.mean_log_dt}, {"std_log_dt", n.std_log_dt}, {"floor_dt", n.floor_dt}};
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const std::vector<TensorBlock> blocks{{"model/", &ckpt.model.params},
                                          {"current/", &ckpt.state.current},
                                          {"adam.m/", &ckpt.state.adam.m},
                                          {"adam.v/", &ckpt.state.adam.v}};
    nlohmann::json dir = nlohmann::json::array();
    std::string data;
    for (const auto& block : blocks) {
        for (std::size_t i = 0; i < block.set->size(); ++i) {
            const Tensor& t = (*block.set)[i];
            dir.push_back({{"name", block.prefix + block.set->name(i)}, {"shape", t.shape()}, {"offset", data.size()}});
            for (double v : t.values()) put_u64(data, std::bit_cast<std::uint64_t>(v));
        }
    }
    const nlohmann::json meta{
        {"config", to_json(ckpt.config)},
        {"norm", norm_json(ckpt.norm)},
        {"rng", {{"key", ckpt.rng_key}, {"counter", ckpt.rng_counter}}},
        {"epoch", ckpt.state.epoch},
        {"best_valid", ckpt.state.best_valid},
        {"best_epoch", ckpt.state.best_epoch},
        {"adam", {{"step", ckpt.state.adam.step}, {"lr", ckpt.state.adam.lr}}},
        {"data_bytes", data.size()},
        {"tensors", dir},
    };
    const std::string text = meta.dump();
    std::string out(kMagic, sizeof kMagic);
    out.push_back(static_cast<char>(kCheckpointVersion));
    put_u64(out, text.size());
    out += text;
    out += data;
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 7, bytes.begin())) {
        throw std::runtime_error("checkpoint: bad magic bytes");
    }
    const auto version = static_cast<std::uint8_t>(bytes[7]);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }
    if (bytes.size() < 16) throw std::runtime_error("checkpoint: truncated header");
    const std::uint64_t meta_len = get_u64(bytes, 8);
    if (meta_len > bytes.size() - 16) throw std::runtime_error("checkpoint: truncated metadata");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(meta_len));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: bad metadata: ") + e.what());
    }
    const std::size_t data_start = 16 + meta_len;
    try {
        const std::size_t data_bytes = meta.at("data_bytes").get<std::size_t>();
        if (bytes.size() - data_start != data_bytes) throw std::runtime_error("checkpoint: truncated tensor data");

        Checkpoint ckpt;
        update_from_json(ckpt.config, meta.at("config"));
        const auto& n = meta.at("norm");
        ckpt.norm = {n.at("mean_log_dt").get<double>(), n.at("std_log_dt").get<double>(), n.at("floor_dt").get<double>()};
        ckpt.rng_key = meta.at("rng").at("key").get<std::uint64_t>();
        ckpt.rng_counter = meta.at("rng").at("counter").get<std::uint64_t>();
        ckpt.state.epoch = meta.at("epoch").get<int>();
        ckpt.state.best_valid = meta.at("best_valid").get<double>();
        ckpt.state.best_epoch = meta.at("best_epoch").get<int>();
        ckpt.state.adam.step = meta.at("adam").at("step").get<std::uint64_t>();
        ckpt.state.adam.lr = meta.at("adam").at("lr").get<double>();
        ckpt.model.config = ckpt.config.model;

        for (const auto& entry : meta.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<num::Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = num::shape_size(shape);
            if (offset % 8 != 0 || offset > data_bytes || count > (data_bytes - offset) / 8) {
                throw std::runtime_error("checkpoint: tensor '" + name + "' lies outside the data block");
            }
            std::vector<double> values(count);
            for (std::size_t i = 0; i < count; ++i) {
                values[i] = std::bit_cast<double>(get_u64(bytes, data_start + offset + 8 * i));
            }
            Tensor t(shape, std::move(values));
            const auto slash = name.find('/');
            if (slash == std::string::npos) throw std::runtime_error("checkpoint: bad tensor name '" + name + "'");
            const std::string block = name.substr(0, slash);
            const std::string pname = name.substr(slash + 1);
            if (block == "model") ckpt.model.params.add(pname, std::move(t));
            else if (block == "current") ckpt.state.current.add(pname, std::move(t));
            else if (block == "adam.m") ckpt.state.adam.m.add(pname, std::move(t));
            else if (block == "adam.v") ckpt.state.adam.v.add(pname, std::move(t));
            else throw std::runtime_error("checkpoint: unknown tensor block '" + block + "'");
        }
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: bad metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

std::string format_loss_log(const std::vector<EpochLog>& log) {
    std::string out = "epoch,train_loss,valid_loss\n";
    for (const EpochLog& e : log) {
        out += std::to_string(e.epoch) + ',' + ingest::format_double(e.train_loss) + ',' +
               ingest::format_double(e.valid_loss) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, Rng rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

double validation_loss(BatchEngine& engine, const std::vector<TrainingPair>& valid, const std::vector<NoiseDraw>& draws,
                       std::size_t batch) {
    double total = 0.0;
    std::vector<const TrainingPair*> pairs;
    std::vector<std::size_t> ids;
    for (std::size_t lo = 0; lo < valid.size(); lo += batch) {
        const std::size_t hi = std::min(valid.size(), lo + batch);
        pairs.clear();
        ids.clear();
        for (std::size_t i = lo; i < hi; ++i) {
            pairs.push_back(&valid[i]);
            ids.push_back(i);
        }
        total += engine.mean_loss(pairs, std::span(draws).subspan(lo, hi - lo), ids) * static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(valid.size());
}

TrainResult train_impl(const Dataset& data, const TrainConfig& config, const Checkpoint* resume,
                       const EpochCallback& on_epoch) {
    config.validate();
    if (data.train.empty()) throw std::invalid_argument("train: no training windows");
    if (data.valid.empty()) throw std::invalid_argument("train: no validation windows");
    if (data.num_classes != config.model.C) {
        throw std::invalid_argument("train: data has " + std::to_string(data.num_classes) + " classes, config C=" +
                                    std::to_string(config.model.C));
    }
    const auto schedule = config.schedule();
    const int C = config.model.C;
    const Rng master(config.seed);

    TrainResult result;
    Checkpoint& ckpt = result.checkpoint;
    ckpt.config = config;
    ckpt.norm = data.norm;
    ckpt.rng_key = master.key();
    ckpt.rng_counter = master.counter();

    model::Model live;
    if (resume != nullptr) {
        if (to_json(resume->config) != to_json(config)) {
            // only the epoch budget may change on resume
            TrainConfig a = resume->config, b = config;
            a.epochs = b.epochs = 0;
            a.threads = b.threads = 0;
            if (to_json(a) != to_json(b)) throw std::invalid_argument("resume: configuration differs from checkpoint");
        }
        if (!(resume->norm == data.norm)) throw std::invalid_argument("resume: normalization differs from checkpoint");
        live.config = config.model;
        live.params = resume->state.current;
        ckpt.model = resume->model;
        ckpt.state = resume->state;
    } else {
        live = model::Model::initialize(config.model, config.seed);
        ckpt.model = live;
        ckpt.state.adam = num::AdamState::for_params(live.params, config.lr);
        ckpt.state.epoch = 0;
        ckpt.state.best_epoch = 0;
    }

    BatchEngine engine(live, schedule, data.norm);

    std::vector<NoiseDraw> valid_draws;
    valid_draws.reserve(data.valid.size());
    for (std::size_t i = 0; i < data.valid.size(); ++i) {
        Rng r = master.derive(kValidNoiseStream).derive(i);
        valid_draws.push_back(draw_noise(r, config.K, C));
    }
    const auto batch = static_cast<std::size_t>(config.batch_size);
    if (resume == nullptr) ckpt.state.best_valid = validation_loss(engine, data.valid, valid_draws, batch);

    std::vector<const TrainingPair*> pairs;
    std::vector<NoiseDraw> draws;
    std::vector<std::size_t> ids;
    for (int epoch = ckpt.state.epoch + 1; epoch <= config.epochs; ++epoch) {
        const auto e = static_cast<std::uint64_t>(epoch);
        const auto order = shuffled_order(data.train.size(), master.derive(kShuffleStream).derive(e));
        const Rng noise = master.derive(kTrainNoiseStream).derive(e);
        double train_total = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += batch) {
            const std::size_t hi = std::min(order.size(), lo + batch);
            pairs.clear();
            draws.clear();
            ids.clear();
            for (std::size_t i = lo; i < hi; ++i) {
                pairs.push_back(&data.train[order[i]]);
                Rng r = noise.derive(order[i]);
                draws.push_back(draw_noise(r, config.K, C));
                ids.push_back(order[i]);
            }
            train_total += train_step(engine, pairs, draws, ids, live, ckpt.state.adam) * static_cast<double>(hi - lo);
        }
        EpochLog entry{epoch, train_total / static_cast<double>(order.size()),
                       validation_loss(engine, data.valid, valid_draws, batch)};
        if (entry.valid_loss < ckpt.state.best_valid) {
            ckpt.state.best_valid = entry.valid_loss;
            ckpt.state.best_epoch = epoch;
            ckpt.model.params = live.params;
        }
        ckpt.state.epoch = epoch;
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    ckpt.state.current = live.params;
    ckpt.model.config = config.model;
    return result;
}

} // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const Checkpoint* resume,
                  const EpochCallback& on_epoch) {
    if (config.threads > 0) {
        tbb::task_arena arena(std::min(config.threads, tbb::info::default_concurrency()));
        return arena.execute([&] { return train_impl(data, config, resume, on_epoch); });
    }
    return train_impl(data, config, resume, on_epoch);
}

} // namespace lobdif::trainer
