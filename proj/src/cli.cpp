#include "lobdif/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lobdif/evalsuite.hpp"
#include "lobdif/ingest.hpp"
#include "lobdif/sampler.hpp"

namespace lobdif::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kRunKeys[] = {"input",     "data",  "out",      "checkpoint", "resume", "stochastic",
                                "taus",      "windows", "checkpoints", "baselines", "limit", "kind",
                                "n_events",  "jitter", "gaps",     "mu",         "A",      "decay"};

bool is_run_key(const std::string& key) {
    return std::find(std::begin(kRunKeys), std::end(kRunKeys), key) != std::end(kRunKeys);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::runtime_error("error reading '" + path + "'");
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("error writing '" + path.string() + "'");
}

fs::path prepare_out(const RunConfig& c) {
    const fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + c.out + "': " + ec.message());
    return dir;
}

void echo_config(const fs::path& dir, const RunConfig& c) { write_file(dir / "config.json", to_json(c).dump(2) + "\n"); }

json norm_to_json(const ingest::NormStats& n) {
    return {{"mean_log_dt", n.mean_log_dt}, {"std_log_dt", n.std_log_dt}, {"floor_dt", n.floor_dt}};
}

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
}

ingest::EventStream load_events(const RunConfig& c, int num_classes) {
    require(!c.data.empty(), "--data is required");
    return ingest::read_events_csv(read_file(c.data), num_classes);
}

trainer::Checkpoint load_ckpt(const RunConfig& c) {
    require(!c.checkpoint.empty(), "--checkpoint is required");
    if (!fs::exists(c.checkpoint)) throw std::runtime_error("checkpoint '" + c.checkpoint + "' does not exist");
    return trainer::load_checkpoint(c.checkpoint);
}

void check_tau(int tau, int K) {
    require(tau >= 1, "tau must be at least 1, got " + std::to_string(tau));
    require(tau <= K && K % tau == 0, "tau=" + std::to_string(tau) + " does not divide K=" + std::to_string(K));
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(!c.input.empty(), "--input is required");
    const std::string text = read_file(c.input);
    const auto messages = ingest::parse_lobster(text);
    const auto mapped = ingest::to_event_stream(messages, ingest::ClassMapping::standard(), c.train.model.C);
    const fs::path dir = prepare_out(c);
    write_file(dir / "events.csv", ingest::write_events_csv(mapped.stream));
    ingest::NormStats norm;
    if (mapped.stream.size() >= 2) {
        norm = ingest::normalize_times(mapped.stream);
    } else {
        err << "warning: fewer than two events, norm.json holds the identity transform\n";
    }
    write_file(dir / "norm.json", norm_to_json(norm).dump(2) + "\n");
    echo_config(dir, c);
    out << "parsed " << mapped.parsed << " mapped " << mapped.mapped << " dropped " << mapped.dropped << '\n';
    return kExitOk;
}

int cmd_synth(const RunConfig& c, std::ostream& out, std::ostream&) {
    num::Rng rng(c.train.seed);
    ingest::EventStream stream;
    try {
        if (c.kind == "alternating") {
            stream = eval::synth_alternating(c.train.model.C, c.gaps, c.jitter, c.n_events, rng);
        } else if (c.kind == "hawkes") {
            eval::HawkesParams p;
            p.mu = c.mu;
            p.A = c.A.empty() ? std::vector<double>(c.mu.size() * c.mu.size(), 0.0) : c.A;
            p.decay = c.decay;
            p.validate();
            stream = eval::synth_hawkes(p, c.n_events, rng);
        } else {
            throw UsageError("unknown --kind '" + c.kind + "' (alternating, hawkes)");
        }
    } catch (const UsageError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const fs::path dir = prepare_out(c);
    write_file(dir / "events.csv", ingest::write_events_csv(stream));
    echo_config(dir, c);
    out << "wrote " << stream.size() << " events\n";
    return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
    try {
        c.train.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto stream = load_events(c, c.train.model.C);
    const auto data = trainer::make_dataset(stream, static_cast<std::size_t>(c.train.model.L));
    std::optional<trainer::Checkpoint> resume;
    if (!c.resume.empty()) {
        if (!fs::exists(c.resume)) throw std::runtime_error("checkpoint '" + c.resume + "' does not exist");
        resume = trainer::load_checkpoint(c.resume);
    }
    if (c.train.epochs == 0) err << "warning: epochs=0, the checkpoint holds the initial parameters\n";
    const fs::path dir = prepare_out(c);
    echo_config(dir, c);
    const auto result = trainer::train(data, c.train, resume ? &*resume : nullptr, [&](const trainer::EpochLog& e) {
        err << "epoch " << e.epoch << " train " << ingest::format_double(e.train_loss) << " valid "
            << ingest::format_double(e.valid_loss) << '\n';
    });
    trainer::save_checkpoint(result.checkpoint, (dir / "checkpoint.bin").string());
    write_file(dir / "loss_log.csv", trainer::format_loss_log(result.log));
    out << "train " << data.train.size() << " valid " << data.valid.size() << " windows; best epoch "
        << result.checkpoint.state.best_epoch << " valid loss " << ingest::format_double(result.checkpoint.state.best_valid)
        << '\n';
    return kExitOk;
}

struct EvalData {
    trainer::Checkpoint ckpt;
    ingest::Splits splits;
    std::vector<ingest::TrainingPair> test;
};

EvalData eval_data(const RunConfig& c) {
    EvalData d{load_ckpt(c), {}, {}};
    const auto& mc = d.ckpt.config.model;
    const auto stream = load_events(c, mc.C);
    d.splits = ingest::split_stream(stream, 0.8, 0.1, 0.1, static_cast<std::size_t>(mc.L));
    d.test = ingest::build_windows(d.splits.test, static_cast<std::size_t>(mc.L));
    return d;
}

int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream&) {
    require(!c.taus.empty(), "--tau needs at least one value");
    for (int tau : c.taus) require(tau >= 1, "tau must be at least 1, got " + std::to_string(tau));
    EvalData d = eval_data(c);
    for (int tau : c.taus) check_tau(tau, d.ckpt.config.K);
    if (c.limit > 0 && c.limit < d.test.size()) d.test.resize(c.limit);
    const auto schedule = d.ckpt.config.schedule();
    const int C = d.ckpt.config.model.C;
    const fs::path dir = prepare_out(c);
    echo_config(dir, c);

    std::string csv = "model," + eval::EvalReport::csv_header(C) + "\n";
    for (int tau : c.taus) {
        const auto r = eval::evaluate_model(d.test, d.ckpt.model, schedule, d.ckpt.norm, tau, c.train.seed);
        write_file(dir / ("report_tau" + std::to_string(tau) + ".txt"), r.to_text());
        csv += "lobdif," + r.to_csv_row() + "\n";
        out << "tau " << tau << " accuracy " << ingest::format_double(r.accuracy) << " mae_log "
            << ingest::format_double(r.mae_log) << '\n';
    }
    if (c.baselines) {
        auto emit = [&](const std::string& name, const eval::EvalReport& r) {
            write_file(dir / ("report_" + name + ".txt"), r.to_text());
            csv += name + "," + r.to_csv_row() + "\n";
            out << name << " accuracy " << ingest::format_double(r.accuracy) << " mae_log "
                << ingest::format_double(r.mae_log) << '\n';
        };
        emit("empirical",
             eval::evaluate_baseline(d.test, eval::baseline_empirical(d.splits.train), d.ckpt.norm, C));
        eval::HawkesFitOptions poisson;
        poisson.fit_excitation = false;
        emit("poisson", eval::evaluate_hawkes(d.test, eval::hawkes_fit(d.splits.train, poisson).params, d.ckpt.norm));
        emit("hawkes", eval::evaluate_hawkes(d.test, eval::hawkes_fit(d.splits.train).params, d.ckpt.norm));
    }
    write_file(dir / "reports.csv", csv);
    return kExitOk;
}

int cmd_predict(const RunConfig& c, std::ostream& out, std::ostream&) {
    require(c.train.tau >= 1, "tau must be at least 1");
    const auto ckpt = load_ckpt(c);
    check_tau(c.train.tau, ckpt.config.K);
    const auto stream = load_events(c, ckpt.config.model.C);
    const auto L = static_cast<std::size_t>(ckpt.config.model.L);
    if (stream.size() < L) {
        throw std::runtime_error("predict needs " + std::to_string(L) + " context events, '" + c.data + "' has " +
                                 std::to_string(stream.size()));
    }
    const std::span<const ingest::Event> context(stream.events.data() + (stream.size() - L), L);
    const auto schedule = ckpt.config.schedule();
    const auto p = sampler::predict_next(context, ckpt.model, schedule,
                                         sampler::SamplerConfig{c.train.tau, c.stochastic, c.train.seed}, ckpt.norm);
    const json j = {{"dt_seconds", p.dt_seconds}, {"class", p.cls},         {"raw_t", p.raw_t},
                    {"raw_e", p.raw_e},           {"tau", c.train.tau},     {"seed", c.train.seed}};
    const fs::path dir = prepare_out(c);
    echo_config(dir, c);
    write_file(dir / "prediction.json", j.dump(2) + "\n");
    out << j.dump() << '\n';
    return kExitOk;
}

int cmd_trace(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.train.tau >= 1, "tau must be at least 1");
    require(c.windows >= 1, "--windows must be positive");
    EvalData d = eval_data(c);
    const int K = d.ckpt.config.K;
    check_tau(c.train.tau, K);
    std::vector<int> checkpoints = c.checkpoints;
    if (checkpoints.empty()) checkpoints = sampler::visited_steps(K, c.train.tau);
    const auto visited = sampler::visited_steps(K, c.train.tau);
    for (int k : checkpoints) {
        require(std::find(visited.begin(), visited.end(), k) != visited.end(),
                "checkpoint " + std::to_string(k) + " is not visited with tau=" + std::to_string(c.train.tau));
    }
    if (c.windows > d.test.size()) {
        err << "warning: " << c.windows << " windows requested, only " << d.test.size() << " available\n";
    } else {
        d.test.resize(c.windows);
    }
    const auto schedule = d.ckpt.config.schedule();
    const auto rows =
        sampler::trace_denoising(d.test, d.ckpt.model, schedule, d.ckpt.norm, c.train.tau, checkpoints, c.train.seed);
    const fs::path dir = prepare_out(c);
    echo_config(dir, c);
    write_file(dir / "trace.csv", sampler::write_trace_csv(rows));
    out << "traced " << d.test.size() << " windows at " << checkpoints.size() << " steps\n";
    return kExitOk;
}

std::string flag_key(const std::string& long_name) {
    std::string k = long_name;
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

} // namespace

json to_json(const RunConfig& c) {
    json j = trainer::to_json(c.train);
    j["input"] = c.input;
    j["data"] = c.data;
    j["out"] = c.out;
    j["checkpoint"] = c.checkpoint;
    j["resume"] = c.resume;
    j["stochastic"] = c.stochastic;
    j["taus"] = c.taus;
    j["windows"] = c.windows;
    j["checkpoints"] = c.checkpoints;
    j["baselines"] = c.baselines;
    j["limit"] = c.limit;
    j["kind"] = c.kind;
    j["n_events"] = c.n_events;
    j["jitter"] = c.jitter;
    j["gaps"] = c.gaps;
    j["mu"] = c.mu;
    j["A"] = c.A;
    j["decay"] = c.decay;
    return j;
}

void update_from_json(RunConfig& c, const json& j) {
    if (!j.is_object()) throw UsageError("config must be a flat JSON object");
    json train_part = json::object();
    for (const auto& [key, value] : j.items()) {
        if (!is_run_key(key)) {
            train_part[key] = value;
            continue;
        }
        try {
            if (key == "input") c.input = value.get<std::string>();
            else if (key == "data") c.data = value.get<std::string>();
            else if (key == "out") c.out = value.get<std::string>();
            else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
            else if (key == "resume") c.resume = value.get<std::string>();
            else if (key == "stochastic") c.stochastic = value.get<bool>();
            else if (key == "taus") c.taus = value.get<std::vector<int>>();
            else if (key == "windows") c.windows = value.get<std::size_t>();
            else if (key == "checkpoints") c.checkpoints = value.get<std::vector<int>>();
            else if (key == "baselines") c.baselines = value.get<bool>();
            else if (key == "limit") c.limit = value.get<std::size_t>();
            else if (key == "kind") c.kind = value.get<std::string>();
            else if (key == "n_events") c.n_events = value.get<std::size_t>();
            else if (key == "jitter") c.jitter = value.get<double>();
            else if (key == "gaps") c.gaps = value.get<std::vector<double>>();
            else if (key == "mu") c.mu = value.get<std::vector<double>>();
            else if (key == "A") c.A = value.get<std::vector<double>>();
            else if (key == "decay") c.decay = value.get<double>();
        } catch (const json::exception& e) {
            throw UsageError("config key '" + key + "': " + e.what());
        }
    }
    try {
        trainer::update_from_json(c.train, train_part);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"lobdif: next limit-order-book event prediction with a conditional diffusion model", "lobdif"};
    app.require_subcommand(1);

    // Flags write into `flags`; only those given on the command line override
    // the config file.
    RunConfig flags;
    std::string config_path;
    std::string denoiser_name;
    std::vector<std::pair<CLI::Option*, std::string>> bound; // option, config key

    auto shared = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "flat JSON config file");
        bound.emplace_back(sub->add_option("--seed", flags.train.seed, "master seed"), "seed");
        bound.emplace_back(sub->add_option("--out", flags.out, "output directory"), "out");
        bound.emplace_back(sub->add_option("--threads", flags.train.threads, "worker threads, 0 = all"), "threads");
    };
    auto opt = [&](CLI::App* sub, const std::string& name, auto& target, const std::string& help) {
        CLI::Option* o = sub->add_option("--" + name, target, help);
        bound.emplace_back(o, flag_key(name));
        return o;
    };

    CLI::App* ingest_cmd = app.add_subcommand("ingest", "LOBSTER message file -> events.csv + norm.json");
    shared(ingest_cmd);
    opt(ingest_cmd, "input", flags.input, "LOBSTER message CSV");
    opt(ingest_cmd, "C", flags.train.model.C, "number of event classes");

    CLI::App* synth_cmd = app.add_subcommand("synth", "synthetic event stream -> events.csv");
    shared(synth_cmd);
    opt(synth_cmd, "kind", flags.kind, "alternating or hawkes");
    opt(synth_cmd, "C", flags.train.model.C, "classes (alternating)");
    opt(synth_cmd, "n-events", flags.n_events, "number of events");
    opt(synth_cmd, "jitter", flags.jitter, "lognormal gap jitter (alternating)");
    opt(synth_cmd, "gaps", flags.gaps, "gap per class, comma separated (alternating)")->delimiter(',');
    opt(synth_cmd, "mu", flags.mu, "baseline rates, comma separated (hawkes)")->delimiter(',');
    opt(synth_cmd, "A", flags.A, "excitation matrix, row-major, comma separated (hawkes)")->delimiter(',');
    opt(synth_cmd, "decay", flags.decay, "kernel decay (hawkes)");

    CLI::App* train_cmd = app.add_subcommand("train", "train a model -> checkpoint.bin + loss_log.csv");
    shared(train_cmd);
    opt(train_cmd, "data", flags.data, "events.csv");
    opt(train_cmd, "resume", flags.resume, "continue from this checkpoint");
    opt(train_cmd, "epochs", flags.train.epochs, "training epochs");
    opt(train_cmd, "lr", flags.train.lr, "Adam learning rate");
    opt(train_cmd, "batch-size", flags.train.batch_size, "windows per step");
    opt(train_cmd, "K", flags.train.K, "diffusion steps");
    opt(train_cmd, "beta-start", flags.train.beta_start, "first beta");
    opt(train_cmd, "beta-end", flags.train.beta_end, "last beta");
    opt(train_cmd, "tau", flags.train.tau, "sampling stride recorded with the model");
    opt(train_cmd, "L", flags.train.model.L, "context length");
    opt(train_cmd, "M", flags.train.model.M, "model width");
    opt(train_cmd, "C", flags.train.model.C, "event classes");
    opt(train_cmd, "Mk", flags.train.model.Mk, "step embedding width, 0 = M");
    opt(train_cmd, "use-time-encoding", flags.train.model.use_time_encoding, "true/false");
    opt(train_cmd, "use-event-embedding", flags.train.model.use_event_embedding, "true/false");
    bound.emplace_back(train_cmd->add_option("--denoiser", denoiser_name, "attention, mlp or gru"), "denoiser");

    CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the test split");
    shared(eval_cmd);
    opt(eval_cmd, "data", flags.data, "events.csv");
    opt(eval_cmd, "checkpoint", flags.checkpoint, "checkpoint.bin");
    bound.emplace_back(eval_cmd->add_option("--tau", flags.taus, "strides, comma separated")->delimiter(','), "taus");
    opt(eval_cmd, "limit", flags.limit, "score only the first N test windows");
    bound.emplace_back(eval_cmd->add_flag("--baselines", flags.baselines, "also score the classical baselines"),
                       "baselines");

    CLI::App* predict_cmd = app.add_subcommand("predict", "predict the event after the last L events of --data");
    shared(predict_cmd);
    opt(predict_cmd, "data", flags.data, "events.csv");
    opt(predict_cmd, "checkpoint", flags.checkpoint, "checkpoint.bin");
    opt(predict_cmd, "tau", flags.train.tau, "sampling stride");
    bound.emplace_back(predict_cmd->add_flag("--stochastic", flags.stochastic, "add the sigma noise term"),
                       "stochastic");

    CLI::App* trace_cmd = app.add_subcommand("trace", "partial denoising states -> trace.csv");
    shared(trace_cmd);
    opt(trace_cmd, "data", flags.data, "events.csv");
    opt(trace_cmd, "checkpoint", flags.checkpoint, "checkpoint.bin");
    opt(trace_cmd, "tau", flags.train.tau, "sampling stride");
    opt(trace_cmd, "windows", flags.windows, "number of test windows");
    opt(trace_cmd, "checkpoints", flags.checkpoints, "steps to record, comma separated")->delimiter(',');

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    RunConfig config;
    try {
        if (!config_path.empty()) {
            json file;
            try {
                file = json::parse(read_file(config_path));
            } catch (const json::parse_error& e) {
                throw UsageError("config '" + config_path + "' is not valid JSON: " + e.what());
            }
            update_from_json(config, file);
        }
        json overrides = json::object();
        const json flag_values = to_json(flags);
        for (const auto& [o, key] : bound) {
            if (o->count() == 0) continue;
            overrides[key] = key == "denoiser" ? json(denoiser_name) : flag_values.at(key);
        }
        update_from_json(config, overrides);

        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "ingest") return cmd_ingest(config, out, err);
        if (name == "synth") return cmd_synth(config, out, err);
        if (name == "train") return cmd_train(config, out, err);
        if (name == "eval") return cmd_eval(config, out, err);
        if (name == "predict") return cmd_predict(config, out, err);
        if (name == "trace") return cmd_trace(config, out, err);
        throw UsageError("unknown command '" + name + "'");
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace lobdif::cli
