#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lobdif/trainer.hpp"

namespace lobdif::cli {

/// Exit codes: success, runtime/data error, usage/validation error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags or config values; maps to kExitUsage.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Every setting of every command as one flat document.
struct RunConfig {
    trainer::TrainConfig train;
    std::string input;      // ingest: LOBSTER message file
    std::string data;       // events.csv for train/eval/predict/trace
    std::string out = ".";  // run directory
    std::string checkpoint; // eval/predict/trace
    std::string resume;     // train: continue from this checkpoint
    bool stochastic = false;
    std::vector<int> taus{5, 10, 20, 50}; // eval
    std::size_t windows = 5000;           // trace
    std::vector<int> checkpoints;         // trace; empty means every visited step
    bool baselines = false;               // eval: also score the classical baselines
    std::size_t limit = 0;                // eval: score only the first N test windows, 0 = all
    // synth
    std::string kind = "alternating";
    std::size_t n_events = 20000;
    double jitter = 0.1;
    std::vector<double> gaps; // empty means 10^-c
    std::vector<double> mu;
    std::vector<double> A;
    double decay = 1.0;
};

[[nodiscard]] nlohmann::json to_json(const RunConfig& config);
/// Throws UsageError on unknown keys or wrongly typed values.
void update_from_json(RunConfig& config, const nlohmann::json& j);

/// Parses `args` (without the program name), runs the command and returns
/// the exit code. Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

} // namespace lobdif::cli
