#include "lobdif/fixtures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lobdif/cli.hpp"
#include "lobdif/diffusion.hpp"
#include "lobdif/rng.hpp"
#include "lobdif/sampler.hpp"

namespace lobdif::fixtures {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

bool as_number(const std::string& s, double& v) {
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    return ec == std::errc() && ptr == end && !s.empty();
}

std::string substitute(std::string arg, const fs::path& fixture, const fs::path& work) {
    auto replace = [&](const std::string& key, const std::string& value) {
        for (std::size_t pos; (pos = arg.find(key)) != std::string::npos;) arg.replace(pos, key.size(), value);
    };
    replace("{fixture}", fixture.string());
    replace("{work}", work.string());
    return arg;
}

FixtureResult run_cli_fixture(const json& m, const fs::path& dir, const fs::path& work) {
    FixtureResult r;
    std::vector<std::string> args;
    for (const auto& a : m.at("args")) args.push_back(substitute(a.get<std::string>(), dir, work));
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    std::string diff;
    const int want = m.value("exit_code", 0);
    if (code != want) {
        diff += "exit code " + std::to_string(code) + ", expected " + std::to_string(want) + "\n" + err.str();
    }
    if (m.contains("stdout_contains")) {
        const auto needle = m.at("stdout_contains").get<std::string>();
        if (out.str().find(needle) == std::string::npos) {
            diff += "stdout lacks '" + needle + "':\n" + out.str();
        }
    }
    for (const auto& c : m.value("compare", json::array())) {
        const fs::path actual = work / c.at("output").get<std::string>();
        const fs::path expected = dir / c.at("expected").get<std::string>();
        if (!fs::exists(actual)) {
            diff += "missing output " + actual.string() + "\n";
            continue;
        }
        const std::string d = diff_csv(slurp(actual), slurp(expected), c.value("abs_tol", 0.0));
        if (!d.empty()) diff += c.at("output").get<std::string>() + ":\n" + d;
    }
    r.passed = diff.empty();
    r.diff = diff;
    return r;
}

// x_K built from x0 and a fixed eps; an oracle that always answers eps makes
// every skip-step update exact, so sampling must return x0.
FixtureResult run_oracle_fixture(const json& m) {
    const int K = m.at("K").get<int>();
    const auto schedule =
        diffusion::make_schedule(K, m.at("beta_start").get<double>(), m.at("beta_end").get<double>());
    const int C = m.at("C").get<int>();
    const double tol = m.at("abs_tol").get<double>();
    num::Rng rng(m.at("seed").get<std::uint64_t>());
    double worst = 0.0;
    std::string diff;
    for (int c = 0; c < m.at("cases").get<int>(); ++c) {
        diffusion::DiffusionState x0;
        x0.t = 2.0 * rng.normal();
        x0.e.resize(static_cast<std::size_t>(C));
        for (double& v : x0.e) v = rng.normal();
        std::vector<double> eps(static_cast<std::size_t>(C) + 1);
        for (double& v : eps) v = rng.normal();
        const auto x_K = diffusion::forward_sample(x0, K, eps, schedule);
        const sampler::NoiseFn oracle = [&](const diffusion::DiffusionState&, int) { return eps; };
        for (int tau : m.at("taus").get<std::vector<int>>()) {
            num::Rng unused(0);
            const auto got = sampler::sample_skip(x_K, oracle, schedule, tau, unused);
            const auto a = got.flat();
            const auto b = x0.flat();
            for (std::size_t d = 0; d < a.size(); ++d) worst = std::max(worst, std::abs(a[d] - b[d]));
            if (worst > tol && diff.empty()) {
                diff = "case " + std::to_string(c) + " tau " + std::to_string(tau) + ": max abs error " +
                       std::to_string(worst) + "\n";
            }
        }
    }
    return {"", diff.empty(), diff};
}

} // namespace

std::vector<std::string> list_fixtures(const fs::path& root) {
    std::vector<std::string> names;
    if (!fs::is_directory(root)) throw std::runtime_error("fixture root '" + root.string() + "' is not a directory");
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

FixtureResult run_fixture(const std::string& name, const fs::path& root, const fs::path& work) {
    const fs::path dir = root / name;
    if (name.empty() || !fs::exists(dir / "manifest.json")) {
        throw std::invalid_argument("unknown fixture '" + name + "'");
    }
    const json m = json::parse(slurp(dir / "manifest.json"));
    const fs::path out = work / name;
    fs::remove_all(out);
    fs::create_directories(out);
    const std::string kind = m.at("kind").get<std::string>();
    FixtureResult r;
    if (kind == "cli") {
        r = run_cli_fixture(m, dir, out);
    } else if (kind == "sampler_oracle") {
        r = run_oracle_fixture(m);
    } else {
        throw std::invalid_argument("fixture '" + name + "': unknown kind '" + kind + "'");
    }
    r.name = name;
    return r;
}

std::string diff_csv(const std::string& actual, const std::string& expected, double abs_tol) {
    auto lines = [](const std::string& s) {
        auto v = split(s, '\n');
        while (!v.empty() && v.back().empty()) v.pop_back();
        return v;
    };
    const auto a = lines(actual);
    const auto e = lines(expected);
    std::string diff;
    if (a.size() != e.size()) {
        diff += std::to_string(a.size()) + " lines, expected " + std::to_string(e.size()) + "\n";
    }
    const std::size_t n = std::min(a.size(), e.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto ca = split(a[i], ',');
        const auto ce = split(e[i], ',');
        bool same = ca.size() == ce.size();
        for (std::size_t j = 0; same && j < ca.size(); ++j) {
            double x = 0.0, y = 0.0;
            if (as_number(ca[j], x) && as_number(ce[j], y)) {
                same = std::abs(x - y) <= abs_tol;
            } else {
                same = ca[j] == ce[j];
            }
        }
        if (!same) diff += "line " + std::to_string(i + 1) + ": got '" + a[i] + "', expected '" + e[i] + "'\n";
    }
    return diff;
}

} // namespace lobdif::fixtures
