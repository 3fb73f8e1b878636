#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lobdif/fixtures.hpp"

// Runs the named fixtures (all of them when none are named) and prints one
// line per fixture. Exit 1 if any fails.
int main(int argc, char** argv) {
    CLI::App app{"run golden fixtures", "run_fixture"};
    std::string root = "fixtures";
    std::string work = "fixture_work";
    std::vector<std::string> names;
    app.add_option("--root", root, "fixture tree");
    app.add_option("--work", work, "scratch directory for outputs");
    app.add_option("names", names, "fixture names");
    CLI11_PARSE(app, argc, argv);

    namespace lf = lobdif::fixtures;
    try {
        if (names.empty()) names = lf::list_fixtures(root);
        bool ok = true;
        for (const auto& name : names) {
            const auto r = lf::run_fixture(name, root, work);
            std::cout << (r.passed ? "PASS " : "FAIL ") << name << '\n';
            if (!r.passed) std::cout << r.diff;
            ok = ok && r.passed;
        }
        return ok ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
