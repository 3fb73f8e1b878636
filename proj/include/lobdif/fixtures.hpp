#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lobdif::fixtures {

struct FixtureResult {
    std::string name;
    bool passed = false;
    std::string diff; // what differed, empty on success
};

/// Names of the fixtures under `root` (one directory with a manifest.json each).
[[nodiscard]] std::vector<std::string> list_fixtures(const std::filesystem::path& root);

/// Runs fixture `name` from `root`, writing outputs below `work`. Throws
/// std::invalid_argument for an unknown fixture.
[[nodiscard]] FixtureResult run_fixture(const std::string& name, const std::filesystem::path& root,
                                        const std::filesystem::path& work);

/// Cell-wise CSV comparison: numeric cells within `abs_tol`, others exactly.
/// Returns an empty string when the documents match.
[[nodiscard]] std::string diff_csv(const std::string& actual, const std::string& expected, double abs_tol);

} // namespace lobdif::fixtures
