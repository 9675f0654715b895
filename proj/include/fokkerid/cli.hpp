#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fokkerid/harness.hpp"

namespace fokkerid {

inline constexpr const char* kRunManifestTag = "FOKKERID-RUN-v1";

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_io = 2, exit_numerical = 3 };

// Entry point of the fokkerid executable; returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

// File name used for a noisy measurement: 0.05 -> "y_d05.csv", 0.005 -> "y_d005.csv".
std::string noisy_file_name(double level);

struct SimulateResult {
    std::filesystem::path clean_file;
    std::vector<std::filesystem::path> noisy_files;
    nlohmann::json manifest;
};

SimulateResult simulate_to_dir(const Scenario& scenario, const std::filesystem::path& out_dir,
                               const std::filesystem::path& cache_dir);

struct ReconstructRequest {
    std::filesystem::path measurement;
    Scenario scenario;
    std::filesystem::path out_dir;
    std::filesystem::path cache_dir;
    nlohmann::json config;                  // full, validated config
    std::vector<std::string> overrides;     // as given, recorded in the manifest
    std::optional<double> delta;            // else looked up in the simulate manifest
    std::string initial = "guess";          // guess | truth | path to a parameter file
};

struct ReconstructResult {
    ReconstructionRun run;
    std::optional<ErrorReport> report;
    nlohmann::json manifest;
};

ReconstructResult reconstruct_to_dir(const ReconstructRequest& request);

// Aggregates every reconstruct manifest below `runs_dir` into a table
// (noise level x stopping rule) and writes it to `out_file`.
std::vector<std::vector<std::string>> evaluate_runs(const std::filesystem::path& runs_dir,
                                                    const std::filesystem::path& out_file);

}  // namespace fokkerid
