#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "fokkerid/cli.hpp"
#include "fokkerid/config.hpp"
#include "fokkerid/csv.hpp"
#include "fokkerid/errors.hpp"
#include "support.hpp"

using namespace fokkerid;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json_file(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

int cli(const fs::path& cache, std::vector<std::string> args) {
    args.insert(args.begin(), {"--log-level", "off", "--cache-dir", cache.string()});
    return run_cli(args);
}

// Levels 2 -> 1, short grid: a full simulate/reconstruct cycle in well under a second.
fs::path write_small_scenario(const fs::path& dir, int parameter_case, std::vector<double> noise = {0.0, 0.05}) {
    Scenario s = fokkerid::testing::small_scenario(parameter_case, 20);
    s.noise_levels = std::move(noise);
    const fs::path path = dir / ("scenario" + std::to_string(parameter_case) + ".json");
    save_scenario(path, s);
    return path;
}

}  // namespace

TEST_CASE("noisy file names") {
    CHECK(noisy_file_name(0.05) == "y_d05.csv");
    CHECK(noisy_file_name(0.005) == "y_d005.csv");
    CHECK(noisy_file_name(0.0) == "y_d0.csv");
    CHECK(noisy_file_name(0.02) == "y_d02.csv");
}

TEST_CASE("mesh subcommand caches and validates the level") {
    const fs::path cache = fokkerid::testing::scratch_dir("cli-mesh");
    CHECK(cli(cache, {"mesh", "--level", "2"}) == exit_ok);
    const fs::path file = mesh_cache_path(cache, 2);
    REQUIRE(fs::exists(file));
    const auto stamp = fs::last_write_time(file);
    const std::string before = slurp(file);
    CHECK(cli(cache, {"mesh", "--level", "2"}) == exit_ok);
    CHECK(fs::last_write_time(file) == stamp);
    CHECK(slurp(file) == before);
    CHECK(load_mesh(file).num_cells() == 320);
    CHECK(cli(cache, {"mesh", "--level", "9"}) == exit_config);
    CHECK(cli(cache, {"mesh"}) == exit_config);
    CHECK(cli(cache, {"frobnicate"}) == exit_config);
}

TEST_CASE("simulate writes measurements, truth and a manifest") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-simulate");
    const fs::path cache = root / "cache";
    const fs::path scenario = write_small_scenario(root, 1);
    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--out", (root / "a").string()}) == exit_ok);
    for (const char* f : {"y.csv", "y_d0.csv", "y_d05.csv", "truth.csv", "scenario.json", "manifest.json"})
        CHECK(fs::exists(root / "a" / f));
    const auto manifest = read_json_file(root / "a" / "manifest.json");
    CHECK(manifest["format"] == kRunManifestTag);
    CHECK(manifest["kind"] == "simulate");
    CHECK(manifest["model_mismatch"].get<double>() > 0.0);
    REQUIRE(manifest["measurements"].size() == 2);
    CHECK(manifest["measurements"][0]["delta"].get<double>() == 0.0);
    CHECK(manifest["measurements"][1]["delta"].get<double>() > 0.0);
    CHECK(read_csv(root / "a" / "y.csv").header == std::vector<std::string>{"t", "y1", "y2", "y3"});

    // Same seed: byte-identical outputs.
    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--out", (root / "b").string()}) == exit_ok);
    for (const char* f : {"y.csv", "y_d05.csv", "truth.csv", "scenario.json", "manifest.json"})
        CHECK(slurp(root / "a" / f) == slurp(root / "b" / f));

    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--seed", "99", "--out", (root / "c").string()}) ==
            exit_ok);
    CHECK(slurp(root / "a" / "y.csv") == slurp(root / "c" / "y.csv"));
    CHECK(slurp(root / "a" / "y_d05.csv") != slurp(root / "c" / "y_d05.csv"));
}

TEST_CASE("simulate with an empty noise list writes only the clean file") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-simulate-clean");
    const fs::path scenario = write_small_scenario(root, 1, {});
    REQUIRE(cli(root / "cache", {"simulate", "--scenario", scenario.string(), "--out", (root / "out").string()}) == exit_ok);
    int csv = 0;
    for (const auto& e : fs::directory_iterator(root / "out")) {
        const auto name = e.path().filename().string();
        if (name.rfind("y", 0) == 0) ++csv;
    }
    CHECK(csv == 1);
    CHECK(read_json_file(root / "out" / "manifest.json")["measurements"].empty());
}

TEST_CASE("simulate rejects bad inputs before writing") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-simulate-bad");
    CHECK(cli(root / "cache", {"simulate", "--preset", "1", "--fine-level", "1", "--coarse-level", "1", "--out",
                               (root / "out").string()}) == exit_config);
    CHECK_FALSE(fs::exists(root / "out"));
    CHECK(cli(root / "cache", {"simulate", "--scenario", (root / "none.json").string(), "--out", (root / "out").string()}) ==
          exit_io);
    CHECK(cli(root / "cache", {"simulate", "--preset", "4", "--out", (root / "out").string()}) == exit_config);
}

TEST_CASE("reconstruct writes iterates, errors and a manifest") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-reconstruct");
    const fs::path cache = root / "cache";
    const fs::path scenario = write_small_scenario(root, 1);
    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--out", (root / "sim").string()}) == exit_ok);
    const fs::path run = root / "run";
    REQUIRE(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y_d05.csv").string(), "--scenario",
                        scenario.string(), "--out", run.string(), "--set", "landweber.k_max=8"}) == exit_ok);
    const auto manifest = read_json_file(run / "manifest.json");
    CHECK(manifest["kind"] == "reconstruct");
    CHECK(manifest["delta_source"] == "simulate manifest");
    CHECK(manifest["noise_level"].get<double>() == 0.05);
    CHECK(manifest["overrides"] == nlohmann::json::array({"landweber.k_max=8"}));
    CHECK(manifest["config"]["landweber"]["k_max"] == 8);
    CHECK(manifest["bootstrap"]["enabled"] == false);
    const auto disc = manifest["discrepancy"].get<std::vector<double>>();
    REQUIRE(disc.size() == manifest["iterations"].get<std::size_t>());
    for (std::size_t k = 1; k < disc.size(); ++k) CHECK(disc[k] < disc[k - 1]);
    CHECK(fs::exists(run / "iterates" / "iter_0001.csv"));
    CHECK(fs::exists(run / "final.csv"));
    const std::string errors = slurp(run / "errors.csv");
    CHECK(errors.substr(0, errors.find('\n')) == "noise_level,rule,index,l2_error,h1_error,reached");
    CHECK(errors.find("\n0.05,discrepancy_principle,") != std::string::npos);
    CHECK(errors.find("\n0.05,best,") != std::string::npos);
    CHECK_FALSE(manifest["best_index"].is_null());
}

TEST_CASE("reconstruct from the ground truth stops immediately") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-reconstruct-truth");
    const fs::path cache = root / "cache";
    const fs::path scenario = write_small_scenario(root, 1, {0.0});
    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--out", (root / "sim").string()}) == exit_ok);
    const fs::path run = root / "run";
    // The noiseless data error is the two-grid mismatch, which the truth meets at once.
    REQUIRE(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y_d0.csv").string(), "--scenario",
                        scenario.string(), "--out", run.string(), "--initial", "truth", "--set",
                        "landweber.continue_after_dp=false"}) == exit_ok);
    const auto manifest = read_json_file(run / "manifest.json");
    CHECK(manifest["status"] == "discrepancy_principle");
    CHECK(manifest["iterations"] == 1);
    CHECK(manifest["dp_index"] == 1);
    CHECK(manifest["errors"]["discrepancy_principle"]["l2"].get<double>() == 0.0);

    REQUIRE(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y_d0.csv").string(), "--scenario",
                        scenario.string(), "--out", (root / "cont").string(), "--initial", "truth", "--set",
                        "landweber.k_max=5"}) == exit_ok);
    const auto cont = read_json_file(root / "cont" / "manifest.json");
    CHECK(cont["dp_index"] == 1);
    CHECK(cont["iterations"].get<int>() > 1);
    CHECK(cont["errors"]["discrepancy_principle"]["l2"].get<double>() == 0.0);
}

TEST_CASE("reconstruct rejects mismatched grids and bad overrides without output") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-reconstruct-bad");
    const fs::path cache = root / "cache";
    const fs::path scenario = write_small_scenario(root, 1, {0.0});
    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--out", (root / "sim").string()}) == exit_ok);
    Scenario other = fokkerid::testing::small_scenario(1, 25);
    save_scenario(root / "other.json", other);
    CHECK(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y.csv").string(), "--scenario",
                      (root / "other.json").string(), "--out", (root / "r1").string()}) == exit_config);
    CHECK_FALSE(fs::exists(root / "r1"));
    CHECK(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y.csv").string(), "--scenario", scenario.string(),
                      "--out", (root / "r2").string(), "--set", "landweber.nonsense=1"}) == exit_config);
    CHECK(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y.csv").string(), "--scenario", scenario.string(),
                      "--out", (root / "r2").string(), "--set", "landweber.tau=0.5"}) == exit_config);
    CHECK(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y.csv").string(), "--scenario", scenario.string(),
                      "--out", (root / "r2").string(), "--set", "landweber.k_max=ten"}) == exit_config);
    CHECK_FALSE(fs::exists(root / "r2"));
    CHECK(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "nope.csv").string(), "--scenario",
                      scenario.string(), "--out", (root / "r3").string()}) == exit_io);
}

TEST_CASE("evaluate aggregates runs, marks missing truth and skips incomplete runs") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-evaluate");
    const fs::path cache = root / "cache";
    const fs::path scenario = write_small_scenario(root, 1);
    REQUIRE(cli(cache, {"simulate", "--scenario", scenario.string(), "--out", (root / "sim").string()}) == exit_ok);
    const fs::path runs = root / "runs";
    REQUIRE(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y_d05.csv").string(), "--scenario",
                        scenario.string(), "--out", (runs / "a").string(), "--set", "landweber.k_max=4"}) == exit_ok);

    auto rows = evaluate_runs(runs, root / "table.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"noise_level", "rule", "runs", "reached", "l2_error", "h1_error"});
    CHECK(rows[1][0] == "0.05");
    CHECK(rows[1][4] != "NA");

    // A run without ground truth.
    nlohmann::json j = scenario_to_json(load_scenario(scenario));
    j.erase("truth");
    const fs::path blind = root / "blind.json";
    {
        std::ofstream out(blind);
        out << j.dump(2);
    }
    const fs::path blind_runs = root / "blind_runs";
    REQUIRE(cli(cache, {"reconstruct", "--measurement", (root / "sim" / "y_d05.csv").string(), "--scenario",
                        blind.string(), "--out", (blind_runs / "a").string(), "--set", "landweber.k_max=3"}) == exit_ok);
    CHECK_FALSE(fs::exists(blind_runs / "a" / "errors.csv"));
    rows = evaluate_runs(blind_runs, root / "blind_table.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][4] == "NA");
    CHECK(rows[1][5] == "NA");

    // An incomplete manifest is skipped.
    fs::create_directories(runs / "broken");
    {
        std::ofstream out(runs / "broken" / "manifest.json");
        out << R"({"format": "FOKKERID-RUN-v1", "kind": "reconstruct"})";
    }
    rows = evaluate_runs(runs, root / "table2.csv");
    CHECK(rows[1][2] == "1");
    CHECK(cli(cache, {"evaluate", "--runs", (root / "missing").string()}) == exit_io);
    CHECK(cli(cache, {"evaluate", "--runs", runs.string()}) == exit_ok);
    CHECK(fs::exists(runs / "table.csv"));
}

TEST_CASE("ladder runs every seed and noise level") {
    const fs::path root = fokkerid::testing::scratch_dir("cli-ladder");
    const fs::path scenario = write_small_scenario(root, 1, {0.0, 0.05});
    REQUIRE(cli(root / "cache", {"ladder", "--scenario", scenario.string(), "--out", (root / "out").string(), "--seeds",
                                 "2", "--jobs", "2", "--set", "landweber.k_max=3"}) == exit_ok);
    CHECK(fs::exists(root / "out" / "seed_1" / "y_d05.csv"));
    CHECK(fs::exists(root / "out" / "seed_2" / "y_d05.csv"));
    std::istringstream table(slurp(root / "out" / "table.csv"));
    std::vector<std::string> lines;
    for (std::string line; std::getline(table, line);) lines.push_back(line);
    REQUIRE(lines.size() == 5);
    CHECK(lines[1].rfind("0,best,2,2,", 0) == 0);
    CHECK(lines[2].rfind("0,discrepancy_principle,2,", 0) == 0);
    CHECK(lines[4].rfind("0.05,discrepancy_principle,2,", 0) == 0);
}

// ---------------------------------------------------------------------------
// Configuration

TEST_CASE("embedded defaults match the checked-in schema file") {
    const nlohmann::json file = nlohmann::json::parse(slurp(fs::path(FOKKERID_SOURCE_DIR) / "config" / "defaults.json"));
    CHECK(default_config() == file);
    CHECK(file["schema"] == kConfigSchemaTag);
    const LandweberConfig from_file = landweber_from_config(file);
    const LandweberConfig plain;
    CHECK(from_file.omega == plain.omega);
    CHECK(from_file.step_safety == plain.step_safety);
    CHECK(from_file.armijo_factor == plain.armijo_factor);
    CHECK(from_file.j_max == plain.j_max);
    CHECK(from_file.tol == plain.tol);
    CHECK(from_file.k_max == plain.k_max);
    CHECK(from_file.tau == plain.tau);
    CHECK(from_file.epsilon_time == plain.epsilon_time);
    CHECK(from_file.epsilon_space == plain.epsilon_space);
    CHECK(from_file.store_iterates == plain.store_iterates);
    CHECK(from_file.continue_after_dp == plain.continue_after_dp);
    CHECK(from_file.bootstrap_k_max == plain.bootstrap_k_max);
    CHECK(from_file.power_iterations == plain.power_iterations);
    CHECK(from_file.power_seed == plain.power_seed);
}

TEST_CASE("config merging and overrides are schema-checked") {
    const nlohmann::json base = default_config();
    const nlohmann::json merged = merge_config(base, {{"landweber", {{"tau", 1.5}}}});
    CHECK(merged["landweber"]["tau"] == 1.5);
    CHECK(merged["landweber"]["k_max"] == base["landweber"]["k_max"]);
    CHECK_THROWS_AS(merge_config(base, {{"landweber", {{"tau", "big"}}}}), ConfigError);
    CHECK_THROWS_AS(merge_config(base, {{"solver", {{"tol", 1.0}}}}), ConfigError);
    CHECK_THROWS_AS(merge_config(base, {{"schema", "OTHER"}}), ConfigError);
    CHECK_THROWS_AS(merge_config(base, nlohmann::json::array()), ConfigError);

    const nlohmann::json over = apply_overrides(base, {"landweber.k_max=12", "landweber.store_iterates=false",
                                                       "reconstruct.bootstrap=never", "landweber.tol=1e-3"});
    CHECK(over["landweber"]["k_max"] == 12);
    CHECK(over["landweber"]["store_iterates"] == false);
    CHECK(over["landweber"]["tol"] == 1e-3);
    CHECK_FALSE(bootstrap_enabled(over, ParameterCase::easy_axis));
    CHECK(bootstrap_enabled(base, ParameterCase::easy_axis));
    CHECK_FALSE(bootstrap_enabled(base, ParameterCase::field_waveform));
    CHECK_THROWS_AS(apply_overrides(base, {"landweber"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"landweber=3"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"landweber.k_max=1.5"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(base, {"landweber.store_iterates=yes"}), ConfigError);
    CHECK_THROWS_AS(landweber_from_config(apply_overrides(base, {"landweber.armijo_factor=1.2"})), ConfigError);
    CHECK_THROWS_AS(bootstrap_enabled(apply_overrides(base, {"reconstruct.bootstrap=sometimes"}), ParameterCase::easy_axis),
                    ConfigError);

    const fs::path dir = fokkerid::testing::scratch_dir("config-file");
    {
        std::ofstream out(dir / "bad.json");
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_config_file(base, dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config_file(base, dir / "missing.json"), IoError);
}
