#include "fokkerid/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "fokkerid/config.hpp"
#include "fokkerid/csv.hpp"
#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw IoError(path.string() + " is not valid JSON: " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::shared_ptr<const SphereMesh> cached_mesh(int level, const fs::path& cache_dir) {
    bool hit = false;
    auto mesh = std::make_shared<const SphereMesh>(load_or_build_mesh(level, cache_dir, &hit));
    spdlog::debug("mesh level {}: {} triangles ({})", level, mesh->num_cells(), hit ? "cache hit" : "built");
    return mesh;
}

json errors_json(const std::optional<StoppedError>& e) {
    if (!e) return nullptr;
    return {{"index", e->index}, {"l2", e->errors.l2}, {"h1", e->errors.h1}, {"reached", e->reached}};
}

template <class T>
json to_array(const std::vector<T>& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(x);
    return a;
}

std::string iterate_name(std::size_t k) {
    std::string digits = std::to_string(k);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return "iter_" + digits + ".csv";
}

// Looks up delta for `measurement` in a simulate manifest next to it.
std::optional<std::pair<double, double>> manifest_delta(const fs::path& measurement) {
    const fs::path manifest = measurement.parent_path() / "manifest.json";
    if (!fs::exists(manifest)) return std::nullopt;
    const json j = read_json(manifest);
    if (j.value("format", "") != kRunManifestTag || j.value("kind", "") != "simulate") return std::nullopt;
    const std::string name = measurement.filename().string();
    if (j.at("clean").at("file") == name) return std::pair{j.at("model_mismatch").get<double>(), 0.0};
    for (const auto& m : j.at("measurements")) {
        if (m.at("file") == name) return std::pair{m.at("data_error").get<double>(), m.at("level").get<double>()};
    }
    return std::nullopt;
}

void check_grid(const ObservationSeries& y, const Scenario& s) {
    const TimeGrid g = s.grid();
    if (y.grid.steps() != g.steps() || std::abs(y.grid.horizon() - g.horizon()) > 1e-9 * g.horizon()) {
        throw ConfigError("measurement time grid (" + std::to_string(y.grid.steps()) + " steps) does not match the scenario (" +
                          std::to_string(g.steps()) + " steps)");
    }
    if (y.mode != s.mode) throw ConfigError("measurement observation mode does not match the scenario");
}

Scenario scenario_from_options(const std::string& file, int preset_case) {
    if (!file.empty()) return load_scenario(file);
    if (preset_case == 0) throw ConfigError("give --scenario FILE or --preset 1|2|3");
    return preset(preset_case);
}

void configure_logging(const std::string& level) {
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off") throw ConfigError("unknown log level '" + level + "'");
    spdlog::set_level(parsed);
}

struct CommonOptions {
    std::string cache_dir;
    std::string log_level = "info";
};

fs::path resolve_cache(const CommonOptions& o) { return o.cache_dir.empty() ? default_mesh_cache_dir() : fs::path(o.cache_dir); }

json build_config(const std::string& config_file, const std::vector<std::string>& overrides) {
    json config = default_config();
    if (!config_file.empty()) config = load_config_file(config, config_file);
    config = apply_overrides(config, overrides);
    landweber_from_config(config);  // validates ranges before any compute
    bootstrap_enabled(config, ParameterCase::easy_axis);
    return config;
}

// Runs one reconstruction per (seed, noise level) with at most `jobs`
// concurrent workers; results are written to per-run directories.
void run_ladder(const Scenario& base, const fs::path& out_dir, const fs::path& cache_dir, const json& config,
                const std::vector<std::string>& overrides, const std::vector<std::uint64_t>& seeds, int jobs) {
    struct Task {
        fs::path measurement;
        Scenario scenario;
        fs::path out;
    };
    std::vector<Task> tasks;
    for (std::uint64_t seed : seeds) {
        Scenario s = base;
        s.seed = seed;
        const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
        const SimulateResult sim = simulate_to_dir(s, seed_dir, cache_dir);
        for (std::size_t i = 0; i < s.noise_levels.size(); ++i) {
            const std::string tag = sim.noisy_files[i].stem().string().substr(2);  // "d05"
            tasks.push_back({sim.noisy_files[i], s, seed_dir / ("run_" + tag)});
        }
    }
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            {
                std::lock_guard lock(failure_mutex);
                if (failure) return;
            }
            try {
                ReconstructRequest req;
                req.measurement = tasks[i].measurement;
                req.scenario = tasks[i].scenario;
                req.out_dir = tasks[i].out;
                req.cache_dir = cache_dir;
                req.config = config;
                req.overrides = overrides;
                reconstruct_to_dir(req);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"Fokker-Planck forward model and Landweber parameter identification on the sphere", "fokkerid"};
    app.require_subcommand(1);
    CommonOptions common;
    app.add_option("--cache-dir", common.cache_dir, "Mesh cache directory (default $FOKKERID_CACHE_DIR or ./.fokkerid-cache)");
    app.add_option("--log-level", common.log_level, "trace, debug, info, warn, error, off");

    auto* mesh_cmd = app.add_subcommand("mesh", "Build and cache an icosphere");
    int level = 4;
    mesh_cmd->add_option("--level", level, "Refinement level 0..7")->required();

    auto* sim_cmd = app.add_subcommand("simulate", "Generate clean and noisy measurements for a scenario");
    std::string scenario_file;
    int preset_case = 0;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<double> noise;
    bool noise_given = false;
    sim_cmd->add_option("--scenario", scenario_file, "Scenario JSON file");
    sim_cmd->add_option("--preset", preset_case, "Preset scenario 1, 2 or 3")->check(CLI::Range(1, 3));
    sim_cmd->add_option("--out", out_dir, "Output directory")->required();
    sim_cmd->add_option("--seed", seed, "Noise seed");
    auto* noise_opt = sim_cmd->add_option("--noise", noise, "Noise levels, e.g. 0,0.05")->delimiter(',');
    std::optional<int> fine_level;
    std::optional<int> coarse_level;
    sim_cmd->add_option("--fine-level", fine_level, "Data mesh level");
    sim_cmd->add_option("--coarse-level", coarse_level, "Inversion mesh level");

    auto* rec_cmd = app.add_subcommand("reconstruct", "Run the Landweber reconstruction on a measurement");
    std::string measurement;
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<double> delta;
    std::string initial = "guess";
    rec_cmd->add_option("--measurement", measurement, "Observation CSV")->required();
    rec_cmd->add_option("--scenario", scenario_file, "Scenario JSON file")->required();
    rec_cmd->add_option("--out", out_dir, "Output directory")->required();
    rec_cmd->add_option("--config", config_file, "Config JSON overriding the defaults");
    rec_cmd->add_option("--set", overrides, "Config override section.key=value");
    rec_cmd->add_option("--delta", delta, "Data error for the discrepancy principle");
    rec_cmd->add_option("--initial", initial, "guess, truth, or a parameter CSV");

    auto* eval_cmd = app.add_subcommand("evaluate", "Aggregate run error reports into a table");
    std::string runs_dir;
    std::string table_file;
    eval_cmd->add_option("--runs", runs_dir, "Directory holding reconstruct runs")->required();
    eval_cmd->add_option("--out", table_file, "Table CSV (default RUNS/table.csv)");

    auto* ladder_cmd = app.add_subcommand("ladder", "Simulate and reconstruct every noise level over several seeds");
    int seeds = 3;
    int jobs = 1;
    ladder_cmd->add_option("--scenario", scenario_file, "Scenario JSON file");
    ladder_cmd->add_option("--preset", preset_case, "Preset scenario 1, 2 or 3")->check(CLI::Range(1, 3));
    ladder_cmd->add_option("--out", out_dir, "Output directory")->required();
    ladder_cmd->add_option("--seeds", seeds, "Number of noise seeds")->check(CLI::PositiveNumber);
    ladder_cmd->add_option("--jobs", jobs, "Concurrent reconstructions")->check(CLI::PositiveNumber);
    ladder_cmd->add_option("--config", config_file, "Config JSON overriding the defaults");
    ladder_cmd->add_option("--set", overrides, "Config override section.key=value");
    ladder_cmd->add_option("--fine-level", fine_level, "Data mesh level");
    ladder_cmd->add_option("--coarse-level", coarse_level, "Inversion mesh level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }
    noise_given = noise_opt->count() > 0;
    configure_logging(common.log_level);
    const fs::path cache_dir = resolve_cache(common);

    auto adjust_levels = [&](Scenario& s) {
        if (fine_level) s.fine_level = *fine_level;
        if (coarse_level) s.coarse_level = *coarse_level;
        s.validate();
    };

    if (mesh_cmd->parsed()) {
        if (level < 0 || level > kMaxMeshLevel) throw ConfigError("mesh level must lie in [0, 7]");
        bool hit = false;
        const SphereMesh mesh = load_or_build_mesh(level, cache_dir, &hit);
        spdlog::info("level {}: {} triangles, {} ({})", level, mesh.num_cells(), mesh_cache_path(cache_dir, level).string(),
                     hit ? "cache hit" : "built");
        return exit_ok;
    }
    if (sim_cmd->parsed()) {
        Scenario s = scenario_from_options(scenario_file, preset_case);
        if (seed) s.seed = *seed;
        if (noise_given) s.noise_levels = noise;
        adjust_levels(s);
        simulate_to_dir(s, out_dir, cache_dir);
        return exit_ok;
    }
    if (rec_cmd->parsed()) {
        ReconstructRequest req;
        req.config = build_config(config_file, overrides);
        req.overrides = overrides;
        req.measurement = measurement;
        req.scenario = load_scenario(scenario_file);
        req.out_dir = out_dir;
        req.cache_dir = cache_dir;
        req.delta = delta;
        req.initial = initial;
        const ReconstructResult r = reconstruct_to_dir(req);
        spdlog::info("status {} after {} iterations", status_name(r.run.status), r.run.iterations());
        return exit_ok;
    }
    if (eval_cmd->parsed()) {
        const fs::path out = table_file.empty() ? fs::path(runs_dir) / "table.csv" : fs::path(table_file);
        const auto rows = evaluate_runs(runs_dir, out);
        for (const auto& row : rows) {
            std::string line;
            for (std::size_t i = 0; i < row.size(); ++i) line += (i ? "," : "") + row[i];
            std::printf("%s\n", line.c_str());
        }
        return exit_ok;
    }
    if (ladder_cmd->parsed()) {
        const json config = build_config(config_file, overrides);
        Scenario s = scenario_from_options(scenario_file, preset_case);
        adjust_levels(s);
        std::vector<std::uint64_t> seed_list;
        for (int i = 0; i < seeds; ++i) seed_list.push_back(s.seed + static_cast<std::uint64_t>(i));
        ensure_dir(out_dir);
        run_ladder(s, out_dir, cache_dir, config, overrides, seed_list, jobs);
        const auto rows = evaluate_runs(out_dir, fs::path(out_dir) / "table.csv");
        for (const auto& row : rows) {
            std::string line;
            for (std::size_t i = 0; i < row.size(); ++i) line += (i ? "," : "") + row[i];
            std::printf("%s\n", line.c_str());
        }
        return exit_ok;
    }
    return exit_config;
}

}  // namespace

std::string noisy_file_name(double level) {
    std::string text = format_number(level);
    if (text.rfind("0.", 0) == 0) {
        text = text.substr(2);
    } else {
        std::replace(text.begin(), text.end(), '.', 'p');
    }
    return "y_d" + text + ".csv";
}

SimulateResult simulate_to_dir(const Scenario& scenario, const fs::path& out_dir, const fs::path& cache_dir) {
    scenario.validate();
    if (!scenario.has_truth()) throw ConfigError("simulation needs a ground truth");
    auto fine = cached_mesh(scenario.fine_level, cache_dir);
    auto coarse = cached_mesh(scenario.coarse_level, cache_dir);
    const ForwardOperator forward = make_forward(scenario, coarse);
    const Measurement m = generate_measurement(scenario, *fine, forward);

    ensure_dir(out_dir);
    SimulateResult result;
    save_scenario(out_dir / "scenario.json", scenario);
    save_parameter(out_dir / "truth.csv", scenario.truth_on(*coarse), scenario.grid());
    result.clean_file = out_dir / "y.csv";
    save_observation(result.clean_file, m.clean);

    json measurements = json::array();
    const double peak = m.clean.values.cwiseAbs().maxCoeff();
    for (const auto& nm : m.noisy) {
        const fs::path file = out_dir / noisy_file_name(nm.level);
        save_observation(file, nm.series);
        result.noisy_files.push_back(file);
        measurements.push_back({{"level", nm.level},
                                {"file", file.filename().string()},
                                {"sigma", nm.level * peak},
                                {"delta", nm.delta},
                                {"data_error", nm.data_error}});
        spdlog::info("noise {}: delta {:.6g}, data error {:.6g}", nm.level, nm.delta, nm.data_error);
    }
    result.manifest = {
        {"format", kRunManifestTag},
        {"kind", "simulate"},
        {"scenario", scenario.name},
        {"case", static_cast<int>(scenario.parameter_case)},
        {"seed", scenario.seed},
        {"fine_level", scenario.fine_level},
        {"coarse_level", scenario.coarse_level},
        {"clean", {{"file", result.clean_file.filename().string()}}},
        {"model_mismatch", m.model_mismatch},
        {"measurements", measurements},
    };
    write_json(out_dir / "manifest.json", result.manifest);
    return result;
}

ReconstructResult reconstruct_to_dir(const ReconstructRequest& request) {
    const Scenario& s = request.scenario;
    s.validate();
    const LandweberConfig config = landweber_from_config(request.config);
    const bool bootstrap = bootstrap_enabled(request.config, s.parameter_case);

    const ObservationSeries y = load_observation(request.measurement);
    check_grid(y, s);
    double delta = 0.0;
    double noise_level = 0.0;
    std::string delta_source = "none";
    if (request.delta) {
        delta = *request.delta;
        delta_source = "option";
    } else if (const auto found = manifest_delta(request.measurement)) {
        delta = found->first;
        noise_level = found->second;
        delta_source = "simulate manifest";
    }

    auto mesh = cached_mesh(s.coarse_level, request.cache_dir);
    const ForwardOperator forward = make_forward(s, mesh);
    if (y.mode == ObservationMode::identity && static_cast<std::size_t>(y.values.cols()) != mesh->num_cells()) {
        throw ConfigError("identity measurement does not match the inversion mesh");
    }
    Parameter p1;
    if (request.initial == "guess") {
        p1 = s.initial_guess_on(*mesh);
    } else if (request.initial == "truth") {
        p1 = s.truth_on(*mesh);
    } else {
        p1 = load_parameter(request.initial, s.parameter_case, s.grid(), mesh->num_cells());
    }
    ensure_dir(request.out_dir);

    std::optional<Parameter> truth;
    if (s.has_truth()) truth = s.truth_on(*mesh);
    const TruthError truth_error = truth ? make_truth_error(*truth, forward) : TruthError{};

    json boot = {{"enabled", bootstrap}};
    if (bootstrap) {
        LandweberConfig bc = config;
        bc.find_initial_value = true;
        const double before = forward.discrepancy(forward.evaluate(p1).observation, y);
        p1 = bootstrap_initial_value(forward, y, p1, bc, delta);
        const double after = forward.discrepancy(forward.evaluate(p1).observation, y);
        boot["discrepancy_before"] = before;
        boot["discrepancy_after"] = after;
    }

    ReconstructResult result;
    result.run = landweber_run(forward, y, p1, config, delta, truth_error);
    const ReconstructionRun& run = result.run;

    if (config.store_iterates) {
        const fs::path dir = request.out_dir / "iterates";
        ensure_dir(dir);
        for (std::size_t k = 0; k < run.iterates.size(); ++k) save_parameter(dir / iterate_name(k + 1), run.iterates[k], s.grid());
    }
    save_parameter(request.out_dir / "final.csv", run.current, s.grid());

    json errors = nullptr;
    if (truth) {
        result.report = evaluate(run, *truth, forward, noise_level, s.seed);
        errors = {{"discrepancy_principle", errors_json(result.report->discrepancy_principle)},
                  {"best", errors_json(result.report->best)}};
        std::ofstream out(request.out_dir / "errors.csv", std::ios::binary);
        out << "noise_level,rule,index,l2_error,h1_error,reached\n";
        auto add = [&](const char* rule, const std::optional<StoppedError>& e) {
            if (!e) return;
            out << format_number(noise_level) << ',' << rule << ',' << e->index << ',' << format_number(e->errors.l2) << ','
                << format_number(e->errors.h1) << ',' << (e->reached ? "true" : "false") << '\n';
        };
        add("discrepancy_principle", result.report->discrepancy_principle);
        add("best", result.report->best);
        if (!out) throw IoError("write failed for errors.csv");
    }

    result.manifest = {
        {"format", kRunManifestTag},
        {"kind", "reconstruct"},
        {"scenario", s.name},
        {"case", static_cast<int>(s.parameter_case)},
        {"measurement", request.measurement.filename().string()},
        {"coarse_level", s.coarse_level},
        {"seed", s.seed},
        {"noise_level", noise_level},
        {"delta", delta},
        {"delta_source", delta_source},
        {"initial", request.initial},
        {"config", request.config},
        {"overrides", request.overrides},
        {"bootstrap", boot},
        {"omega", run.omega},
        {"status", status_name(run.status)},
        {"iterations", run.iterations()},
        {"discrepancy", to_array(run.discrepancy)},
        {"step_lengths", to_array(run.step_lengths)},
        {"armijo_trials", to_array(run.armijo_trials)},
        {"wall_seconds", to_array(run.wall_seconds)},
        {"dp_index", run.dp_index ? json(*run.dp_index) : json(nullptr)},
        {"best_index", run.best_index ? json(*run.best_index) : json(nullptr)},
        {"errors", errors},
    };
    write_json(request.out_dir / "manifest.json", result.manifest);
    spdlog::info("reconstruct {}: {} after {} iterations, discrepancy {:.6g} -> {:.6g}", request.out_dir.string(),
                 status_name(run.status), run.iterations(), run.discrepancy.front(), run.discrepancy.back());
    return result;
}

std::vector<std::vector<std::string>> evaluate_runs(const fs::path& runs_dir, const fs::path& out_file) {
    if (!fs::is_directory(runs_dir)) throw IoError("run directory " + runs_dir.string() + " does not exist");
    struct Accum {
        int runs = 0;
        int reached = 0;
        int with_errors = 0;
        double l2 = 0.0;
        double h1 = 0.0;
    };
    std::map<std::pair<double, std::string>, Accum> table;
    std::vector<fs::path> manifests;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "manifest.json") manifests.push_back(entry.path());
    }
    std::sort(manifests.begin(), manifests.end());
    for (const auto& path : manifests) {
        json j;
        try {
            j = read_json(path);
        } catch (const IoError& e) {
            spdlog::warn("skipping {}: {}", path.string(), e.what());
            continue;
        }
        if (j.value("kind", "") != "reconstruct") continue;
        if (j.value("format", "") != kRunManifestTag || !j.contains("status") || !j.contains("errors")) {
            spdlog::warn("skipping incomplete run {}", path.parent_path().string());
            continue;
        }
        const double level = j.value("noise_level", 0.0);
        for (const char* rule : {"discrepancy_principle", "best"}) {
            Accum& a = table[{level, rule}];
            ++a.runs;
            const json& e = j["errors"];
            if (e.is_null() || e[rule].is_null()) continue;
            ++a.with_errors;
            a.reached += e[rule].value("reached", true) ? 1 : 0;
            a.l2 += e[rule]["l2"].get<double>();
            a.h1 += e[rule]["h1"].get<double>();
        }
    }
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"noise_level", "rule", "runs", "reached", "l2_error", "h1_error"});
    for (const auto& [key, a] : table) {
        const bool has = a.with_errors > 0;
        rows.push_back({format_number(key.first), key.second, std::to_string(a.runs), std::to_string(a.reached),
                        has ? format_number(a.l2 / a.with_errors) : "NA", has ? format_number(a.h1 / a.with_errors) : "NA"});
    }
    std::ofstream out(out_file, std::ios::binary);
    if (!out) throw IoError("cannot write " + out_file.string());
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + out_file.string());
    return rows;
}

int run_cli(int argc, const char* const* argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return exit_config;
    } catch (const ShapeError& e) {
        spdlog::error("{}", e.what());
        return exit_config;
    } catch (const EvaluationError& e) {
        spdlog::error("{}", e.what());
        return exit_config;
    } catch (const IoError& e) {
        spdlog::error("{}", e.what());
        return exit_io;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return exit_numerical;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return exit_io;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("fokkerid");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace fokkerid
