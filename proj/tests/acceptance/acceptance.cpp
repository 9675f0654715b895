// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Optional arguments select criteria,
// e.g. `fokkerid_acceptance 1 6`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "fokkerid/cli.hpp"
#include "fokkerid/config.hpp"
#include "fokkerid/harness.hpp"
#include "fokkerid/inversion.hpp"

using namespace fokkerid;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Shared state: traces of every acceptance run for the monotonicity check.
struct Traces {
    std::vector<std::pair<std::string, std::vector<double>>> runs;
    void add(std::string name, const std::vector<double>& d) { runs.emplace_back(std::move(name), d); }
};

Traces g_traces;

fs::path work_dir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "fokkerid-acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::shared_ptr<const SphereMesh> mesh_at(int level) {
    static std::map<int, std::shared_ptr<const SphereMesh>> cache;
    auto& m = cache[level];
    if (!m) m = std::make_shared<const SphereMesh>(build_icosphere(level));
    return m;
}

Scenario desk_scale(Scenario s) {
    s.fine_level = 3;
    s.coarse_level = 2;
    return s;
}

DriftField random_tangential_drift(const SphereMesh& mesh, const TimeGrid& grid, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    DriftField d;
    for (std::size_t n = 0; n < grid.samples(); ++n) {
        CellVectors v(static_cast<Eigen::Index>(mesh.num_cells()), 3);
        for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) << normal(rng), normal(rng), normal(rng);
        d.steps.push_back(tangential_projection(mesh.circumcenters, v));
    }
    return d;
}

Parameter random_direction(const Parameter& like, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    auto fill = [&](auto& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
    };
    Parameter out = like;
    if (auto* f = std::get_if<FieldWaveform>(&out)) fill(f->field);
    if (auto* a = std::get_if<AnisotropyLandscape>(&out))
        for (auto& s : a->phi) fill(s);
    if (auto* e = std::get_if<EasyAxis>(&out)) fill(e->axis);
    return out;
}

// ---------------------------------------------------------------------------

Outcome mass_conservation() {
    double worst = 0.0;
    double slowest = 0.0;
    for (int c = 1; c <= 3; ++c) {
        const auto t0 = Clock::now();
        const Scenario s = preset(c);
        const auto mesh = mesh_at(3);
        const ForwardOperator f = make_forward(s, mesh);
        const auto eval = f.evaluate(s.truth_on(*mesh));
        double dev = 0.0;
        for (const auto& u : eval.state.values) dev = std::max(dev, std::abs(mesh->integrate(u) - 1.0));
        worst = std::max(worst, dev);
        slowest = std::max(slowest, seconds_since(t0));
    }
    return {worst < 1e-8 && slowest < 60.0,
            fmt("max |mass - 1| = %.2e over 3 presets on level 3 (tol 1e-8), slowest %.1f s (limit 60 s)", worst, slowest)};
}

Outcome adjoint_correctness() {
    const auto t0 = Clock::now();
    double worst_identity = 0.0;
    double worst_fd = 0.0;
    int instances = 0;
    std::mt19937_64 rng(2024);
    for (int c = 1; c <= 3; ++c) {
        const Scenario s = preset(c);
        const auto mesh = mesh_at(2);
        const ForwardOperator f = make_forward(s, mesh);
        const Parameter truth = s.truth_on(*mesh);
        const double scale = c == 1 ? 3e-3 : 0.2;
        const ObservationSeries y = f.evaluate(truth).observation;
        for (int trial = 0; trial < 10; ++trial, ++instances) {
            const Parameter p = axpy(truth, 1.0, random_direction(truth, rng, scale));
            const auto at = f.evaluate(p);

            // Drift level: <G S'(b) h, z>_Y = <h, u grad psi>.
            const DriftField h = random_tangential_drift(*mesh, f.grid(), rng, 5e7);
            ObservationSeries z = at.observation;
            std::normal_distribution<double> normal(0.0, 0.1);
            for (Eigen::Index i = 0; i < z.values.size(); ++i) z.values.data()[i] = normal(rng);
            const StateField v = solve_sensitivity(at.drift, h, at.state, f.operators(), f.grid());
            const double lhs = observation_inner(observe(v, f.mode(), *mesh), z, *mesh);
            const double rhs = drift_inner(h, f.drift_adjoint_apply(at, z), f.drift_model());
            worst_identity = std::max(worst_identity, std::abs(lhs - rhs) / std::abs(lhs));

            // Full gradient against Richardson-extrapolated central differences of ||F(p) - y||^2.
            const Parameter dir = random_direction(truth, rng, scale);
            const ObservationSeries r = observation_difference(at.observation, y);
            const double exact =
                2.0 * parameter_inner(dir, compute_gradient(f, at, p, r, nullptr), f.drift_model());
            auto misfit = [&](double e) {
                return std::pow(f.discrepancy(f.evaluate(axpy(p, e, dir)).observation, y), 2);
            };
            auto central = [&](double e) { return (misfit(e) - misfit(-e)) / (2.0 * e); };
            const double eps = 1e-2;
            const double fd = (4.0 * central(eps / 2.0) - central(eps)) / 3.0;
            worst_fd = std::max(worst_fd, std::abs(fd - exact) / std::abs(exact));
        }
    }
    const double t = seconds_since(t0);
    return {worst_identity < 1e-6 && worst_fd < 1e-4 && t < 300.0,
            fmt("%d instances on level 2: adjoint identity %.1e (tol 1e-6), gradient vs FD %.1e (tol 1e-4), %.0f s",
                instances, worst_identity, worst_fd, t)};
}

Outcome case1_reconstruction() {
    const auto t0 = Clock::now();
    Scenario s = desk_scale(preset_case1());
    s.noise_levels = {0.0};
    const auto coarse = mesh_at(s.coarse_level);
    const ForwardOperator f = make_forward(s, coarse);
    const Measurement m = generate_measurement(s, *mesh_at(s.fine_level), f);
    LandweberConfig cfg;
    cfg.k_max = 200;
    cfg.store_iterates = false;
    const Parameter truth = s.truth_on(*coarse);
    const ReconstructionRun run = landweber_run(f, m.clean, s.initial_guess_on(*coarse), cfg, m.model_mismatch,
                                                make_truth_error(truth, f));
    g_traces.add("case 1 noiseless", run.discrepancy);
    const double best = run.truth_errors[*run.best_index - 1];
    const bool fired = run.dp_index.has_value();
    const double dp = fired ? run.truth_errors[*run.dp_index - 1] : run.truth_errors.back();
    const double t = seconds_since(t0);
    return {best < 0.05 && fired && dp < 0.15 && t < 600.0,
            fmt("levels 3->2: best L2 %.2f%% at k=%zu (tol 5%%), discrepancy principle %.2f%% at k=%s (tol 15%%), %.0f s",
                100.0 * best, *run.best_index, 100.0 * dp, fired ? std::to_string(*run.dp_index).c_str() : "none", t)};
}

Outcome case3_ladder() {
    const auto t0 = Clock::now();
    const std::vector<double> levels = {0.0, 0.005, 0.01, 0.02};
    const int seeds = 3;
    Scenario base = desk_scale(preset_case3());
    const auto coarse = mesh_at(base.coarse_level);
    const auto fine = mesh_at(base.fine_level);
    const ForwardOperator f = make_forward(base, coarse);
    const Parameter truth = base.truth_on(*coarse);
    LandweberConfig cfg;
    cfg.k_max = 300;
    cfg.store_iterates = false;
    cfg.continue_after_dp = false;

    // errors[level][seed] = {l2, h1}
    std::vector<std::vector<RelativeErrors>> errors(levels.size());
    std::string rows;
    bool all_reached = true;
    for (int seed = 0; seed < seeds; ++seed) {
        Scenario s = base;
        s.seed = base.seed + static_cast<std::uint64_t>(seed);
        s.noise_levels = levels;
        const Measurement m = generate_measurement(s, *fine, f);
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (i == 0 && seed > 0) {
                // Noiseless data do not depend on the seed.
                errors[0].push_back(errors[0].front());
                continue;
            }
            const NoisyMeasurement& nm = m.noisy[i];
            LandweberConfig boot = cfg;
            boot.find_initial_value = true;
            const Parameter p1 = bootstrap_initial_value(f, nm.series, s.initial_guess_on(*coarse), boot, nm.data_error);
            const ReconstructionRun run = landweber_run(f, nm.series, p1, cfg, nm.data_error);
            g_traces.add(fmt("case 3 noise %g seed %llu", nm.level, static_cast<unsigned long long>(s.seed)), run.discrepancy);
            const ErrorReport r = evaluate(run, truth, f, nm.level, s.seed);
            errors[i].push_back(r.discrepancy_principle->errors);
            if (i > 0) all_reached = all_reached && r.discrepancy_principle->reached;
            rows += fmt("\n      noise %-5g seed %llu: k=%zu%s L2 %.3f H1 %.3f", nm.level,
                        static_cast<unsigned long long>(s.seed), r.discrepancy_principle->index,
                        r.discrepancy_principle->reached ? "" : " (not reached)", r.discrepancy_principle->errors.l2,
                        r.discrepancy_principle->errors.h1);
        }
    }
    bool monotone = true;
    std::string votes;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
        int agree = 0;
        for (int seed = 0; seed < seeds; ++seed) agree += errors[i][seed].l2 <= errors[i + 1][seed].l2 ? 1 : 0;
        monotone = monotone && 2 * agree > seeds;
        votes += fmt(" %g<=%g:%d/%d", levels[i], levels[i + 1], agree, seeds);
    }
    bool dominated = true;
    std::string table;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        double l2 = 0.0, h1 = 0.0;
        for (const auto& e : errors[i]) {
            l2 += e.l2 / seeds;
            h1 += e.h1 / seeds;
        }
        dominated = dominated && h1 >= l2;
        table += fmt(" [%g: %.3f/%.3f]", levels[i], l2, h1);
    }
    const double t = seconds_since(t0);
    return {monotone && dominated && t < 1800.0,
            fmt("levels 3->2, %d seeds; majority votes%s; mean L2/H1%s; H1>=L2 %s; noisy runs all stopped %s; %.0f s",
                seeds, votes.c_str(), table.c_str(), dominated ? "yes" : "no", all_reached ? "yes" : "no", t) +
                rows};
}

Outcome case2_behavior() {
    const auto t0 = Clock::now();
    Scenario s = desk_scale(preset_case2());
    s.noise_levels = {0.0};
    const fs::path sim = work_dir() / "case2" / "sim";
    const fs::path out = work_dir() / "case2" / "run";
    simulate_to_dir(s, sim, work_dir() / "cache");
    ReconstructRequest req;
    req.measurement = sim / "y.csv";
    req.scenario = s;
    req.out_dir = out;
    req.cache_dir = work_dir() / "cache";
    req.overrides = {"landweber.k_max=150"};
    req.config = apply_overrides(default_config(), req.overrides);
    const ReconstructResult r = reconstruct_to_dir(req);
    g_traces.add("case 2 noiseless", r.run.discrepancy);
    const double first = r.run.discrepancy.front();
    const double last = r.run.discrepancy.back();
    const double reduction = 1.0 - last / first;
    bool artifacts = true;
    for (const fs::path p : {out / "manifest.json", out / "final.csv", out / "errors.csv", out / "iterates" / "iter_0001.csv",
                             sim / "y.csv", sim / "manifest.json", sim / "truth.csv"})
        artifacts = artifacts && fs::exists(p) && fs::file_size(p) > 0;
    const double t = seconds_since(t0);
    const auto& best = r.report->best->errors;
    return {reduction >= 0.5 && artifacts && t < 1200.0,
            fmt("discrepancy %.3e -> %.3e after %zu iterations, reduction %.1f%% (need >= 50%%); phi error at best "
                "iterate L2 %.3f H1 %.3f (reported only); artifacts %s; %.0f s",
                first, last, r.run.iterations(), 100.0 * reduction, best.l2, best.h1, artifacts ? "written" : "MISSING", t)};
}

Outcome smoother_correctness() {
    const double T = 40e-9;
    const double eps_t = T / 10.0;
    const TimeGrid fine_grid(T, 20000);
    TimeSeries3 f(static_cast<Eigen::Index>(fine_grid.samples()), 3);
    for (Eigen::Index n = 0; n < f.rows(); ++n) {
        const double c = std::cos(std::numbers::pi * fine_grid.time(static_cast<std::size_t>(n)) / T);
        f.row(n) << c, -0.5 * c, 2.0 * c;
    }
    const double factor = 1.0 / (1.0 + eps_t * eps_t * std::numbers::pi * std::numbers::pi / (T * T));
    const double cosine_err = (riesz_smooth_time(f, fine_grid, eps_t) - factor * f).cwiseAbs().maxCoeff();

    const TimeGrid grid(T, 150);
    const TimeSmoother ts(grid, eps_t);
    Eigen::VectorXd wt(static_cast<Eigen::Index>(grid.samples()));
    for (Eigen::Index i = 0; i < wt.size(); ++i) wt(i) = grid.trapezoid_weight(static_cast<std::size_t>(i));
    const auto mesh = mesh_at(3);
    const DiscreteOperators ops = assemble_operators(*mesh, 1e8);
    const SpaceSmoother ss(ops, mesh->diameter());
    std::mt19937_64 rng(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        return m;
    };
    auto inner = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::VectorXd& w) {
        return (a.transpose() * w.asDiagonal() * b).trace();
    };
    double symmetry = 0.0;
    double min_positive = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd a = random(wt.size(), 3), b = random(wt.size(), 3);
        const double x = inner(ts.apply(a), b, wt), y = inner(a, ts.apply(b), wt);
        symmetry = std::max(symmetry, std::abs(x - y) / (std::abs(x) + std::abs(y)));
        min_positive = std::min(min_positive, inner(ts.apply(a), a, wt) / inner(a, a, wt));
        const auto cells = static_cast<Eigen::Index>(mesh->num_cells());
        const Eigen::MatrixXd c = random(cells, 3), d = random(cells, 3);
        const double u = inner(ss.apply(c), d, ops.mass), v = inner(c, ss.apply(d), ops.mass);
        symmetry = std::max(symmetry, std::abs(u - v) / (std::abs(u) + std::abs(v)));
        min_positive = std::min(min_positive, inner(ss.apply(c), c, ops.mass) / inner(c, c, ops.mass));
    }
    return {cosine_err < 1e-8 && symmetry < 1e-10 && min_positive > 0.0,
            fmt("cosine eigenfunction error %.1e (tol 1e-8, N=20000); time+space symmetry %.1e (tol 1e-10); "
                "min <Sf,f>/<f,f> = %.2e over 20 inputs each",
                cosine_err, symmetry, min_positive)};
}

Outcome armijo_monotonicity() {
    std::size_t checked = 0;
    std::string offenders;
    for (const auto& [name, d] : g_traces.runs) {
        for (std::size_t k = 1; k < d.size(); ++k) {
            ++checked;
            if (!(d[k] < d[k - 1])) offenders += " " + name + fmt("@k=%zu", k + 1);
        }
    }
    return {offenders.empty() && checked > 0,
            fmt("%zu accepted iterations across %zu runs", checked, g_traces.runs.size()) +
                (offenders.empty() ? std::string(", all strictly decreasing") : ", violations:" + offenders)};
}

Outcome determinism() {
    Scenario s = desk_scale(preset_case1());
    s.noise_levels = {0.0, 0.05};
    const fs::path root = work_dir() / "determinism";
    std::vector<std::vector<double>> traces;
    std::vector<std::string> finals;
    for (const char* tag : {"a", "b"}) {
        simulate_to_dir(s, root / tag / "sim", root / tag / "cache");
        ReconstructRequest req;
        req.measurement = root / tag / "sim" / "y_d05.csv";
        req.scenario = s;
        req.out_dir = root / tag / "run";
        req.cache_dir = root / tag / "cache";
        req.overrides = {"landweber.k_max=15"};
        req.config = apply_overrides(default_config(), req.overrides);
        const ReconstructResult r = reconstruct_to_dir(req);
        traces.push_back(r.run.discrepancy);
        finals.push_back(slurp(req.out_dir / "final.csv"));
        g_traces.add(std::string("determinism ") + tag, r.run.discrepancy);
    }
    bool same_files = true;
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(root / "a" / "sim")) {
        const fs::path name = entry.path().filename();
        if (name == "manifest.json") continue;
        ++compared;
        same_files = same_files && slurp(entry.path()) == slurp(root / "b" / "sim" / name);
    }
    same_files = same_files && compared >= 4;
    const bool same_traces = traces[0] == traces[1];
    const bool same_final = finals[0] == finals[1];
    return {same_files && same_traces && same_final,
            fmt("%zu simulate outputs %s, discrepancy traces (%zu entries) %s, final iterates %s",
                compared, same_files ? "byte-identical" : "DIFFER", traces[0].size(), same_traces ? "identical" : "DIFFER",
                same_final ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"mass conservation", mass_conservation},
        {"adjoint correctness", adjoint_correctness},
        {"case 1 reconstruction", case1_reconstruction},
        {"case 3 noise ladder", case3_ladder},
        {"case 2 behavior", case2_behavior},
        {"smoother correctness", smoother_correctness},
        {"Armijo monotonicity", armijo_monotonicity},
        {"determinism", determinism},
    };
    // Run order: criterion 7 inspects the traces of every other run, so it goes last.
    const std::vector<int> order = {1, 2, 3, 4, 5, 6, 8, 7};
    std::map<int, Outcome> results;
    for (int id : order) {
        if (!selected.empty() && !selected.count(id)) continue;
        const auto& [name, check] = criteria[static_cast<std::size_t>(id - 1)];
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        results[id] = o;
        std::printf("criterion %d %-22s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    int failed = 0;
    for (const auto& [id, o] : results) failed += o.pass ? 0 : 1;
    std::printf("%zu criteria checked, %d failed\n", results.size(), failed);
    return failed == 0 ? 0 : 1;
}
