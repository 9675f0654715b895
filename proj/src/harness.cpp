#include "fokkerid/harness.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

using nlohmann::json;

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

Vec3 to_vec(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

std::array<double, 3> read_triple(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json waveform_to_json(const Waveform& w) {
    json terms = json::array();
    for (const auto& comp : w.terms) {
        json c = json::array();
        for (const auto& t : comp) c.push_back({{"amplitude", t.amplitude}, {"frequency", t.frequency}, {"phase", t.phase}});
        terms.push_back(c);
    }
    return {{"kind", "waveform"}, {"offset", w.offset}, {"terms", terms}};
}

Waveform waveform_from_json(const json& j) {
    Waveform w;
    if (j.contains("offset")) w.offset = read_triple(j.at("offset"), "waveform offset");
    if (j.contains("terms")) {
        const json& terms = j.at("terms");
        if (!terms.is_array() || terms.size() != 3) throw ConfigError("waveform terms must list 3 components");
        for (std::size_t c = 0; c < 3; ++c) {
            for (const auto& t : terms[c]) {
                w.terms[c].push_back({t.value("amplitude", 0.0), t.value("frequency", 0.0), t.value("phase", 0.0)});
            }
        }
    }
    return w;
}

json spec_to_json(const ParameterSpec& s) {
    return std::visit(Overloaded{
                          [](const Waveform& w) { return waveform_to_json(w); },
                          [](const UniaxialLandscape& u) {
                              return json{{"kind", "uniaxial"}, {"axis", u.axis}, {"strength", u.strength}};
                          },
                      },
                      s);
}

ParameterSpec spec_from_json(const json& j) {
    const std::string kind = j.value("kind", "");
    if (kind == "waveform") return waveform_from_json(j);
    if (kind == "uniaxial") {
        UniaxialLandscape u;
        u.axis = read_triple(j.at("axis"), "uniaxial axis");
        u.strength = j.value("strength", 1.0);
        return u;
    }
    throw ConfigError("unknown parameter kind '" + kind + "'");
}

Parameter realize(const ParameterSpec& spec, ParameterCase c, const TimeGrid& grid, const SphereMesh& mesh) {
    switch (c) {
        case ParameterCase::field_waveform: return FieldWaveform{std::get<Waveform>(spec).sample(grid)};
        case ParameterCase::easy_axis: return EasyAxis{std::get<Waveform>(spec).sample(grid)};
        case ParameterCase::anisotropy_landscape:
            return AnisotropyLandscape{{std::get<UniaxialLandscape>(spec).sample(mesh.circumcenters)}};
    }
    throw ConfigError("unknown parameter case");
}

void check_spec(const ParameterSpec& spec, ParameterCase c, const char* what) {
    const bool wants_landscape = c == ParameterCase::anisotropy_landscape;
    if (wants_landscape != std::holds_alternative<UniaxialLandscape>(spec)) {
        throw ConfigError(std::string(what) + " does not fit parameter case " + case_name(c));
    }
}

// Squared L2 and H1 norms of a time series; the derivative uses the time
// variable s = t/T.
std::pair<double, double> series_norms(const TimeSeries3& x, const TimeGrid& grid) {
    double l2 = 0.0;
    double semi = 0.0;
    const double ds = grid.dt() / grid.horizon();
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
        l2 += grid.trapezoid_weight(static_cast<std::size_t>(n)) * x.row(n).squaredNorm();
        if (n > 0) semi += grid.dt() * (x.row(n) - x.row(n - 1)).squaredNorm() / (ds * ds);
    }
    return {l2, l2 + semi};
}

// Squared L2 and H1 norms of a cell-vector field on the sphere.
std::pair<double, double> cell_norms(const CellVectors& x, const DiscreteOperators& ops) {
    double l2 = 0.0;
    double semi = 0.0;
    for (int c = 0; c < 3; ++c) {
        const CellField col = x.col(c);
        l2 += ops.mass.dot(col.cwiseProduct(col));
        semi -= col.dot(ops.stiffness * col) / ops.lambda;
    }
    return {l2, l2 + semi};
}

std::pair<double, double> parameter_norms(const Parameter& p, const ForwardOperator& forward) {
    const TimeGrid& grid = forward.grid();
    return std::visit(Overloaded{
                          [&](const FieldWaveform& f) { return series_norms(f.field, grid); },
                          [&](const EasyAxis& e) { return series_norms(e.axis, grid); },
                          [&](const AnisotropyLandscape& a) {
                              if (a.is_static()) return cell_norms(a.phi.front(), forward.operators());
                              // Time-indexed: trapezoid in time over the spatial norms plus the time seminorm.
                              double l2 = 0.0;
                              double h1 = 0.0;
                              const double ds = grid.dt() / grid.horizon();
                              for (std::size_t n = 0; n < a.phi.size(); ++n) {
                                  const auto [sl2, sh1] = cell_norms(a.phi[n], forward.operators());
                                  l2 += grid.trapezoid_weight(n) * sl2;
                                  h1 += grid.trapezoid_weight(n) * sh1;
                                  if (n > 0) {
                                      const CellVectors d = (a.phi[n] - a.phi[n - 1]) / ds;
                                      h1 += grid.dt() * cell_norms(d, forward.operators()).first;
                                  }
                              }
                              return std::pair{l2, h1};
                          },
                      },
                      p);
}

// The drift sees the easy axis only through n n^T, so the error is measured
// between lines. Each sample is normalized and matched in sign to the truth;
// each difference quotient uses one sign for both of its ends, so a sign
// switch in the matching does not show up as a jump.
std::pair<double, double> axis_error_norms(const TimeSeries3& rec, const TimeSeries3& truth, const TimeGrid& grid) {
    TimeSeries3 a = rec;
    for (Eigen::Index n = 0; n < a.rows(); ++n) {
        const double len = a.row(n).norm();
        if (len > 0.0) a.row(n) /= len;
    }
    auto sign = [](double d) { return d < 0.0 ? -1.0 : 1.0; };
    double l2 = 0.0;
    double semi = 0.0;
    const double ds = grid.dt() / grid.horizon();
    for (Eigen::Index n = 0; n < a.rows(); ++n) {
        const double s = sign(a.row(n).dot(truth.row(n)));
        l2 += grid.trapezoid_weight(static_cast<std::size_t>(n)) * (s * a.row(n) - truth.row(n)).squaredNorm();
        if (n > 0) {
            const double prev = sign(a.row(n - 1).dot(truth.row(n - 1)));
            const Eigen::RowVector3d next = sign(a.row(n).dot(a.row(n - 1))) * a.row(n);
            const Eigen::RowVector3d d = prev * (next - a.row(n - 1)) - (truth.row(n) - truth.row(n - 1));
            semi += grid.dt() * d.squaredNorm() / (ds * ds);
        }
    }
    return {l2, l2 + semi};
}

double sup_norm(const ObservationSeries& y) { return y.values.cwiseAbs().maxCoeff(); }

}  // namespace

Waveform Waveform::constant(const Vec3& v) {
    Waveform w;
    w.offset = {v.x(), v.y(), v.z()};
    return w;
}

TimeSeries3 Waveform::sample(const TimeGrid& grid) const {
    TimeSeries3 out(static_cast<Eigen::Index>(grid.samples()), 3);
    for (std::size_t n = 0; n < grid.samples(); ++n) {
        const double s = grid.time(n) / grid.horizon();
        for (int c = 0; c < 3; ++c) {
            double v = offset[static_cast<std::size_t>(c)];
            for (const auto& t : terms[static_cast<std::size_t>(c)]) {
                v += t.amplitude * std::cos(2.0 * std::numbers::pi * t.frequency * s + t.phase);
            }
            out(static_cast<Eigen::Index>(n), c) = v;
        }
    }
    return out;
}

CellVectors UniaxialLandscape::sample(const CellVectors& centers) const {
    const Eigen::RowVector3d n = to_vec(axis).transpose();
    return strength * (centers * n.transpose()) * n;
}

void Scenario::validate() const {
    constants.validate();
    if (coarse_level < 0 || fine_level > kMaxMeshLevel) throw ConfigError("mesh levels must lie in [0, 7]");
    if (fine_level <= coarse_level) throw ConfigError("fine mesh level must exceed the coarse level");
    if (!(horizon > 0.0)) throw ConfigError("time horizon must be positive");
    if (steps < 1) throw ConfigError("step count must be positive");
    for (double level : noise_levels) {
        if (!(level >= 0.0 && level < 1.0)) throw ConfigError("noise levels must lie in [0, 1)");
    }
    if (truth) check_spec(*truth, parameter_case, "ground truth");
    check_spec(initial_guess, parameter_case, "initial guess");
}

TimeSeries3 Scenario::background_field() const { return background.sample(grid()); }

Parameter Scenario::truth_on(const SphereMesh& mesh) const {
    if (!truth) throw EvaluationError("scenario '" + name + "' has no ground truth");
    return realize(*truth, parameter_case, grid(), mesh);
}

Parameter Scenario::initial_guess_on(const SphereMesh& mesh) const {
    return realize(initial_guess, parameter_case, grid(), mesh);
}

nlohmann::json scenario_to_json(const Scenario& s) {
    const auto& k = s.constants;
    json noise = json::array();
    for (double v : s.noise_levels) noise.push_back(v);
    json j = {
        {"format", kScenarioFormatTag},
        {"name", s.name},
        {"case", static_cast<int>(s.parameter_case)},
        {"constants",
         {{"gamma", k.gamma},
          {"alpha_hat", k.alpha_hat},
          {"mu0", k.mu0},
          {"k_anis", k.k_anis},
          {"m_s", k.m_s},
          {"lambda", k.lambda}}},
        {"mesh", {{"fine_level", s.fine_level}, {"coarse_level", s.coarse_level}}},
        {"time", {{"horizon", s.horizon}, {"steps", s.steps}}},
        {"observation", mode_name(s.mode)},
        {"initial_density", "uniform"},
        {"background_field", waveform_to_json(s.background)},
        {"initial_guess", spec_to_json(s.initial_guess)},
        {"noise_levels", noise},
        {"seed", s.seed},
    };
    if (s.truth) j["truth"] = spec_to_json(*s.truth);
    return j;
}

Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", "") != kScenarioFormatTag) throw ConfigError("scenario format tag missing or unknown");
        Scenario s;
        s.name = j.value("name", "");
        const int c = j.at("case").get<int>();
        if (c < 1 || c > 3) throw ConfigError("case must be 1, 2 or 3");
        s.parameter_case = static_cast<ParameterCase>(c);
        if (j.contains("constants")) {
            const json& k = j.at("constants");
            s.constants.gamma = k.value("gamma", s.constants.gamma);
            s.constants.alpha_hat = k.value("alpha_hat", s.constants.alpha_hat);
            s.constants.mu0 = k.value("mu0", s.constants.mu0);
            s.constants.k_anis = k.value("k_anis", s.constants.k_anis);
            s.constants.m_s = k.value("m_s", s.constants.m_s);
            s.constants.lambda = k.value("lambda", s.constants.lambda);
        }
        if (j.contains("mesh")) {
            s.fine_level = j.at("mesh").value("fine_level", s.fine_level);
            s.coarse_level = j.at("mesh").value("coarse_level", s.coarse_level);
        }
        if (j.contains("time")) {
            s.horizon = j.at("time").value("horizon", s.horizon);
            s.steps = j.at("time").value("steps", s.steps);
        }
        s.mode = parse_mode(j.value("observation", "expectation"));
        if (j.value("initial_density", "uniform") != "uniform") throw ConfigError("only the uniform initial density is supported");
        if (j.contains("background_field")) s.background = waveform_from_json(j.at("background_field"));
        if (j.contains("truth")) s.truth = spec_from_json(j.at("truth"));
        s.initial_guess = spec_from_json(j.at("initial_guess"));
        if (j.contains("noise_levels")) s.noise_levels = j.at("noise_levels").get<std::vector<double>>();
        s.seed = j.value("seed", s.seed);
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
}

void save_scenario(const std::filesystem::path& path, const Scenario& s) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write scenario " + path.string());
    out << scenario_to_json(s).dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read scenario " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("scenario " + path.string() + " is not valid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

Scenario preset_case1() {
    Scenario s;
    s.name = "case1-applied-field";
    s.parameter_case = ParameterCase::field_waveform;
    Waveform truth;
    truth.terms[0] = {{10e-3, 1.0, 0.0}};
    truth.terms[1] = {{6e-3, 0.5, 0.0}};
    truth.offset[2] = 4e-3;
    truth.terms[2] = {{3e-3, 1.5, 0.0}};
    s.truth = truth;
    s.initial_guess = Waveform{};
    s.noise_levels = {0.0, 0.05};
    s.seed = 1;
    return s;
}

Scenario preset_case2() {
    Scenario s;
    s.name = "case2-anisotropy-landscape";
    s.parameter_case = ParameterCase::anisotropy_landscape;
    Waveform field;
    field.terms[0] = {{15e-3, 3.0, 0.0}};
    field.terms[1] = {{15e-3, 3.0 * std::numbers::sqrt2, 0.5 * std::numbers::pi}};
    field.terms[2] = {{15e-3, 3.0 * std::numbers::sqrt3, 0.25 * std::numbers::pi}};
    s.background = field;
    s.truth = UniaxialLandscape{{0.0, 1.0, 0.0}, 1.0};
    s.initial_guess = UniaxialLandscape{{1.0, 0.0, 0.0}, 1.0};
    s.noise_levels = {0.0};
    s.seed = 2;
    return s;
}

Scenario preset_case3() {
    Scenario s;
    s.name = "case3-easy-axis";
    s.parameter_case = ParameterCase::easy_axis;
    s.constants.k_anis = 1000.0;
    s.background = Waveform::constant(Vec3(10e-3, 10e-3, 10e-3) / std::sqrt(3.0));
    Waveform axis;
    axis.terms[0] = {{1.0, 1.0, 0.0}};
    axis.terms[1] = {{1.0, 1.0, -0.5 * std::numbers::pi}};
    s.truth = axis;
    s.initial_guess = Waveform::constant(Vec3::UnitX());
    s.noise_levels = {0.0, 0.005, 0.01, 0.02, 0.05};
    s.seed = 3;
    return s;
}

Scenario preset(int parameter_case) {
    switch (parameter_case) {
        case 1: return preset_case1();
        case 2: return preset_case2();
        case 3: return preset_case3();
        default: throw ConfigError("preset case must be 1, 2 or 3");
    }
}

ForwardOperator make_forward(const Scenario& s, std::shared_ptr<const SphereMesh> mesh) {
    return ForwardOperator(std::move(mesh), s.constants, s.grid(), s.background_field(), s.mode);
}

ObservationSeries add_noise(const ObservationSeries& clean, double level, std::uint64_t seed, std::size_t stream) {
    ObservationSeries noisy = clean;
    if (level == 0.0) return noisy;
    const double sigma = level * sup_norm(clean);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index n = 0; n < noisy.values.rows(); ++n) {
        for (Eigen::Index c = 0; c < noisy.values.cols(); ++c) noisy.values(n, c) += normal(rng);
    }
    return noisy;
}

Measurement generate_measurement(const Scenario& s, const SphereMesh& fine, const ForwardOperator& coarse) {
    s.validate();
    if (!s.truth) throw ConfigError("simulation needs a ground truth");
    const SphereMesh& coarse_mesh = coarse.mesh();
    if (fine.num_cells() <= coarse_mesh.num_cells()) throw ConfigError("data mesh must be finer than the inversion mesh");

    const DiscreteOperators fine_ops = assemble_operators(fine, s.constants.lambda);
    const DriftModel fine_model = DriftModel::from_mesh(fine, s.constants, s.grid(), s.background_field());
    const DriftField drift = assemble_drift(s.truth_on(fine), fine_model);
    const CellField u0 = CellField::Constant(static_cast<Eigen::Index>(fine.num_cells()), 1.0 / (4.0 * std::numbers::pi));
    const StateField fine_state = solve_forward(drift, u0, fine_ops, s.grid());

    const MeshTransfer transfer(fine, coarse_mesh);
    StateField transferred;
    transferred.grid = fine_state.grid;
    transferred.values.reserve(fine_state.samples());
    for (const auto& u : fine_state.values) transferred.values.push_back(transfer.apply(u));

    Measurement m;
    m.clean = observe(transferred, s.mode, coarse_mesh);
    const ObservationSeries coarse_truth = coarse.evaluate(s.truth_on(coarse_mesh)).observation;
    m.model_mismatch = coarse.discrepancy(m.clean, coarse_truth);
    spdlog::info("measurement: two-grid model mismatch {:.6g} (level {} -> {})", m.model_mismatch, fine.level,
                 coarse_mesh.level);

    for (std::size_t i = 0; i < s.noise_levels.size(); ++i) {
        NoisyMeasurement nm;
        nm.level = s.noise_levels[i];
        nm.series = add_noise(m.clean, nm.level, s.seed, i);
        nm.delta = coarse.discrepancy(nm.series, m.clean);
        nm.data_error = coarse.discrepancy(nm.series, coarse_truth);
        m.noisy.push_back(std::move(nm));
    }
    return m;
}

RelativeErrors relative_errors(const Parameter& reconstruction, const Parameter& truth, const ForwardOperator& forward) {
    check_same_shape(reconstruction, truth);
    const auto [el2, eh1] = std::holds_alternative<EasyAxis>(truth)
                                ? axis_error_norms(std::get<EasyAxis>(reconstruction).axis,
                                                   std::get<EasyAxis>(truth).axis, forward.grid())
                                : parameter_norms(axpy(reconstruction, -1.0, truth), forward);
    const auto [tl2, th1] = parameter_norms(truth, forward);
    if (!(tl2 > 0.0)) throw EvaluationError("ground truth has zero norm");
    return {std::sqrt(el2 / tl2), std::sqrt(eh1 / th1)};
}

TruthError make_truth_error(const Parameter& truth, const ForwardOperator& forward) {
    return [truth, &forward](const Parameter& p) { return relative_errors(p, truth, forward).l2; };
}

ErrorReport evaluate(const ReconstructionRun& run, const Parameter& truth, const ForwardOperator& forward,
                     double noise_level, std::uint64_t seed) {
    ErrorReport report;
    report.noise_level = noise_level;
    report.seed = seed;
    if (run.dp_index) {
        const Parameter& p = run.iterates.empty() ? *run.dp_iterate : run.iterates[*run.dp_index - 1];
        report.discrepancy_principle = StoppedError{*run.dp_index, relative_errors(p, truth, forward), true};
    } else if (run.delta > 0.0) {
        report.discrepancy_principle = StoppedError{run.iterations(), relative_errors(run.current, truth, forward), false};
    }
    if (!run.iterates.empty()) {
        for (std::size_t k = 0; k < run.iterates.size(); ++k) {
            const RelativeErrors e = relative_errors(run.iterates[k], truth, forward);
            if (!report.best || e.l2 < report.best->errors.l2) report.best = StoppedError{k + 1, e, true};
        }
    } else if (run.best_iterate) {
        report.best = StoppedError{*run.best_index, relative_errors(*run.best_iterate, truth, forward), true};
    } else {
        report.best = StoppedError{run.iterations(), relative_errors(run.current, truth, forward), true};
    }
    return report;
}

}  // namespace fokkerid
