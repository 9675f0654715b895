#include "fokkerid/inversion.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

// Stacks the time slices of a landscape into a (samples x cells) matrix for one component.
Eigen::MatrixXd landscape_component(const AnisotropyLandscape& a, int component) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(a.phi.size()), a.phi.front().rows());
    for (std::size_t n = 0; n < a.phi.size(); ++n) out.row(static_cast<Eigen::Index>(n)) = a.phi[n].col(component).transpose();
    return out;
}

Parameter random_like(const Parameter& p, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](auto& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
        }
    };
    Parameter out = p;
    std::visit(Overloaded{
                   [&](FieldWaveform& x) { fill(x.field); },
                   [&](AnisotropyLandscape& x) {
                       for (auto& s : x.phi) fill(s);
                   },
                   [&](EasyAxis& x) { fill(x.axis); },
               },
               out);
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Smoothers

TimeSmoother::TimeSmoother(const TimeGrid& grid, double epsilon) : epsilon_(epsilon) {
    if (epsilon < 0.0) throw ConfigError("time smoothing strength must be non-negative");
    const auto n = static_cast<Eigen::Index>(grid.samples());
    weights_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) weights_(i) = grid.trapezoid_weight(static_cast<std::size_t>(i));
    const double k = epsilon * epsilon / grid.dt();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(3 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool end = (i == 0 || i == n - 1);
        t.emplace_back(i, i, weights_(i) + (end ? k : 2.0 * k));
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, -k);
            t.emplace_back(i + 1, i, -k);
        }
    }
    system_.resize(n, n);
    system_.setFromTriplets(t.begin(), t.end());
    solver_.compute(system_);
    if (solver_.info() != Eigen::Success) throw NumericalError("time smoother factorization failed");
}

Eigen::MatrixXd TimeSmoother::apply(const Eigen::MatrixXd& f) const {
    if (f.rows() != weights_.size()) throw ShapeError("time smoother input does not match the time grid");
    Eigen::MatrixXd rhs = weights_.asDiagonal() * f;
    Eigen::MatrixXd v = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success) throw NumericalError("time smoother solve failed");
    return v;
}

double TimeSmoother::energy(const Eigen::MatrixXd& f) const {
    return (f.transpose() * (system_ * f)).trace();
}

SpaceSmoother::SpaceSmoother(const DiscreteOperators& ops, double epsilon) : epsilon_(epsilon), mass_(ops.mass) {
    if (epsilon < 0.0) throw ConfigError("space smoothing strength must be non-negative");
    const auto n = static_cast<Eigen::Index>(ops.num_cells());
    const Eigen::SparseMatrix<double> lap = ops.stiffness / ops.lambda;
    Eigen::SparseMatrix<double> mass(n, n);
    Eigen::SparseMatrix<double> inv_mass(n, n);
    mass.reserve(Eigen::VectorXi::Constant(n, 1));
    inv_mass.reserve(Eigen::VectorXi::Constant(n, 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        mass.insert(i, i) = ops.mass(i);
        inv_mass.insert(i, i) = 1.0 / ops.mass(i);
    }
    const double e2 = epsilon * epsilon;
    const Eigen::SparseMatrix<double> bilaplace = lap * inv_mass * lap;
    system_ = mass - e2 * lap + (e2 * e2) * bilaplace;
    system_.makeCompressed();
    solver_.compute(system_);
    if (solver_.info() != Eigen::Success) throw NumericalError("space smoother factorization failed");
}

Eigen::MatrixXd SpaceSmoother::apply(const Eigen::MatrixXd& v) const {
    if (v.rows() != mass_.size()) throw ShapeError("space smoother input does not match the mesh");
    Eigen::MatrixXd rhs = mass_.asDiagonal() * v;
    Eigen::MatrixXd u = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success) throw NumericalError("space smoother solve failed");
    return u;
}

double SpaceSmoother::energy(const Eigen::MatrixXd& v) const {
    return (v.transpose() * (system_ * v)).trace();
}

TimeSeries3 riesz_smooth_time(const TimeSeries3& f, const TimeGrid& grid, double epsilon_time) {
    return TimeSmoother(grid, epsilon_time).apply(f);
}

CellField riesz_smooth_space(const CellField& f, const DiscreteOperators& ops, double epsilon_space) {
    return SpaceSmoother(ops, epsilon_space).apply(f);
}

// ---------------------------------------------------------------------------
// Forward operator

ForwardOperator::ForwardOperator(std::shared_ptr<const SphereMesh> mesh, const PhysicalConstants& constants,
                                 const TimeGrid& grid, TimeSeries3 background_field, ObservationMode mode, CellField u0,
                                 double observation_gain)
    : mesh_(std::move(mesh)),
      ops_(assemble_operators(*mesh_, constants.lambda)),
      drift_model_(DriftModel::from_mesh(*mesh_, constants, grid, std::move(background_field))),
      mode_(mode),
      u0_(std::move(u0)),
      gain_(observation_gain) {
    if (u0_.size() == 0) u0_ = CellField::Constant(static_cast<Eigen::Index>(mesh_->num_cells()), 1.0 / (4.0 * std::numbers::pi));
    if (static_cast<std::size_t>(u0_.size()) != mesh_->num_cells()) throw ShapeError("initial density does not match the mesh");
}

ForwardOperator::Evaluation ForwardOperator::evaluate(const Parameter& p) const {
    Evaluation e;
    e.drift = assemble_drift(p, drift_model_);
    e.state = solve_forward(e.drift, u0_, ops_, grid());
    e.observation = observe(e.state, mode_, *mesh_);
    if (gain_ != 1.0) e.observation.values *= gain_;
    return e;
}

ObservationSeries ForwardOperator::derivative_apply(const Evaluation& at, const Parameter& p, const Parameter& h) const {
    const DriftField dh = gamma_derivative_apply(p, h, drift_model_);
    const StateField v = solve_sensitivity(at.drift, dh, at.state, ops_, grid());
    ObservationSeries y = observe(v, mode_, *mesh_);
    if (gain_ != 1.0) y.values *= gain_;
    return y;
}

DriftField ForwardOperator::drift_adjoint_apply(const Evaluation& at, const ObservationSeries& z) const {
    std::vector<CellField> source = observe_adjoint(z, *mesh_);
    if (gain_ != 1.0) {
        for (auto& s : source) s *= gain_;
    }
    const AdjointField psi = solve_adjoint(at.drift, source, ops_, grid());
    return state_adjoint_product(at.state, psi, ops_);
}

Parameter ForwardOperator::adjoint_apply(const Evaluation& at, const Parameter& p, const ObservationSeries& z) const {
    return gamma_adjoint_apply(p, drift_adjoint_apply(at, z), drift_model_);
}

double ForwardOperator::observation_norm(const ObservationSeries& y) const {
    return fokkerid::observation_norm(y, *mesh_);
}

double ForwardOperator::discrepancy(const ObservationSeries& y, const ObservationSeries& y_delta) const {
    return observation_norm(observation_difference(y, y_delta));
}

// ---------------------------------------------------------------------------
// Riesz map

RieszMap::RieszMap(const ForwardOperator& forward, double epsilon_time, double epsilon_space)
    : time_(forward.grid(), epsilon_time),
      space_(forward.operators(), epsilon_space) {}

Parameter RieszMap::apply(const Parameter& g) const {
    return std::visit(Overloaded{
                          [&](const FieldWaveform& x) -> Parameter { return FieldWaveform{time_.apply(x.field)}; },
                          [&](const EasyAxis& x) -> Parameter { return EasyAxis{time_.apply(x.axis)}; },
                          [&](const AnisotropyLandscape& x) -> Parameter {
                              AnisotropyLandscape out = x;
                              if (x.is_static()) {
                                  out.phi.front() = space_.apply(x.phi.front());
                                  return out;
                              }
                              for (int c = 0; c < 3; ++c) {
                                  // Tensor-product smoother: time along rows, space along columns.
                                  const Eigen::MatrixXd smoothed =
                                      space_.apply(time_.apply(landscape_component(x, c)).transpose()).transpose();
                                  for (std::size_t n = 0; n < out.phi.size(); ++n) {
                                      out.phi[n].col(c) = smoothed.row(static_cast<Eigen::Index>(n)).transpose();
                                  }
                              }
                              return out;
                          },
                      },
                      g);
}

double RieszMap::energy(const Parameter& h) const {
    return std::visit(Overloaded{
                          [&](const FieldWaveform& x) { return time_.energy(x.field); },
                          [&](const EasyAxis& x) { return time_.energy(x.axis); },
                          [&](const AnisotropyLandscape& x) {
                              if (x.is_static()) return space_.energy(x.phi.front());
                              double e = 0.0;
                              for (int c = 0; c < 3; ++c) {
                                  const Eigen::MatrixXd m = landscape_component(x, c);
                                  const Eigen::MatrixXd tm = time_.system() * m;
                                  e += (tm.transpose() * m * space_.system()).trace();
                              }
                              return e;
                          },
                      },
                      h);
}

// ---------------------------------------------------------------------------
// Landweber

void LandweberConfig::validate() const {
    if (!(armijo_factor > 0.0 && armijo_factor < 1.0)) throw ConfigError("armijo_factor must lie in (0, 1)");
    if (!(tau > 1.0)) throw ConfigError("tau must exceed 1");
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (omega < 0.0) throw ConfigError("omega must be positive (or 0 to estimate it)");
    if (!(step_safety > 0.0 && step_safety <= 1.0)) throw ConfigError("step_safety must lie in (0, 1]");
    if (j_max < 1) throw ConfigError("j_max must be at least 1");
    if (k_max < 1) throw ConfigError("k_max must be at least 1");
    if (bootstrap_k_max < 1) throw ConfigError("bootstrap_k_max must be at least 1");
    if (power_iterations < 1) throw ConfigError("power_iterations must be at least 1");
}

double LandweberConfig::resolved_epsilon_time(const TimeGrid& grid) const {
    return epsilon_time < 0.0 ? grid.horizon() / 10.0 : epsilon_time;
}

double LandweberConfig::resolved_epsilon_space(const SphereMesh& mesh) const {
    return epsilon_space < 0.0 ? mesh.diameter() : epsilon_space;
}

const char* status_name(RunStatus s) {
    switch (s) {
        case RunStatus::converged: return "converged";
        case RunStatus::discrepancy_principle: return "discrepancy_principle";
        case RunStatus::max_iterations: return "max_iterations";
        case RunStatus::stalled: return "stalled";
    }
    return "unknown";
}

Parameter compute_gradient(const ForwardOperator& forward, const ForwardOperator::Evaluation& at, const Parameter& p,
                           const ObservationSeries& residual, const RieszMap* riesz) {
    Parameter g = forward.adjoint_apply(at, p, residual);
    return riesz ? riesz->apply(g) : g;
}

StepEstimate estimate_step_length(const ForwardOperator& forward, const Parameter& p_tilde, const RieszMap* riesz,
                                  int trials, unsigned seed, double safety) {
    if (trials < 1) throw ConfigError("power iteration needs at least one trial");
    auto energy = [&](const Parameter& h) {
        return riesz ? riesz->energy(h) : parameter_inner(h, h, forward.drift_model());
    };
    std::mt19937_64 rng(seed);
    Parameter h = random_like(p_tilde, rng);
    h = scaled(h, 1.0 / std::sqrt(energy(h)));
    const auto at = forward.evaluate(p_tilde);

    StepEstimate est;
    double previous = 0.0;
    for (int it = 1; it <= trials; ++it) {
        const ObservationSeries z = forward.derivative_apply(at, p_tilde, h);
        const double yz = std::pow(forward.observation_norm(z), 2);
        est.norm_squared = yz / energy(h);
        est.iterations = it;
        Parameter g = forward.adjoint_apply(at, p_tilde, z);
        if (riesz) g = riesz->apply(g);
        const double gnorm = std::sqrt(energy(g));
        if (!(gnorm > 0.0)) throw NumericalError("power iteration hit the null space of F'");
        h = scaled(g, 1.0 / gnorm);
        if (it > 1 && std::abs(est.norm_squared - previous) <= 1e-4 * est.norm_squared) {
            est.converged = true;
            break;
        }
        previous = est.norm_squared;
    }
    if (!(est.norm_squared > 0.0)) throw NumericalError("operator norm estimate is zero");
    est.omega = safety / est.norm_squared;
    if (!est.converged) {
        spdlog::warn("step length: power iteration did not settle after {} trials; halving omega", trials);
        est.omega *= 0.5;
    }
    return est;
}

ReconstructionRun landweber_run(const ForwardOperator& forward, const ObservationSeries& y_delta, const Parameter& p1,
                                const LandweberConfig& config, double delta, const TruthError& truth_error) {
    config.validate();
    std::optional<RieszMap> riesz;
    if (!config.find_initial_value) {
        riesz.emplace(forward, config.resolved_epsilon_time(forward.grid()), config.resolved_epsilon_space(forward.mesh()));
    }
    const RieszMap* smoother = riesz ? &*riesz : nullptr;

    ReconstructionRun run;
    run.config = config;
    run.delta = delta;
    run.omega = config.omega > 0.0
                    ? config.omega
                    : estimate_step_length(forward, p1, smoother, config.power_iterations, config.power_seed,
                                           config.step_safety)
                          .omega;
    const double threshold = delta > 0.0 ? config.tau * delta : -1.0;

    auto record = [&](const Parameter& p, double disc, double step, int trials, double seconds) {
        run.discrepancy.push_back(disc);
        run.step_lengths.push_back(step);
        run.armijo_trials.push_back(trials);
        run.wall_seconds.push_back(seconds);
        if (config.store_iterates) run.iterates.push_back(p);
        const std::size_t k = run.discrepancy.size();
        if (truth_error) {
            const double err = truth_error(p);
            run.truth_errors.push_back(err);
            if (!run.best_index || err < run.truth_errors[*run.best_index - 1]) {
                run.best_index = k;
                run.best_iterate = p;
            }
        }
        if (threshold > 0.0 && !run.dp_index && disc <= threshold) {
            run.dp_index = k;
            run.dp_iterate = p;
        }
    };

    auto start = std::chrono::steady_clock::now();
    Parameter p = p1;
    auto eval = forward.evaluate(p);
    double disc = forward.discrepancy(eval.observation, y_delta);
    record(p, disc, 0.0, 0, seconds_since(start));

    run.status = RunStatus::max_iterations;
    for (int k = 2; k <= config.k_max; ++k) {
        if (disc == 0.0) {
            run.status = RunStatus::converged;
            break;
        }
        if (run.dp_index && !config.continue_after_dp) {
            run.status = RunStatus::discrepancy_principle;
            break;
        }
        start = std::chrono::steady_clock::now();
        const ObservationSeries residual = observation_difference(eval.observation, y_delta);
        Parameter grad;
        try {
            grad = compute_gradient(forward, eval, p, residual, smoother);
        } catch (const SolverError& e) {
            throw NumericalError("Landweber iteration " + std::to_string(k) + ": " + e.what());
        }

        bool accepted = false;
        for (int j = 1; j <= config.j_max; ++j) {
            const double step = std::pow(config.armijo_factor, j - 1) * run.omega;
            Parameter trial = axpy(p, -step, grad);
            ForwardOperator::Evaluation trial_eval;
            try {
                trial_eval = forward.evaluate(trial);
            } catch (const SolverError& e) {
                throw NumericalError("Landweber iteration " + std::to_string(k) + ", Armijo step " + std::to_string(j) +
                                     ": " + e.what());
            }
            const double trial_disc = forward.discrepancy(trial_eval.observation, y_delta);
            if ((disc - trial_disc) / disc > config.tol) {
                p = std::move(trial);
                eval = std::move(trial_eval);
                disc = trial_disc;
                record(p, disc, step, j, seconds_since(start));
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            run.status = RunStatus::stalled;
            break;
        }
    }
    if (run.status == RunStatus::max_iterations && disc == 0.0) run.status = RunStatus::converged;
    if (run.status == RunStatus::max_iterations && run.dp_index && !config.continue_after_dp &&
        *run.dp_index == run.iterations()) {
        run.status = RunStatus::discrepancy_principle;
    }
    run.current = std::move(p);
    return run;
}

Parameter bootstrap_initial_value(const ForwardOperator& forward, const ObservationSeries& y_delta, const Parameter& p1,
                                  const LandweberConfig& config, double delta) {
    if (!config.find_initial_value) return p1;
    LandweberConfig boot = config;
    boot.k_max = config.bootstrap_k_max;
    boot.store_iterates = false;
    boot.continue_after_dp = false;
    boot.omega = 0.0;
    spdlog::info("bootstrap: unsmoothed Landweber run, k_max = {}", boot.k_max);
    const ReconstructionRun run = landweber_run(forward, y_delta, p1, boot, delta);
    spdlog::info("bootstrap: discrepancy {:.6g} -> {:.6g} after {} iterations ({})", run.discrepancy.front(),
                 run.discrepancy.back(), run.iterations(), status_name(run.status));
    Parameter out = run.current;
    if (auto* axis = std::get_if<EasyAxis>(&out)) align_axis_signs(*axis);
    return out;
}

void align_axis_signs(EasyAxis& axis) {
    for (Eigen::Index n = 1; n < axis.axis.rows(); ++n) {
        if (axis.axis.row(n).dot(axis.axis.row(n - 1)) < 0.0) axis.axis.row(n) *= -1.0;
    }
}

}  // namespace fokkerid
