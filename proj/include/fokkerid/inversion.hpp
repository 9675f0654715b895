#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "fokkerid/geometry.hpp"
#include "fokkerid/model.hpp"
#include "fokkerid/observation.hpp"
#include "fokkerid/pde.hpp"

namespace fokkerid {

// ---------------------------------------------------------------------------
// Riesz smoothers

// Solves v - eps^2 v'' = f with v'(0) = v'(T) = 0, column by column.
// Second-order differences with ghost-point (one-sided) boundary closure;
// self-adjoint in the trapezoid-weighted L2(0,T) inner product.
class TimeSmoother {
public:
    TimeSmoother(const TimeGrid& grid, double epsilon);

    Eigen::MatrixXd apply(const Eigen::MatrixXd& f) const;
    // <f, (I - eps^2 d^2/dt^2) f> per column, summed.
    double energy(const Eigen::MatrixXd& f) const;
    double epsilon() const noexcept { return epsilon_; }
    const Eigen::SparseMatrix<double>& system() const noexcept { return system_; }

private:
    double epsilon_;
    Eigen::VectorXd weights_;
    Eigen::SparseMatrix<double> system_;  // W + eps^2 K
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

// Solves u - eps^2 Lap u + eps^4 Lap^2 u = v on the sphere, column by column,
// with Lap the discrete Laplace-Beltrami operator. Self-adjoint in the
// area-weighted inner product.
class SpaceSmoother {
public:
    SpaceSmoother(const DiscreteOperators& ops, double epsilon);

    Eigen::MatrixXd apply(const Eigen::MatrixXd& v) const;
    double energy(const Eigen::MatrixXd& v) const;
    double epsilon() const noexcept { return epsilon_; }
    const Eigen::SparseMatrix<double>& system() const noexcept { return system_; }

private:
    double epsilon_;
    Eigen::VectorXd mass_;
    Eigen::SparseMatrix<double> system_;  // M - eps^2 L + eps^4 L M^-1 L, L = S / lambda
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

TimeSeries3 riesz_smooth_time(const TimeSeries3& f, const TimeGrid& grid, double epsilon_time);
CellField riesz_smooth_space(const CellField& f, const DiscreteOperators& ops, double epsilon_space);

// ---------------------------------------------------------------------------
// Forward operator F = G o S o Gamma

class ForwardOperator {
public:
    struct Evaluation {
        DriftField drift;
        StateField state;
        ObservationSeries observation;
    };

    // An empty u0 selects the uniform density 1/(4 pi).
    ForwardOperator(std::shared_ptr<const SphereMesh> mesh, const PhysicalConstants& constants, const TimeGrid& grid,
                    TimeSeries3 background_field, ObservationMode mode, CellField u0 = {},
                    double observation_gain = 1.0);

    Evaluation evaluate(const Parameter& p) const;
    // F'(p) h via the linearized forward solve.
    ObservationSeries derivative_apply(const Evaluation& at, const Parameter& p, const Parameter& h) const;
    // Gamma'(p)^* applied to the adjoint-state product for residual z; the
    // L2 gradient representative, before any Riesz smoothing.
    Parameter adjoint_apply(const Evaluation& at, const Parameter& p, const ObservationSeries& z) const;
    // The drift-level counterpart (u grad psi), before Gamma'^*.
    DriftField drift_adjoint_apply(const Evaluation& at, const ObservationSeries& z) const;

    double observation_norm(const ObservationSeries& y) const;
    double discrepancy(const ObservationSeries& y, const ObservationSeries& y_delta) const;

    const SphereMesh& mesh() const { return *mesh_; }
    std::shared_ptr<const SphereMesh> mesh_ptr() const { return mesh_; }
    const DiscreteOperators& operators() const { return ops_; }
    const DriftModel& drift_model() const { return drift_model_; }
    const TimeGrid& grid() const { return drift_model_.grid; }
    ObservationMode mode() const { return mode_; }
    const CellField& initial_density() const { return u0_; }
    double observation_gain() const { return gain_; }

private:
    std::shared_ptr<const SphereMesh> mesh_;
    DiscreteOperators ops_;
    DriftModel drift_model_;
    ObservationMode mode_;
    CellField u0_;
    double gain_;
};

// Riesz isomorphism matching the parameter case: time smoothing for field
// waveforms and easy axes, spatial smoothing for static landscapes, both
// for time-indexed landscapes.
class RieszMap {
public:
    RieszMap(const ForwardOperator& forward, double epsilon_time, double epsilon_space);

    Parameter apply(const Parameter& g) const;
    // <h, E h>, the squared H^1_eps-type norm whose Riesz map is apply().
    double energy(const Parameter& h) const;

private:
    TimeSmoother time_;
    SpaceSmoother space_;
};

// ---------------------------------------------------------------------------
// Landweber iteration

struct LandweberConfig {
    double omega = 0.0;            // default step length; <= 0 estimates 0.9/||F'(p1)||^2
    double step_safety = 0.9;
    double armijo_factor = 0.7;
    int j_max = 20;
    double tol = 1e-4;
    int k_max = 500;
    double tau = 1.1;
    double epsilon_time = -1.0;    // < 0: T/10
    double epsilon_space = -1.0;   // < 0: mesh diameter
    bool find_initial_value = false;
    bool store_iterates = true;
    bool continue_after_dp = true;
    int bootstrap_k_max = 20;
    int power_iterations = 30;
    unsigned power_seed = 1;

    void validate() const;
    double resolved_epsilon_time(const TimeGrid& grid) const;
    double resolved_epsilon_space(const SphereMesh& mesh) const;
};

enum class RunStatus { converged, discrepancy_principle, max_iterations, stalled };
const char* status_name(RunStatus s);

struct ReconstructionRun {
    LandweberConfig config;
    double omega = 0.0;
    double delta = 0.0;
    RunStatus status = RunStatus::max_iterations;

    // Index k - 1 holds iteration k (k = 1 is the initial guess).
    std::vector<Parameter> iterates;   // only when store_iterates
    std::vector<double> discrepancy;
    std::vector<double> step_lengths;  // accepted alpha^(j-1) omega; 0 for k = 1
    std::vector<int> armijo_trials;
    std::vector<double> wall_seconds;
    std::vector<double> truth_errors;  // when a ground-truth error function is supplied

    Parameter current;
    std::optional<std::size_t> dp_index;  // 1-based
    std::optional<Parameter> dp_iterate;
    std::optional<std::size_t> best_index;
    std::optional<Parameter> best_iterate;

    std::size_t iterations() const { return discrepancy.size(); }
};

// Relative error of an iterate against ground truth; used for best-iterate bookkeeping.
using TruthError = std::function<double(const Parameter&)>;

// F'(p)^* residual: adjoint solve, Gamma'^*, then Riesz smoothing unless
// config.find_initial_value is set. `residual` is F(p) - y_delta.
Parameter compute_gradient(const ForwardOperator& forward, const ForwardOperator::Evaluation& at, const Parameter& p,
                           const ObservationSeries& residual, const RieszMap* riesz);

struct StepEstimate {
    double norm_squared = 0.0;  // estimate of ||F'(p)||^2
    double omega = 0.0;         // safety / norm_squared
    int iterations = 0;
    bool converged = false;
};

// Power iteration on F'(p)^* F'(p) using the sensitivity and adjoint solves.
// Norms on the parameter side come from `riesz` when given (plain L2 otherwise).
StepEstimate estimate_step_length(const ForwardOperator& forward, const Parameter& p_tilde, const RieszMap* riesz,
                                  int trials, unsigned seed, double safety = 0.9);

// Nonlinear Landweber with Armijo backtracking. delta <= 0 disables the
// discrepancy principle.
ReconstructionRun landweber_run(const ForwardOperator& forward, const ObservationSeries& y_delta, const Parameter& p1,
                                const LandweberConfig& config, double delta, const TruthError& truth_error = {});

// Unsmoothed short run used to find an initial value; pass-through unless
// config.find_initial_value. Easy-axis results are made sign-continuous.
Parameter bootstrap_initial_value(const ForwardOperator& forward, const ObservationSeries& y_delta, const Parameter& p1,
                                  const LandweberConfig& config, double delta);

// Flips samples so consecutive axes point into the same half-space. The
// drift depends on n only through n n^T, so F is unchanged.
void align_axis_signs(EasyAxis& axis);

}  // namespace fokkerid
