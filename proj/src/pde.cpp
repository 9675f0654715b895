#include "fokkerid/pde.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>
#include <spdlog/spdlog.h>

#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

// Owns the fixed sparsity pattern of M - dt S + dt D(b) and refactorizes it
// per time step. Not shared between solves.
class ImplicitStepper {
public:
    ImplicitStepper(const DiscreteOperators& ops, double dt) : ops_(ops), dt_(dt) {
        const auto n = static_cast<Eigen::Index>(ops.num_cells());
        Eigen::SparseMatrix<double> mass(n, n);
        mass.reserve(Eigen::VectorXi::Constant(n, 1));
        for (Eigen::Index i = 0; i < n; ++i) mass.insert(i, i) = ops.mass(i);
        base_ = mass - dt * ops.stiffness;
        base_.makeCompressed();
        // Explicit zeros keep the drift pattern inside base_ even where S vanishes.
        for (const auto& f : ops.flux) {
            for (auto [r, c] : {std::pair{f.left, f.left}, std::pair{f.left, f.right}, std::pair{f.right, f.left},
                                std::pair{f.right, f.right}}) {
                (void)base_.coeffRef(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
            }
        }
        base_.makeCompressed();
        slots_.reserve(ops.flux.size());
        for (const auto& f : ops.flux) {
            const auto l = static_cast<Eigen::Index>(f.left);
            const auto r = static_cast<Eigen::Index>(f.right);
            slots_.push_back({slot(l, l), slot(l, r), slot(r, l), slot(r, r)});
        }
        work_ = base_;
        lu_.analyzePattern(work_);
    }

    // Factorizes A_n (transpose = false) or A_n^T for the drift of one step.
    void factorize(const CellVectors& drift, bool transpose, std::size_t step) {
        std::copy(base_.valuePtr(), base_.valuePtr() + base_.nonZeros(), work_.valuePtr());
        double* values = work_.valuePtr();
        for (std::size_t e = 0; e < ops_.flux.size(); ++e) {
            const auto& f = ops_.flux[e];
            const auto l = static_cast<Eigen::Index>(f.left);
            const auto r = static_cast<Eigen::Index>(f.right);
            const double c = dt_ * 0.25 * (drift.row(l) + drift.row(r)).dot(f.scaled_conormal.transpose());
            const auto& s = slots_[e];
            values[s[0]] += c;
            values[s[3]] -= c;
            if (transpose) {
                values[s[2]] += c;
                values[s[1]] -= c;
            } else {
                values[s[1]] += c;
                values[s[2]] -= c;
            }
        }
        lu_.factorize(work_);
        if (lu_.info() != Eigen::Success) throw SolverError("sparse LU factorization failed: " + lu_.lastErrorMessage(), step);
    }

    CellField solve(const CellField& rhs, std::size_t step) {
        CellField x = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success || !x.allFinite()) throw SolverError("sparse LU solve failed", step);
        return x;
    }

private:
    Eigen::Index slot(Eigen::Index row, Eigen::Index col) const {
        // Column-major compressed storage: search the column's inner indices.
        const auto* outer = base_.outerIndexPtr();
        const auto* inner = base_.innerIndexPtr();
        for (auto k = outer[col]; k < outer[col + 1]; ++k) {
            if (inner[k] == row) return k;
        }
        throw NumericalError("missing sparsity slot");
    }

    const DiscreteOperators& ops_;
    double dt_;
    Eigen::SparseMatrix<double> base_;
    Eigen::SparseMatrix<double> work_;
    std::vector<std::array<Eigen::Index, 4>> slots_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
};

void check_drift_shape(const DriftField& drift, const DiscreteOperators& ops, const TimeGrid& grid) {
    if (drift.steps.size() != grid.samples()) throw ShapeError("drift field does not match the time grid");
    for (const auto& s : drift.steps) {
        if (static_cast<std::size_t>(s.rows()) != ops.num_cells()) throw ShapeError("drift field does not match the mesh");
    }
}

}  // namespace

StateField solve_forward(const DriftField& drift, const CellField& u0, const DiscreteOperators& ops,
                         const TimeGrid& grid) {
    check_drift_shape(drift, ops, grid);
    if (static_cast<std::size_t>(u0.size()) != ops.num_cells()) throw ShapeError("initial density does not match the mesh");
    if (u0.minCoeff() < 0.0) throw ConfigError("initial density must be nonnegative");
    const double mass0 = ops.mass.dot(u0);
    if (std::abs(mass0 - 1.0) > 1e-8) throw ConfigError("initial density must integrate to 1");

    StateField state;
    state.grid = grid;
    state.values.reserve(grid.samples());
    state.values.push_back(u0);
    ImplicitStepper stepper(ops, grid.dt());
    for (std::size_t n = 1; n < grid.samples(); ++n) {
        stepper.factorize(drift.steps[n], false, n);
        const CellField rhs = ops.mass.cwiseProduct(state.values.back());
        state.values.push_back(stepper.solve(rhs, n));
        const CellField& u = state.values.back();
        if (u.minCoeff() < -1e-10 * u.maxCoeff()) ++state.nonnegativity_warnings;
    }
    if (state.nonnegativity_warnings > 0) {
        spdlog::warn("forward solve: {} step(s) with negative density beyond -1e-10*max", state.nonnegativity_warnings);
    }
    return state;
}

AdjointField solve_adjoint(const DriftField& drift, const std::vector<CellField>& source, const DiscreteOperators& ops,
                           const TimeGrid& grid) {
    check_drift_shape(drift, ops, grid);
    if (source.size() != grid.samples()) throw ShapeError("adjoint source does not match the time grid");
    const auto n_cells = static_cast<Eigen::Index>(ops.num_cells());
    for (const auto& s : source) {
        if (s.size() != n_cells) throw ShapeError("adjoint source does not match the mesh");
    }
    AdjointField adjoint;
    adjoint.grid = grid;
    adjoint.values.assign(grid.samples(), CellField::Zero(n_cells));
    ImplicitStepper stepper(ops, grid.dt());
    for (std::size_t n = grid.steps(); n >= 1; --n) {
        stepper.factorize(drift.steps[n], true, n);
        const CellField rhs = ops.mass.cwiseProduct(adjoint.values[n] + grid.observation_weight(n) * source[n]);
        adjoint.values[n - 1] = stepper.solve(rhs, n);
    }
    return adjoint;
}

StateField solve_sensitivity(const DriftField& drift, const DriftField& increment, const StateField& state,
                             const DiscreteOperators& ops, const TimeGrid& grid) {
    check_drift_shape(drift, ops, grid);
    check_drift_shape(increment, ops, grid);
    if (state.samples() != grid.samples()) throw ShapeError("state does not match the time grid");
    StateField v;
    v.grid = grid;
    v.values.reserve(grid.samples());
    v.values.push_back(CellField::Zero(static_cast<Eigen::Index>(ops.num_cells())));
    ImplicitStepper stepper(ops, grid.dt());
    for (std::size_t n = 1; n < grid.samples(); ++n) {
        stepper.factorize(drift.steps[n], false, n);
        const CellField rhs = ops.mass.cwiseProduct(v.values.back()) -
                              grid.dt() * ops.drift_divergence_apply(increment.steps[n], state.values[n]);
        v.values.push_back(stepper.solve(rhs, n));
    }
    return v;
}

DriftField state_adjoint_product(const StateField& state, const AdjointField& adjoint, const DiscreteOperators& ops) {
    const TimeGrid& grid = state.grid;
    if (adjoint.values.size() != state.samples()) throw ShapeError("adjoint and state time grids differ");
    DriftField w;
    const auto n_cells = static_cast<Eigen::Index>(ops.num_cells());
    w.steps.reserve(grid.samples());
    w.steps.push_back(CellVectors::Zero(n_cells, 3));
    const Eigen::VectorXd inv_area = ops.mass.cwiseInverse();
    for (std::size_t n = 1; n < grid.samples(); ++n) {
        CellVectors g = ops.drift_cogradient(state.values[n], adjoint.values[n - 1]);
        const double scale = -grid.dt() / grid.trapezoid_weight(n);
        g.array().colwise() *= (scale * inv_area).array();
        w.steps.push_back(std::move(g));
    }
    return w;
}

double max_relative_mass_deviation(const StateField& state, const CellField& areas) {
    const double mass0 = areas.dot(state.values.front());
    double worst = 0.0;
    for (const auto& u : state.values) worst = std::max(worst, std::abs(areas.dot(u) - mass0) / std::abs(mass0));
    return worst;
}

}  // namespace fokkerid
