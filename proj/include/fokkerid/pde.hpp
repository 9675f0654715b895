#pragma once

#include <vector>

#include "fokkerid/geometry.hpp"
#include "fokkerid/model.hpp"
#include "fokkerid/time_grid.hpp"

namespace fokkerid {

// Cell densities u(t_n), n = 0..N.
struct StateField {
    std::vector<CellField> values;
    TimeGrid grid;
    std::size_t nonnegativity_warnings = 0;

    const CellField& at(std::size_t n) const { return values.at(n); }
    std::size_t samples() const { return values.size(); }
};

// Backward solution psi(t_n), n = 0..N, with psi(t_N) = 0.
struct AdjointField {
    std::vector<CellField> values;
    TimeGrid grid;
};

// Implicit Euler for the Fokker-Planck equation
//     u' = div(lambda grad u - b u),
// i.e. (M - dt S + dt D(b_n)) u_n = M u_{n-1}. The drift transports
// probability along b, so moments relax towards the applied field.
// Throws SolverError on a failed factorization.
StateField solve_forward(const DriftField& drift, const CellField& u0, const DiscreteOperators& ops,
                         const TimeGrid& grid);

// Discrete adjoint of solve_forward for observation functionals
//     L(u) = sum_n w_n <u_n, g_n>_M,   w_n = grid.observation_weight(n),
// i.e. A_n^T psi_{n-1} = M psi_n + w_n M g_n with psi_N = 0. In the
// continuum limit this is -psi' = lambda Laplace(psi) + b . grad(psi) + g.
// `source` holds g_n = (G^* z)(t_n) for n = 0..N.
AdjointField solve_adjoint(const DriftField& drift, const std::vector<CellField>& source, const DiscreteOperators& ops,
                           const TimeGrid& grid);

// Linearized forward solve: v' = div(lambda grad v - b v) - div(u h), v(0) = 0.
StateField solve_sensitivity(const DriftField& drift, const DriftField& increment, const StateField& state,
                             const DiscreteOperators& ops, const TimeGrid& grid);

// Drift-space representative of the adjoint state: the field w with
//     <G S'(b) h, z>_Y = <h, w>   (trapezoid-in-time, area-weighted),
// which is the discrete counterpart of u grad(psi).
DriftField state_adjoint_product(const StateField& state, const AdjointField& adjoint, const DiscreteOperators& ops);

double max_relative_mass_deviation(const StateField& state, const CellField& areas);

}  // namespace fokkerid
