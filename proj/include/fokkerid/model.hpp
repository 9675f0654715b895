#pragma once

#include <filesystem>
#include <numbers>
#include <variant>
#include <vector>

#include "fokkerid/geometry.hpp"
#include "fokkerid/time_grid.hpp"

namespace fokkerid {

// One row per time sample t_0..t_N.
using TimeSeries3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// SI throughout. Fields are given as mu0*H in tesla.
struct PhysicalConstants {
    double gamma = 1.75e11;                            // gyromagnetic ratio, rad s^-1 T^-1
    double alpha_hat = 0.1;                            // damping factor
    double mu0 = 4.0e-7 * std::numbers::pi;            // vacuum permeability, T m A^-1
    double k_anis = 1000.0;                            // uniaxial anisotropy constant, J m^-3
    double m_s = 474000.0;                             // saturation magnetization, A m^-1
    double lambda = 1.0e8;                             // diffusion constant, s^-1

    double gamma_tilde() const { return gamma / (1.0 + alpha_hat * alpha_hat); }
    // Coefficient of (m x H) x m with H in A/m.
    double alpha1() const { return gamma_tilde() * alpha_hat * mu0; }
    // Coefficient of (m x phi) x m, s^-1.
    double alpha2() const { return 2.0 * gamma_tilde() * alpha_hat * k_anis / m_s; }
    // alpha1 expressed per tesla of mu0*H.
    double field_coupling() const { return alpha1() / mu0; }

    void validate() const;
};

enum class ParameterCase { field_waveform = 1, anisotropy_landscape = 2, easy_axis = 3 };

struct FieldWaveform {
    TimeSeries3 field;  // mu0 * H_app(t_n), tesla
};

// phi(m, t) per cell. One slice means time independent, otherwise one slice
// per time sample.
struct AnisotropyLandscape {
    std::vector<CellVectors> phi;

    bool is_static() const noexcept { return phi.size() == 1; }
};

struct EasyAxis {
    TimeSeries3 axis;  // n(t_n); not constrained to unit length
};

using Parameter = std::variant<FieldWaveform, AnisotropyLandscape, EasyAxis>;

ParameterCase case_of(const Parameter& p);
const char* case_name(ParameterCase c);

// Vector-space operations on parameters of matching case and shape.
Parameter zero_like(const Parameter& p);
Parameter scaled(const Parameter& p, double factor);
// p + factor * h
Parameter axpy(const Parameter& p, double factor, const Parameter& h);
void check_same_shape(const Parameter& a, const Parameter& b);

// Per-time-step, per-cell drift vectors, steps t_0..t_N.
struct DriftField {
    std::vector<CellVectors> steps;
};

// Everything the parameter-to-drift map needs besides the parameter.
struct DriftModel {
    PhysicalConstants constants;
    CellVectors centers;          // m at each circumcenter
    CellField areas;
    TimeGrid grid;
    TimeSeries3 background_field; // mu0*H_app for the anisotropy and easy-axis cases

    static DriftModel from_mesh(const SphereMesh& mesh, const PhysicalConstants& constants,
                                const TimeGrid& grid, TimeSeries3 background_field);
    std::size_t num_cells() const { return static_cast<std::size_t>(centers.rows()); }
};

// L2 inner products: trapezoid in time, cell areas in space.
double parameter_inner(const Parameter& a, const Parameter& b, const DriftModel& model);
double parameter_norm(const Parameter& a, const DriftModel& model);
double drift_inner(const DriftField& a, const DriftField& b, const DriftModel& model);

// b(m,t) = alpha1 (m x H) x m + alpha2 (m x phi(m,t)) x m.
DriftField assemble_drift(const Parameter& p, const DriftModel& model);
// Gamma'(p) h.
DriftField gamma_derivative_apply(const Parameter& p, const Parameter& direction, const DriftModel& model);
// Gamma'(p)^* w with respect to parameter_inner and drift_inner.
Parameter gamma_adjoint_apply(const Parameter& p, const DriftField& w, const DriftModel& model);

// (m x v) x m = v - (m.v) m, row by row.
CellVectors tangential_projection(const CellVectors& centers, const Eigen::RowVector3d& v);
CellVectors tangential_projection(const CellVectors& centers, const CellVectors& v);

// CSV serialization. Time series: t,x,y,z. Static landscapes: cell,x,y,z.
// Time-indexed landscapes: step,cell,x,y,z.
void save_parameter(const std::filesystem::path& path, const Parameter& p, const TimeGrid& grid);
Parameter load_parameter(const std::filesystem::path& path, ParameterCase expected, const TimeGrid& grid,
                         std::size_t num_cells);

}  // namespace fokkerid
