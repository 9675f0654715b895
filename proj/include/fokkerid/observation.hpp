#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fokkerid/geometry.hpp"
#include "fokkerid/pde.hpp"
#include "fokkerid/time_grid.hpp"

namespace fokkerid {

enum class ObservationMode {
    expectation,  // mean magnetic moment, integral of m u(m,t) dm
    identity,     // the full density
};

const char* mode_name(ObservationMode mode);
ObservationMode parse_mode(const std::string& name);

// One row per time sample; 3 columns (expectation) or one per cell (identity).
struct ObservationSeries {
    ObservationMode mode = ObservationMode::expectation;
    Eigen::MatrixXd values;
    TimeGrid grid;

    std::size_t samples() const { return static_cast<std::size_t>(values.rows()); }
};

ObservationSeries observe(const StateField& state, ObservationMode mode, const SphereMesh& mesh);

// (G^* z)(t_n) per cell: <m, z(t_n)> at circumcenters, or z itself.
std::vector<CellField> observe_adjoint(const ObservationSeries& z, const SphereMesh& mesh);

// Y inner product: right-endpoint weights in time, cell areas for identity mode.
double observation_inner(const ObservationSeries& a, const ObservationSeries& b, const SphereMesh& mesh);
double observation_norm(const ObservationSeries& a, const SphereMesh& mesh);
// a - b
ObservationSeries observation_difference(const ObservationSeries& a, const ObservationSeries& b);

// Header t,y1,y2,y3 (expectation) or t,u0,u1,... (identity).
void save_observation(const std::filesystem::path& path, const ObservationSeries& series);
ObservationSeries load_observation(const std::filesystem::path& path);

}  // namespace fokkerid
