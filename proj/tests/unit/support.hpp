#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "fokkerid/geometry.hpp"
#include "fokkerid/harness.hpp"
#include "fokkerid/inversion.hpp"
#include "fokkerid/model.hpp"

namespace fokkerid::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    }
    return m;
}

inline double max_abs(const Eigen::SparseMatrix<double>& m) {
    double worst = 0.0;
    for (int k = 0; k < m.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    }
    return worst;
}

inline std::shared_ptr<const SphereMesh> shared_mesh(int level) {
    return std::make_shared<const SphereMesh>(build_icosphere(level));
}

// A preset scenario shrunk to a short horizon and few steps for fast tests.
inline Scenario small_scenario(int parameter_case, std::size_t steps = 30) {
    Scenario s = preset(parameter_case);
    s.fine_level = 2;
    s.coarse_level = 1;
    s.steps = steps;
    return s;
}

// Random parameter of the given case, scaled to typical magnitudes.
inline Parameter random_parameter(ParameterCase c, const TimeGrid& grid, std::size_t cells, std::mt19937_64& rng) {
    const auto samples = static_cast<Eigen::Index>(grid.samples());
    switch (c) {
        case ParameterCase::field_waveform: return FieldWaveform{random_matrix(samples, 3, rng, 5e-3)};
        case ParameterCase::easy_axis: return EasyAxis{random_matrix(samples, 3, rng, 1.0)};
        case ParameterCase::anisotropy_landscape:
            return AnisotropyLandscape{{random_matrix(static_cast<Eigen::Index>(cells), 3, rng, 1.0)}};
    }
    return FieldWaveform{};
}

// Fresh scratch directory below the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("fokkerid-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fokkerid::testing
