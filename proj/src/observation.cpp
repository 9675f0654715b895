#include "fokkerid/observation.hpp"

#include <cmath>

#include "fokkerid/csv.hpp"
#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

void check_compatible(const ObservationSeries& a, const ObservationSeries& b) {
    if (a.mode != b.mode) throw ShapeError("observation modes differ");
    if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
        throw ShapeError("observation series shapes differ");
    }
}

}  // namespace

const char* mode_name(ObservationMode mode) {
    return mode == ObservationMode::expectation ? "expectation" : "identity";
}

ObservationMode parse_mode(const std::string& name) {
    if (name == "expectation") return ObservationMode::expectation;
    if (name == "identity") return ObservationMode::identity;
    throw ConfigError("unknown observation mode '" + name + "'");
}

ObservationSeries observe(const StateField& state, ObservationMode mode, const SphereMesh& mesh) {
    ObservationSeries y;
    y.mode = mode;
    y.grid = state.grid;
    const auto samples = static_cast<Eigen::Index>(state.samples());
    const auto cells = static_cast<Eigen::Index>(mesh.num_cells());
    if (mode == ObservationMode::expectation) {
        y.values.resize(samples, 3);
        for (Eigen::Index n = 0; n < samples; ++n) {
            const CellField& u = state.values[static_cast<std::size_t>(n)];
            if (u.size() != cells) throw ShapeError("state does not match the mesh");
            y.values.row(n) = mesh.cell_areas.cwiseProduct(u).transpose() * mesh.circumcenters;
        }
    } else {
        y.values.resize(samples, cells);
        for (Eigen::Index n = 0; n < samples; ++n) {
            const CellField& u = state.values[static_cast<std::size_t>(n)];
            if (u.size() != cells) throw ShapeError("state does not match the mesh");
            y.values.row(n) = u.transpose();
        }
    }
    return y;
}

std::vector<CellField> observe_adjoint(const ObservationSeries& z, const SphereMesh& mesh) {
    const auto cells = static_cast<Eigen::Index>(mesh.num_cells());
    std::vector<CellField> out;
    out.reserve(z.samples());
    if (z.mode == ObservationMode::expectation) {
        if (z.values.cols() != 3) throw ShapeError("expectation series must have 3 components");
        for (Eigen::Index n = 0; n < z.values.rows(); ++n) out.push_back(mesh.circumcenters * z.values.row(n).transpose());
    } else {
        if (z.values.cols() != cells) throw ShapeError("identity series does not match the mesh");
        for (Eigen::Index n = 0; n < z.values.rows(); ++n) out.push_back(z.values.row(n).transpose());
    }
    return out;
}

double observation_inner(const ObservationSeries& a, const ObservationSeries& b, const SphereMesh& mesh) {
    check_compatible(a, b);
    double s = 0.0;
    for (Eigen::Index n = 0; n < a.values.rows(); ++n) {
        const double w = a.grid.observation_weight(static_cast<std::size_t>(n));
        if (w == 0.0) continue;
        if (a.mode == ObservationMode::expectation) {
            s += w * a.values.row(n).dot(b.values.row(n));
        } else {
            s += w * a.values.row(n).cwiseProduct(b.values.row(n)).dot(mesh.cell_areas.transpose());
        }
    }
    return s;
}

double observation_norm(const ObservationSeries& a, const SphereMesh& mesh) {
    return std::sqrt(std::max(0.0, observation_inner(a, a, mesh)));
}

ObservationSeries observation_difference(const ObservationSeries& a, const ObservationSeries& b) {
    check_compatible(a, b);
    ObservationSeries d = a;
    d.values -= b.values;
    return d;
}

void save_observation(const std::filesystem::path& path, const ObservationSeries& series) {
    CsvTable table;
    table.header.push_back("t");
    if (series.mode == ObservationMode::expectation) {
        table.header.insert(table.header.end(), {"y1", "y2", "y3"});
    } else {
        for (Eigen::Index c = 0; c < series.values.cols(); ++c) table.header.push_back("u" + std::to_string(c));
    }
    for (Eigen::Index n = 0; n < series.values.rows(); ++n) {
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(series.values.cols()) + 1);
        row.push_back(series.grid.time(static_cast<std::size_t>(n)));
        for (Eigen::Index c = 0; c < series.values.cols(); ++c) row.push_back(series.values(n, c));
        table.rows.push_back(std::move(row));
    }
    write_csv(path, table);
}

ObservationSeries load_observation(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    if (table.header.empty() || table.header.front() != "t") throw IoError("observation file must start with column t");
    if (table.rows.size() < 2) throw IoError("observation file needs at least two samples");
    ObservationSeries y;
    y.mode = (table.header.size() == 4 && table.header[1] == "y1") ? ObservationMode::expectation : ObservationMode::identity;
    const auto samples = static_cast<Eigen::Index>(table.rows.size());
    const auto cols = static_cast<Eigen::Index>(table.header.size() - 1);
    y.values.resize(samples, cols);
    for (Eigen::Index n = 0; n < samples; ++n) {
        for (Eigen::Index c = 0; c < cols; ++c) y.values(n, c) = table.rows[static_cast<std::size_t>(n)][static_cast<std::size_t>(c + 1)];
    }
    const double horizon = table.rows.back()[0];
    y.grid = TimeGrid(horizon, table.rows.size() - 1);
    // The file's time column must be the uniform grid.
    for (std::size_t n = 0; n < table.rows.size(); ++n) {
        if (std::abs(table.rows[n][0] - y.grid.time(n)) > 1e-9 * horizon) {
            throw ShapeError("observation file time column is not a uniform grid: " + path.string());
        }
    }
    return y;
}

}  // namespace fokkerid
