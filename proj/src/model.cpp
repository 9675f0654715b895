#include "fokkerid/model.hpp"

#include <cmath>
#include <string>

#include "fokkerid/csv.hpp"
#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void check_series(const TimeSeries3& s, const TimeGrid& grid, const char* what) {
    if (static_cast<std::size_t>(s.rows()) != grid.samples()) {
        throw ShapeError(std::string(what) + " has " + std::to_string(s.rows()) + " samples, time grid has " +
                         std::to_string(grid.samples()));
    }
}

void check_landscape(const AnisotropyLandscape& a, const DriftModel& model) {
    if (a.phi.size() != 1 && a.phi.size() != model.grid.samples()) {
        throw ShapeError("anisotropy landscape must be static or have one slice per time sample");
    }
    for (const auto& slice : a.phi) {
        if (static_cast<std::size_t>(slice.rows()) != model.num_cells()) {
            throw ShapeError("anisotropy landscape does not match the mesh");
        }
    }
}

const CellVectors& landscape_slice(const AnisotropyLandscape& a, std::size_t n) {
    return a.is_static() ? a.phi.front() : a.phi[n];
}

void check_parameter(const Parameter& p, const DriftModel& model) {
    std::visit(Overloaded{
                   [&](const FieldWaveform& f) { check_series(f.field, model.grid, "field waveform"); },
                   [&](const AnisotropyLandscape& a) { check_landscape(a, model); },
                   [&](const EasyAxis& e) { check_series(e.axis, model.grid, "easy axis trajectory"); },
               },
               p);
}

void check_background(const DriftModel& model) {
    check_series(model.background_field, model.grid, "background field");
}

void check_drift(const DriftField& w, const DriftModel& model) {
    if (w.steps.size() != model.grid.samples()) throw ShapeError("drift field does not match the time grid");
    for (const auto& s : w.steps) {
        if (static_cast<std::size_t>(s.rows()) != model.num_cells()) {
            throw ShapeError("drift field does not match the mesh");
        }
    }
}

// Row-wise (c_i . n) n^T.
CellVectors uniaxial(const CellVectors& centers, const Eigen::RowVector3d& n) {
    return (centers * n.transpose()) * n;
}

}  // namespace

void PhysicalConstants::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (!(alpha_hat > 0.0)) throw ConfigError("alpha_hat must be positive");
    if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
    if (!(mu0 > 0.0)) throw ConfigError("mu0 must be positive");
    if (!(m_s > 0.0)) throw ConfigError("saturation magnetization must be positive");
    if (!(k_anis >= 0.0)) throw ConfigError("anisotropy constant must be non-negative");
}

ParameterCase case_of(const Parameter& p) {
    return static_cast<ParameterCase>(p.index() + 1);
}

const char* case_name(ParameterCase c) {
    switch (c) {
        case ParameterCase::field_waveform: return "field_waveform";
        case ParameterCase::anisotropy_landscape: return "anisotropy_landscape";
        case ParameterCase::easy_axis: return "easy_axis";
    }
    return "unknown";
}

void check_same_shape(const Parameter& a, const Parameter& b) {
    if (a.index() != b.index()) throw ShapeError("parameter case mismatch");
    std::visit(Overloaded{
                   [&](const FieldWaveform& x) {
                       if (x.field.rows() != std::get<FieldWaveform>(b).field.rows())
                           throw ShapeError("field waveform length mismatch");
                   },
                   [&](const AnisotropyLandscape& x) {
                       const auto& y = std::get<AnisotropyLandscape>(b);
                       if (x.phi.size() != y.phi.size()) throw ShapeError("landscape time axis mismatch");
                       for (std::size_t n = 0; n < x.phi.size(); ++n) {
                           if (x.phi[n].rows() != y.phi[n].rows()) throw ShapeError("landscape cell count mismatch");
                       }
                   },
                   [&](const EasyAxis& x) {
                       if (x.axis.rows() != std::get<EasyAxis>(b).axis.rows())
                           throw ShapeError("easy axis length mismatch");
                   },
               },
               a);
}

Parameter zero_like(const Parameter& p) { return scaled(p, 0.0); }

Parameter scaled(const Parameter& p, double factor) {
    return std::visit(Overloaded{
                          [&](const FieldWaveform& x) -> Parameter { return FieldWaveform{factor * x.field}; },
                          [&](const AnisotropyLandscape& x) -> Parameter {
                              AnisotropyLandscape out = x;
                              for (auto& s : out.phi) s *= factor;
                              return out;
                          },
                          [&](const EasyAxis& x) -> Parameter { return EasyAxis{factor * x.axis}; },
                      },
                      p);
}

Parameter axpy(const Parameter& p, double factor, const Parameter& h) {
    check_same_shape(p, h);
    return std::visit(Overloaded{
                          [&](const FieldWaveform& x) -> Parameter {
                              return FieldWaveform{x.field + factor * std::get<FieldWaveform>(h).field};
                          },
                          [&](const AnisotropyLandscape& x) -> Parameter {
                              AnisotropyLandscape out = x;
                              const auto& hh = std::get<AnisotropyLandscape>(h);
                              for (std::size_t n = 0; n < out.phi.size(); ++n) out.phi[n] += factor * hh.phi[n];
                              return out;
                          },
                          [&](const EasyAxis& x) -> Parameter {
                              return EasyAxis{x.axis + factor * std::get<EasyAxis>(h).axis};
                          },
                      },
                      p);
}

DriftModel DriftModel::from_mesh(const SphereMesh& mesh, const PhysicalConstants& constants, const TimeGrid& grid,
                                 TimeSeries3 background_field) {
    constants.validate();
    DriftModel m;
    m.constants = constants;
    m.centers = mesh.circumcenters;
    m.areas = mesh.cell_areas;
    m.grid = grid;
    m.background_field = std::move(background_field);
    if (m.background_field.rows() == 0) m.background_field = TimeSeries3::Zero(static_cast<Eigen::Index>(grid.samples()), 3);
    check_background(m);
    return m;
}

double parameter_inner(const Parameter& a, const Parameter& b, const DriftModel& model) {
    check_same_shape(a, b);
    const TimeGrid& grid = model.grid;
    auto series_inner = [&](const TimeSeries3& x, const TimeSeries3& y) {
        double s = 0.0;
        for (Eigen::Index n = 0; n < x.rows(); ++n) {
            s += grid.trapezoid_weight(static_cast<std::size_t>(n)) * x.row(n).dot(y.row(n));
        }
        return s;
    };
    return std::visit(Overloaded{
                          [&](const FieldWaveform& x) { return series_inner(x.field, std::get<FieldWaveform>(b).field); },
                          [&](const AnisotropyLandscape& x) {
                              const auto& y = std::get<AnisotropyLandscape>(b);
                              double s = 0.0;
                              for (std::size_t n = 0; n < x.phi.size(); ++n) {
                                  const double w = x.is_static() ? 1.0 : grid.trapezoid_weight(n);
                                  s += w * (x.phi[n].cwiseProduct(y.phi[n]).rowwise().sum()).dot(model.areas);
                              }
                              return s;
                          },
                          [&](const EasyAxis& x) { return series_inner(x.axis, std::get<EasyAxis>(b).axis); },
                      },
                      a);
}

double parameter_norm(const Parameter& a, const DriftModel& model) {
    return std::sqrt(std::max(0.0, parameter_inner(a, a, model)));
}

double drift_inner(const DriftField& a, const DriftField& b, const DriftModel& model) {
    check_drift(a, model);
    check_drift(b, model);
    double s = 0.0;
    for (std::size_t n = 0; n < a.steps.size(); ++n) {
        s += model.grid.trapezoid_weight(n) * (a.steps[n].cwiseProduct(b.steps[n]).rowwise().sum()).dot(model.areas);
    }
    return s;
}

CellVectors tangential_projection(const CellVectors& centers, const Eigen::RowVector3d& v) {
    const Eigen::VectorXd dots = centers * v.transpose();
    CellVectors out = v.replicate(centers.rows(), 1);
    out -= centers.cwiseProduct(dots.replicate(1, 3));
    return out;
}

CellVectors tangential_projection(const CellVectors& centers, const CellVectors& v) {
    const Eigen::VectorXd dots = centers.cwiseProduct(v).rowwise().sum();
    return v - centers.cwiseProduct(dots.replicate(1, 3));
}

DriftField assemble_drift(const Parameter& p, const DriftModel& model) {
    check_parameter(p, model);
    const std::size_t samples = model.grid.samples();
    const double c1 = model.constants.field_coupling();
    const double c2 = model.constants.alpha2();
    DriftField out;
    out.steps.reserve(samples);
    for (std::size_t n = 0; n < samples; ++n) {
        const auto row = static_cast<Eigen::Index>(n);
        CellVectors b = std::visit(
            Overloaded{
                [&](const FieldWaveform& x) -> CellVectors {
                    return c1 * tangential_projection(model.centers, Eigen::RowVector3d(x.field.row(row)));
                },
                [&](const AnisotropyLandscape& x) -> CellVectors {
                    return c1 * tangential_projection(model.centers, Eigen::RowVector3d(model.background_field.row(row))) +
                           c2 * tangential_projection(model.centers, landscape_slice(x, n));
                },
                [&](const EasyAxis& x) -> CellVectors {
                    const Eigen::RowVector3d axis = x.axis.row(row);
                    return c1 * tangential_projection(model.centers, Eigen::RowVector3d(model.background_field.row(row))) +
                           c2 * tangential_projection(model.centers, uniaxial(model.centers, axis));
                },
            },
            p);
        out.steps.push_back(std::move(b));
    }
    return out;
}

DriftField gamma_derivative_apply(const Parameter& p, const Parameter& direction, const DriftModel& model) {
    check_parameter(p, model);
    check_same_shape(p, direction);
    const std::size_t samples = model.grid.samples();
    const double c1 = model.constants.field_coupling();
    const double c2 = model.constants.alpha2();
    DriftField out;
    out.steps.reserve(samples);
    for (std::size_t n = 0; n < samples; ++n) {
        const auto row = static_cast<Eigen::Index>(n);
        CellVectors db = std::visit(
            Overloaded{
                [&](const FieldWaveform&) -> CellVectors {
                    const auto& h = std::get<FieldWaveform>(direction).field;
                    return c1 * tangential_projection(model.centers, Eigen::RowVector3d(h.row(row)));
                },
                [&](const AnisotropyLandscape&) -> CellVectors {
                    const auto& h = std::get<AnisotropyLandscape>(direction);
                    return c2 * tangential_projection(model.centers, landscape_slice(h, n));
                },
                [&](const EasyAxis& x) -> CellVectors {
                    // Product rule of (m.n) n: h -> (m.h) n + (m.n) h.
                    const Eigen::RowVector3d axis = x.axis.row(row);
                    const Eigen::RowVector3d h = std::get<EasyAxis>(direction).axis.row(row);
                    const CellVectors inner = (model.centers * h.transpose()) * axis + (model.centers * axis.transpose()) * h;
                    return c2 * tangential_projection(model.centers, inner);
                },
            },
            p);
        out.steps.push_back(std::move(db));
    }
    return out;
}

Parameter gamma_adjoint_apply(const Parameter& p, const DriftField& w, const DriftModel& model) {
    check_parameter(p, model);
    check_drift(w, model);
    const std::size_t samples = model.grid.samples();
    const double c1 = model.constants.field_coupling();
    const double c2 = model.constants.alpha2();
    const Eigen::RowVectorXd areas_t = model.areas.transpose();

    return std::visit(
        Overloaded{
            [&](const FieldWaveform&) -> Parameter {
                TimeSeries3 g(static_cast<Eigen::Index>(samples), 3);
                for (std::size_t n = 0; n < samples; ++n) {
                    g.row(static_cast<Eigen::Index>(n)) = c1 * areas_t * tangential_projection(model.centers, w.steps[n]);
                }
                return FieldWaveform{std::move(g)};
            },
            [&](const AnisotropyLandscape& x) -> Parameter {
                AnisotropyLandscape g;
                if (x.is_static()) {
                    CellVectors acc = CellVectors::Zero(static_cast<Eigen::Index>(model.num_cells()), 3);
                    for (std::size_t n = 0; n < samples; ++n) acc += model.grid.trapezoid_weight(n) * w.steps[n];
                    g.phi.push_back(c2 * tangential_projection(model.centers, acc));
                } else {
                    for (std::size_t n = 0; n < samples; ++n) {
                        g.phi.push_back(c2 * tangential_projection(model.centers, w.steps[n]));
                    }
                }
                return g;
            },
            [&](const EasyAxis& x) -> Parameter {
                TimeSeries3 g(static_cast<Eigen::Index>(samples), 3);
                for (std::size_t n = 0; n < samples; ++n) {
                    const Eigen::RowVector3d axis = x.axis.row(static_cast<Eigen::Index>(n));
                    const CellVectors pw = tangential_projection(model.centers, w.steps[n]);
                    const Eigen::VectorXd n_dot_pw = pw * axis.transpose();
                    const Eigen::VectorXd c_dot_n = model.centers * axis.transpose();
                    // sum_i A_i [ (n . P w_i) c_i + (c_i . n) P w_i ]
                    const Eigen::RowVector3d row =
                        model.areas.cwiseProduct(n_dot_pw).transpose() * model.centers +
                        model.areas.cwiseProduct(c_dot_n).transpose() * pw;
                    g.row(static_cast<Eigen::Index>(n)) = c2 * row;
                }
                return EasyAxis{std::move(g)};
            },
        },
        p);
}

void save_parameter(const std::filesystem::path& path, const Parameter& p, const TimeGrid& grid) {
    CsvTable table;
    std::visit(Overloaded{
                   [&](const FieldWaveform& x) {
                       table.header = {"t", "x", "y", "z"};
                       for (Eigen::Index n = 0; n < x.field.rows(); ++n) {
                           table.rows.push_back({grid.time(static_cast<std::size_t>(n)), x.field(n, 0), x.field(n, 1), x.field(n, 2)});
                       }
                   },
                   [&](const AnisotropyLandscape& x) {
                       if (x.is_static()) {
                           table.header = {"cell", "x", "y", "z"};
                       } else {
                           table.header = {"step", "cell", "x", "y", "z"};
                       }
                       for (std::size_t n = 0; n < x.phi.size(); ++n) {
                           const auto& s = x.phi[n];
                           for (Eigen::Index c = 0; c < s.rows(); ++c) {
                               if (x.is_static()) {
                                   table.rows.push_back({static_cast<double>(c), s(c, 0), s(c, 1), s(c, 2)});
                               } else {
                                   table.rows.push_back({static_cast<double>(n), static_cast<double>(c), s(c, 0), s(c, 1), s(c, 2)});
                               }
                           }
                       }
                   },
                   [&](const EasyAxis& x) {
                       table.header = {"t", "x", "y", "z"};
                       for (Eigen::Index n = 0; n < x.axis.rows(); ++n) {
                           table.rows.push_back({grid.time(static_cast<std::size_t>(n)), x.axis(n, 0), x.axis(n, 1), x.axis(n, 2)});
                       }
                   },
               },
               p);
    write_csv(path, table);
}

Parameter load_parameter(const std::filesystem::path& path, ParameterCase expected, const TimeGrid& grid,
                         std::size_t num_cells) {
    const CsvTable table = read_csv(path);
    const std::size_t x = table.column("x");
    const std::size_t y = table.column("y");
    const std::size_t z = table.column("z");
    if (expected == ParameterCase::anisotropy_landscape) {
        const bool timed = !table.header.empty() && table.header.front() == "step";
        const std::size_t slices = timed ? grid.samples() : 1;
        if (table.rows.size() != slices * num_cells) throw ShapeError("landscape file does not match mesh/grid: " + path.string());
        AnisotropyLandscape a;
        a.phi.assign(slices, CellVectors::Zero(static_cast<Eigen::Index>(num_cells), 3));
        const std::size_t cell_col = table.column("cell");
        for (const auto& row : table.rows) {
            const auto n = timed ? static_cast<std::size_t>(row[0]) : 0;
            const auto c = static_cast<Eigen::Index>(row[cell_col]);
            if (n >= slices || c < 0 || static_cast<std::size_t>(c) >= num_cells) throw ShapeError("landscape index out of range");
            a.phi[n].row(c) << row[x], row[y], row[z];
        }
        return a;
    }
    if (table.rows.size() != grid.samples()) throw ShapeError("parameter file does not match the time grid: " + path.string());
    TimeSeries3 s(static_cast<Eigen::Index>(table.rows.size()), 3);
    for (std::size_t n = 0; n < table.rows.size(); ++n) {
        s.row(static_cast<Eigen::Index>(n)) << table.rows[n][x], table.rows[n][y], table.rows[n][z];
    }
    if (expected == ParameterCase::field_waveform) return FieldWaveform{std::move(s)};
    return EasyAxis{std::move(s)};
}

}  // namespace fokkerid
