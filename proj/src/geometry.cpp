#include "fokkerid/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "fokkerid/errors.hpp"

namespace fokkerid {
namespace {

double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

// Van Oosterom-Strackee solid angle of the spherical triangle abc.
double spherical_triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    const double numerator = std::abs(a.dot(b.cross(c)));
    const double denominator = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    return 2.0 * std::atan2(numerator, denominator);
}

using Triangles = std::vector<std::array<std::size_t, 3>>;

void icosahedron(std::vector<Vec3>& vertices, Triangles& triangles) {
    const double phi = std::numbers::phi;
    vertices = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& v : vertices) v.normalize();
    triangles = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
}

void refine(std::vector<Vec3>& vertices, Triangles& triangles) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoints;
    auto midpoint = [&](std::size_t a, std::size_t b) {
        const auto key = std::minmax(a, b);
        if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
        vertices.push_back((vertices[a] + vertices[b]).normalized());
        const std::size_t id = vertices.size() - 1;
        midpoints.emplace(key, id);
        return id;
    };
    Triangles refined;
    refined.reserve(triangles.size() * 4);
    for (const auto& t : triangles) {
        const std::size_t ab = midpoint(t[0], t[1]);
        const std::size_t bc = midpoint(t[1], t[2]);
        const std::size_t ca = midpoint(t[2], t[0]);
        refined.push_back({t[0], ab, ca});
        refined.push_back({t[1], bc, ab});
        refined.push_back({t[2], ca, bc});
        refined.push_back({ab, bc, ca});
    }
    triangles = std::move(refined);
}

void check_level(int level) {
    if (level < 0 || level > kMaxMeshLevel) {
        throw ConfigError("mesh level " + std::to_string(level) + " outside [0, " +
                          std::to_string(kMaxMeshLevel) + "]");
    }
}

}  // namespace

std::size_t SphereMesh::neighbor(std::size_t cell, int k) const {
    const MeshEdge& e = edges[cell_edges[cell][static_cast<std::size_t>(k)]];
    return e.left == cell ? e.right : e.left;
}

double SphereMesh::diameter() const {
    double h = 0.0;
    for (const auto& e : edges) h = std::max(h, e.arc_length);
    return h;
}

std::size_t triangle_count_for_level(int level) {
    check_level(level);
    return std::size_t{20} << (2 * level);
}

SphereMesh build_icosphere(int level) {
    check_level(level);
    std::vector<Vec3> vertices;
    Triangles triangles;
    icosahedron(vertices, triangles);
    for (int l = 0; l < level; ++l) refine(vertices, triangles);
    // Each level is turned by its own fixed rotation; otherwise the face
    // centers of the icosahedron are circumcenters on every level.
    const Eigen::Matrix3d turn =
        Eigen::AngleAxisd(0.05 * level, Vec3(1.0, 2.0, 3.0).normalized()).toRotationMatrix();
    for (auto& v : vertices) v = (turn * v).normalized();
    return mesh_from_topology(level, std::move(vertices), std::move(triangles));
}

SphereMesh mesh_from_topology(int level, std::vector<Vec3> vertices, Triangles triangles) {
    check_level(level);
    SphereMesh mesh;
    mesh.level = level;
    mesh.vertices = std::move(vertices);
    mesh.triangles = std::move(triangles);

    for (const auto& v : mesh.vertices) {
        if (std::abs(v.norm() - 1.0) > 1e-12) throw MeshQualityError("mesh vertex not on the unit sphere");
    }

    const std::size_t n_cells = mesh.triangles.size();
    mesh.circumcenters.resize(static_cast<Eigen::Index>(n_cells), 3);
    mesh.cell_areas.resize(static_cast<Eigen::Index>(n_cells));
    for (std::size_t c = 0; c < n_cells; ++c) {
        auto& t = mesh.triangles[c];
        for (auto idx : t) {
            if (idx >= mesh.vertices.size()) throw MeshQualityError("triangle references missing vertex");
        }
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& cc = mesh.vertices[t[2]];
        Vec3 normal = (b - a).cross(cc - a);
        // Keep every triangle counter-clockwise seen from outside.
        if (normal.dot(a + b + cc) < 0.0) {
            std::swap(t[1], t[2]);
            normal = -normal;
        }
        const double len = normal.norm();
        if (len == 0.0) throw MeshQualityError("degenerate triangle " + std::to_string(c));
        mesh.circumcenters.row(static_cast<Eigen::Index>(c)) = (normal / len).transpose();
        mesh.cell_areas(static_cast<Eigen::Index>(c)) = spherical_triangle_area(a, b, cc);
    }

    // Each undirected edge must be shared by exactly two triangles.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<std::size_t, int>> open_edges;
    mesh.cell_edges.assign(n_cells, {0, 0, 0});
    for (std::size_t c = 0; c < n_cells; ++c) {
        const auto& t = mesh.triangles[c];
        for (int k = 0; k < 3; ++k) {
            const std::size_t va = t[static_cast<std::size_t>(k)];
            const std::size_t vb = t[static_cast<std::size_t>((k + 1) % 3)];
            const auto key = std::minmax(va, vb);
            auto it = open_edges.find(key);
            if (it == open_edges.end()) {
                open_edges.emplace(key, std::make_pair(c, k));
                continue;
            }
            if (it->second.second < 0) throw MeshQualityError("edge shared by more than two triangles");
            const std::size_t left = it->second.first;
            const int left_slot = it->second.second;
            it->second.second = -1;

            MeshEdge e;
            e.left = left;
            e.right = c;
            e.v0 = key.first;
            e.v1 = key.second;
            const Vec3& p0 = mesh.vertices[e.v0];
            const Vec3& p1 = mesh.vertices[e.v1];
            e.arc_length = angle_between(p0, p1);
            e.center_distance = angle_between(mesh.center(left), mesh.center(c));
            e.midpoint = (p0 + p1).normalized();
            Vec3 conormal = (p1 - p0).normalized().cross(e.midpoint).normalized();
            // Point away from the left triangle's third vertex.
            const auto& lt = mesh.triangles[left];
            std::size_t opposite = lt[0];
            for (auto v : lt) {
                if (v != e.v0 && v != e.v1) opposite = v;
            }
            if (conormal.dot(mesh.vertices[opposite]) > 0.0) conormal = -conormal;
            e.conormal = conormal;
            if (!(e.center_distance > 0.0)) throw MeshQualityError("coincident circumcenters across an edge");

            const std::size_t id = mesh.edges.size();
            mesh.edges.push_back(e);
            mesh.cell_edges[left][static_cast<std::size_t>(left_slot)] = id;
            mesh.cell_edges[c][static_cast<std::size_t>(k)] = id;
        }
    }
    for (const auto& [key, slot] : open_edges) {
        if (slot.second >= 0) throw MeshQualityError("mesh is not closed: boundary edge found");
    }
    return mesh;
}

void save_mesh(const SphereMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write mesh file " + path.string());
    out.precision(17);
    out << kMeshFormatTag << '\n';
    out << "level " << mesh.level << '\n';
    out << "vertices " << mesh.vertices.size() << '\n';
    for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    out << "triangles " << mesh.triangles.size() << '\n';
    for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    if (!out) throw IoError("failed writing mesh file " + path.string());
}

SphereMesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read mesh file " + path.string());
    std::string tag;
    std::getline(in, tag);
    if (tag != kMeshFormatTag) throw IoError("unsupported mesh file header in " + path.string());
    std::string word;
    int level = -1;
    std::size_t n_vertices = 0;
    std::size_t n_triangles = 0;
    in >> word >> level;
    if (word != "level") throw IoError("malformed mesh file " + path.string());
    in >> word >> n_vertices;
    if (word != "vertices") throw IoError("malformed mesh file " + path.string());
    std::vector<Vec3> vertices(n_vertices);
    for (auto& v : vertices) in >> v.x() >> v.y() >> v.z();
    in >> word >> n_triangles;
    if (word != "triangles") throw IoError("malformed mesh file " + path.string());
    Triangles triangles(n_triangles);
    for (auto& t : triangles) in >> t[0] >> t[1] >> t[2];
    if (!in) throw IoError("truncated mesh file " + path.string());
    return mesh_from_topology(level, std::move(vertices), std::move(triangles));
}

std::filesystem::path mesh_cache_path(const std::filesystem::path& cache_dir, int level) {
    return cache_dir / ("icosphere_L" + std::to_string(level) + ".mesh");
}

SphereMesh load_or_build_mesh(int level, const std::filesystem::path& cache_dir, bool* cache_hit) {
    check_level(level);
    const auto path = mesh_cache_path(cache_dir, level);
    if (std::filesystem::exists(path)) {
        if (cache_hit) *cache_hit = true;
        return load_mesh(path);
    }
    if (cache_hit) *cache_hit = false;
    SphereMesh mesh = build_icosphere(level);
    std::error_code ec;
    std::filesystem::create_directories(cache_dir, ec);
    if (ec) throw IoError("cannot create mesh cache directory " + cache_dir.string());
    // Write-then-rename keeps concurrent readers from seeing a partial file.
    auto tmp = path;
    tmp += ".tmp";
    save_mesh(mesh, tmp);
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move mesh cache file into place: " + path.string());
    return mesh;
}

std::filesystem::path default_mesh_cache_dir() {
    if (const char* env = std::getenv("FOKKERID_CACHE_DIR"); env && *env) return env;
    return ".fokkerid-cache";
}

// ---------------------------------------------------------------------------
// Operators

CellField DiscreteOperators::apply_laplacian(const CellField& u) const {
    return (stiffness * u).cwiseQuotient(mass);
}

CellField DiscreteOperators::drift_divergence_apply(const CellVectors& drift, const CellField& u) const {
    CellField out = CellField::Zero(u.size());
    for (const auto& f : flux) {
        const auto l = static_cast<Eigen::Index>(f.left);
        const auto r = static_cast<Eigen::Index>(f.right);
        const double beta = 0.5 * (drift.row(l) + drift.row(r)).dot(f.scaled_conormal.transpose());
        const double q = 0.5 * beta * (u(l) + u(r));
        out(l) += q;
        out(r) -= q;
    }
    return out;
}

Eigen::SparseMatrix<double> DiscreteOperators::drift_divergence(const CellVectors& drift) const {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(flux.size() * 4);
    for (const auto& f : flux) {
        const auto l = static_cast<Eigen::Index>(f.left);
        const auto r = static_cast<Eigen::Index>(f.right);
        const double c = 0.25 * (drift.row(l) + drift.row(r)).dot(f.scaled_conormal.transpose());
        triplets.emplace_back(l, l, c);
        triplets.emplace_back(l, r, c);
        triplets.emplace_back(r, l, -c);
        triplets.emplace_back(r, r, -c);
    }
    const auto n = static_cast<Eigen::Index>(num_cells());
    Eigen::SparseMatrix<double> d(n, n);
    d.setFromTriplets(triplets.begin(), triplets.end());
    return d;
}

CellVectors DiscreteOperators::drift_cogradient(const CellField& u, const CellField& psi) const {
    CellVectors g = CellVectors::Zero(u.size(), 3);
    for (const auto& f : flux) {
        const auto l = static_cast<Eigen::Index>(f.left);
        const auto r = static_cast<Eigen::Index>(f.right);
        const double s = 0.25 * (u(l) + u(r)) * (psi(l) - psi(r));
        g.row(l) += s * f.scaled_conormal.transpose();
        g.row(r) += s * f.scaled_conormal.transpose();
    }
    return g;
}

DiscreteOperators assemble_operators(const SphereMesh& mesh, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("diffusion constant lambda must be positive");
    for (Eigen::Index c = 0; c < mesh.cell_areas.size(); ++c) {
        if (mesh.cell_areas(c) < 1e-14) {
            throw MeshQualityError("degenerate cell " + std::to_string(c) + " (area below 1e-14)");
        }
    }
    DiscreteOperators ops;
    ops.lambda = lambda;
    ops.mass = mesh.cell_areas;
    ops.flux.reserve(mesh.edges.size());

    const auto n = static_cast<Eigen::Index>(mesh.num_cells());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(mesh.edges.size() * 4);
    for (const auto& e : mesh.edges) {
        DiscreteOperators::EdgeFlux f;
        f.left = e.left;
        f.right = e.right;
        f.scaled_conormal = e.arc_length * e.conormal;
        f.diffusion_weight = e.arc_length / e.center_distance;
        ops.flux.push_back(f);

        const double w = lambda * f.diffusion_weight;
        const auto l = static_cast<Eigen::Index>(e.left);
        const auto r = static_cast<Eigen::Index>(e.right);
        triplets.emplace_back(l, r, w);
        triplets.emplace_back(r, l, w);
        triplets.emplace_back(l, l, -w);
        triplets.emplace_back(r, r, -w);
    }
    ops.stiffness.resize(n, n);
    ops.stiffness.setFromTriplets(triplets.begin(), triplets.end());
    ops.stiffness.makeCompressed();
    return ops;
}

CellVectors cell_gradient(const SphereMesh& mesh, const CellField& f) {
    const std::size_t n = mesh.num_cells();
    CellVectors grad(static_cast<Eigen::Index>(n), 3);
    for (std::size_t c = 0; c < n; ++c) {
        const Vec3 m = mesh.center(c);
        // Orthonormal tangent basis at m.
        const Vec3 seed = std::abs(m.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
        const Vec3 e1 = (seed - seed.dot(m) * m).normalized();
        const Vec3 e2 = m.cross(e1);
        Eigen::Matrix<double, 3, 2> a;
        Eigen::Vector3d rhs;
        for (int k = 0; k < 3; ++k) {
            const std::size_t nb = mesh.neighbor(c, k);
            const Vec3 q = mesh.center(nb);
            // Logarithmic map of q at m: geodesic distance along the initial direction.
            const Vec3 t = q - q.dot(m) * m;
            const Vec3 d = angle_between(m, q) * t.normalized();
            a(k, 0) = d.dot(e1);
            a(k, 1) = d.dot(e2);
            rhs(k) = f(static_cast<Eigen::Index>(nb)) - f(static_cast<Eigen::Index>(c));
        }
        const Eigen::Vector2d g = a.colPivHouseholderQr().solve(rhs);
        grad.row(static_cast<Eigen::Index>(c)) = (g(0) * e1 + g(1) * e2).transpose();
    }
    return grad;
}

MeshTransfer::MeshTransfer(const SphereMesh& source, const SphereMesh& target) {
    const std::size_t ns = source.num_cells();
    const std::size_t nt = target.num_cells();
    assignment_.resize(ns);
    source_areas_.assign(source.cell_areas.data(), source.cell_areas.data() + ns);
    target_areas_.assign(target.cell_areas.data(), target.cell_areas.data() + nt);
    assigned_area_.assign(nt, 0.0);
    // Nearest by geodesic distance == largest dot product on the unit sphere.
    const Eigen::MatrixXd scores = source.circumcenters * target.circumcenters.transpose();
    for (std::size_t s = 0; s < ns; ++s) {
        Eigen::Index best = 0;
        scores.row(static_cast<Eigen::Index>(s)).maxCoeff(&best);
        assignment_[s] = static_cast<std::size_t>(best);
        assigned_area_[static_cast<std::size_t>(best)] += source_areas_[s];
    }
    for (std::size_t t = 0; t < nt; ++t) {
        if (assigned_area_[t] <= 0.0) {
            throw InterpolationError("target cell " + std::to_string(t) + " received no source cells");
        }
    }
}

CellField MeshTransfer::apply(const CellField& source_field) const {
    if (static_cast<std::size_t>(source_field.size()) != assignment_.size()) {
        throw ShapeError("interpolation source field does not match the source mesh");
    }
    const std::size_t nt = target_areas_.size();
    std::vector<double> accum(nt, 0.0);
    double source_integral = 0.0;
    for (std::size_t s = 0; s < assignment_.size(); ++s) {
        const double mass = source_areas_[s] * source_field(static_cast<Eigen::Index>(s));
        accum[assignment_[s]] += mass;
        source_integral += mass;
    }
    CellField out(static_cast<Eigen::Index>(nt));
    double target_integral = 0.0;
    double target_abs = 0.0;
    double total_area = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
        const double v = accum[t] / assigned_area_[t];
        out(static_cast<Eigen::Index>(t)) = v;
        target_integral += target_areas_[t] * v;
        target_abs += target_areas_[t] * std::abs(v);
        total_area += target_areas_[t];
    }
    // Scale when the integral is well conditioned (densities); otherwise
    // shift, which also preserves constants.
    const bool same_sign = (source_integral > 0.0) == (target_integral > 0.0);
    if (same_sign && std::abs(target_integral) > 1e-8 * target_abs) {
        out *= source_integral / target_integral;
    } else {
        out.array() += (source_integral - target_integral) / total_area;
    }
    return out;
}

CellField interpolate(const SphereMesh& source, const CellField& field, const SphereMesh& target) {
    return MeshTransfer(source, target).apply(field);
}

}  // namespace fokkerid
