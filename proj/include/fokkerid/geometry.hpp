#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace fokkerid {

using Vec3 = Eigen::Vector3d;
// One row per cell, columns x, y, z.
using CellVectors = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using CellField = Eigen::VectorXd;

inline constexpr int kMaxMeshLevel = 7;
inline constexpr const char* kMeshFormatTag = "FOKKERID-MESH-v1";

// Edge shared by two triangles (cells) of a closed triangulation.
struct MeshEdge {
    std::size_t left = 0;
    std::size_t right = 0;
    std::size_t v0 = 0;
    std::size_t v1 = 0;
    double arc_length = 0.0;       // geodesic length of the shared edge
    double center_distance = 0.0;  // geodesic distance between the two circumcenters
    Vec3 midpoint = Vec3::Zero();  // unit vector
    Vec3 conormal = Vec3::Zero();  // unit tangent vector, normal to the edge, pointing left -> right
};

// Triangulated unit sphere with one finite-volume cell per triangle.
// Cell unknowns are collocated at the (spherical) circumcenters.
struct SphereMesh {
    int level = 0;
    std::vector<Vec3> vertices;
    std::vector<std::array<std::size_t, 3>> triangles;
    CellVectors circumcenters;
    CellField cell_areas;
    std::vector<MeshEdge> edges;
    std::vector<std::array<std::size_t, 3>> cell_edges;

    std::size_t num_cells() const noexcept { return triangles.size(); }
    std::size_t num_vertices() const noexcept { return vertices.size(); }
    Vec3 center(std::size_t cell) const { return circumcenters.row(static_cast<Eigen::Index>(cell)).transpose(); }
    std::size_t neighbor(std::size_t cell, int k) const;

    // Largest geodesic edge length.
    double diameter() const;
    double total_area() const { return cell_areas.sum(); }
    // Area-weighted integral of a cell field.
    double integrate(const CellField& f) const { return cell_areas.dot(f); }
};

std::size_t triangle_count_for_level(int level);

// Recursive midpoint refinement of the icosahedron, projected onto S^2.
// Throws ConfigError for level outside [0, kMaxMeshLevel].
SphereMesh build_icosphere(int level);

// Rebuilds all derived geometry from vertices and triangles and validates
// closure and normalization. Used by the cache loader.
SphereMesh mesh_from_topology(int level, std::vector<Vec3> vertices,
                              std::vector<std::array<std::size_t, 3>> triangles);

void save_mesh(const SphereMesh& mesh, const std::filesystem::path& path);
SphereMesh load_mesh(const std::filesystem::path& path);

std::filesystem::path mesh_cache_path(const std::filesystem::path& cache_dir, int level);

// Loads level from cache_dir, building and writing it on a miss.
SphereMesh load_or_build_mesh(int level, const std::filesystem::path& cache_dir, bool* cache_hit = nullptr);

// Default cache directory: $FOKKERID_CACHE_DIR, else ./.fokkerid-cache.
std::filesystem::path default_mesh_cache_dir();

// Finite-volume operators on a SphereMesh.
//
// `stiffness` is the integrated two-point-flux diffusion matrix,
//     (S u)_i = lambda * sum_{e in cell i} (l_e / d_e) (u_j - u_i),
// symmetric with zero row sums. The pointwise Laplace-Beltrami
// approximation is mass^-1 * S.
//
// The drift divergence D(b), (D(b) u)_i ~ integral over cell i of div(b u),
// uses a central face density (u_i + u_j)/2 and the edge-normal component of
// the averaged cell drift. Column sums of D(b) vanish for every b.
struct DiscreteOperators {
    struct EdgeFlux {
        std::size_t left = 0;
        std::size_t right = 0;
        Vec3 scaled_conormal = Vec3::Zero();  // arc_length * conormal
        double diffusion_weight = 0.0;        // arc_length / center_distance
    };

    double lambda = 0.0;
    Eigen::SparseMatrix<double> stiffness;
    CellField mass;
    std::vector<EdgeFlux> flux;

    std::size_t num_cells() const noexcept { return static_cast<std::size_t>(mass.size()); }

    CellField apply_laplacian(const CellField& u) const;

    CellField drift_divergence_apply(const CellVectors& drift, const CellField& u) const;
    Eigen::SparseMatrix<double> drift_divergence(const CellVectors& drift) const;

    // Gradient of psi^T D(b) u with respect to the per-cell drift vectors b.
    CellVectors drift_cogradient(const CellField& u, const CellField& psi) const;
};

DiscreteOperators assemble_operators(const SphereMesh& mesh, double lambda);

// Per-cell least-squares gradient from neighbor differences, in the tangent
// plane at each circumcenter.
CellVectors cell_gradient(const SphereMesh& mesh, const CellField& f);

// Conservative transfer between meshes: every source cell is assigned to the
// target cell with the nearest circumcenter; target values are the
// area-weighted average of their assigned source values, renormalized so the
// integral is preserved.
class MeshTransfer {
public:
    MeshTransfer(const SphereMesh& source, const SphereMesh& target);

    CellField apply(const CellField& source_field) const;
    std::size_t target_cells() const noexcept { return target_areas_.size(); }

private:
    std::vector<std::size_t> assignment_;
    std::vector<double> source_areas_;
    std::vector<double> target_areas_;
    std::vector<double> assigned_area_;
};

CellField interpolate(const SphereMesh& source, const CellField& field, const SphereMesh& target);

}  // namespace fokkerid
