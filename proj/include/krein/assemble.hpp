#pragma once

#include "krein/common.hpp"
#include "krein/measure.hpp"
#include "krein/mesh.hpp"

#include <Eigen/Sparse>

#include <iosfwd>
#include <vector>

namespace krein {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class BoundaryCondition { Dirichlet, Closed };

std::string to_string(BoundaryCondition bc);

/// How the energy form is evaluated on sphere meshes.
enum class StiffnessMode {
    Auto,           // ChartMetric on stereographic charts, EmbeddedFlat otherwise
    ChartMetric,    // induced metric of the exact surface, pulled back to the chart
    EmbeddedFlat,   // flat triangles through the embedded vertices
};

/// Galerkin pair (K, M) on the free degrees of freedom.
struct Pencil {
    SparseMatrix K;
    SparseMatrix M;
    SparseMatrix M_rows;                // free rows of the full mass matrix, all vertex columns
    std::vector<int> dof_to_vertex;
    std::vector<int> vertex_to_dof;     // -1 for eliminated (Dirichlet boundary) vertices
    BoundaryCondition bc = BoundaryCondition::Dirichlet;

    int num_dofs() const { return static_cast<int>(dof_to_vertex.size()); }
    int num_vertices() const { return static_cast<int>(vertex_to_dof.size()); }
    /// DOF vector -> per-vertex vector (zeros on eliminated vertices).
    Vector expand(const Vector& dofs) const;
    /// Per-vertex vector -> DOF vector.
    Vector restrict_to_dofs(const Vector& values) const;
};

/// P1 element stiffness of a planar triangle: area * grad(l_i) . grad(l_j).
Eigen::Matrix3d element_stiffness(const Tri2& t);
/// P1 element stiffness of a flat triangle in space (cotangent form).
Eigen::Matrix3d element_stiffness(const std::array<Vec3, 3>& t);

/// Global stiffness over all vertices.
SparseMatrix assemble_stiffness(const TriMesh& mesh, StiffnessMode mode = StiffnessMode::Auto,
                                Exec exec = Exec::Parallel);

/// Global measure mass M_ij = int phi_i phi_j dmu over all vertices. The measure must
/// live in the mesh's ambient space, lie inside the mesh and put no mass on the
/// boundary when the mesh has one.
SparseMatrix assemble_measure_mass(const TriMesh& mesh, const MeasureSpec& m, Exec exec = Exec::Parallel);

/// Restricts K and M to the free DOFs of the boundary condition.
Pencil make_pencil(const TriMesh& mesh, const SparseMatrix& K, const SparseMatrix& M, BoundaryCondition bc);

Pencil assemble_pencil(const TriMesh& mesh, const MeasureSpec& m, BoundaryCondition bc,
                       StiffnessMode mode = StiffnessMode::Auto, Exec exec = Exec::Parallel);

/// Coordinate dump: one "i j value" line per stored entry, 0-based.
void write_coo(std::ostream& os, const SparseMatrix& A);

} // namespace krein
