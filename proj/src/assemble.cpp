#include "krein/assemble.hpp"
#include "krein/conformal.hpp"
#include "krein/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace krein {

std::string to_string(BoundaryCondition bc)
{
    return bc == BoundaryCondition::Dirichlet ? "dirichlet" : "closed";
}

Vector Pencil::expand(const Vector& dofs) const
{
    Vector v = Vector::Zero(num_vertices());
    for (int d = 0; d < num_dofs(); ++d) v[dof_to_vertex[d]] = dofs[d];
    return v;
}

Vector Pencil::restrict_to_dofs(const Vector& values) const
{
    Vector d(num_dofs());
    for (int i = 0; i < num_dofs(); ++i) d[i] = values[dof_to_vertex[i]];
    return d;
}

namespace {

using Triplet = Eigen::Triplet<double>;

// Gradients of the barycentric coordinates of a planar triangle (rows).
Eigen::Matrix<double, 3, 2> bary_gradients(const Tri2& t)
{
    const double a2 = 2.0 * signed_area(t);
    Eigen::Matrix<double, 3, 2> G;
    for (int i = 0; i < 3; ++i) {
        const Vec2& p = t[(i + 1) % 3];
        const Vec2& q = t[(i + 2) % 3];
        G(i, 0) = (p.y() - q.y()) / a2;
        G(i, 1) = (q.x() - p.x()) / a2;
    }
    return G;
}

// Element stiffness of the exact surface patch over a chart triangle, with the
// metric g = J^T J of the inverse stereographic map at each quadrature point.
Eigen::Matrix3d chart_metric_stiffness(const Tri2& t, const StereoChart& chart)
{
    const auto G = bary_gradients(t);
    const double area = signed_area(t);
    Eigen::Matrix3d K = Eigen::Matrix3d::Zero();
    for (const auto& nd : quad::triangle7()) {
        const Vec2 y = nd.bary[0] * t[0] + nd.bary[1] * t[1] + nd.bary[2] * t[2];
        const auto J = chart.inverse_differential(y);
        const Eigen::Matrix2d g = J.transpose() * J;
        const double sqrt_det = std::sqrt(g.determinant());
        const Eigen::Matrix2d ginv = g.inverse();
        K += (nd.w * area * sqrt_det) * (G * ginv * G.transpose());
    }
    return K;
}

template <class Body>
void for_elements(int n, Exec exec, std::vector<Triplet>& out, Body&& body)
{
    if (exec == Exec::Serial) {
        for (int t = 0; t < n; ++t) body(t, out);
        return;
    }
#ifdef _OPENMP
    // Contiguous static chunks concatenated in thread order reproduce the serial
    // triplet order, so the summed matrix is bitwise identical.
    std::vector<std::vector<Triplet>> parts(omp_get_max_threads());
    std::vector<std::exception_ptr> errors(parts.size());
#pragma omp parallel
    {
        const int tid = omp_get_thread_num(), nth = omp_get_num_threads();
        const int lo = static_cast<int>(static_cast<long long>(n) * tid / nth);
        const int hi = static_cast<int>(static_cast<long long>(n) * (tid + 1) / nth);
        try {
            for (int t = lo; t < hi; ++t) body(t, parts[tid]);
        } catch (...) {
            errors[tid] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
#else
    for (int t = 0; t < n; ++t) body(t, out);
#endif
}

} // namespace

Eigen::Matrix3d element_stiffness(const Tri2& t)
{
    const double area = signed_area(t);
    if (!(std::abs(area) > 0.0)) throw Error(ErrorKind::Assembly, "element_stiffness: degenerate triangle");
    const auto G = bary_gradients(t);
    return std::abs(area) * G * G.transpose();
}

Eigen::Matrix3d element_stiffness(const std::array<Vec3, 3>& t)
{
    const double dbl_area = (t[1] - t[0]).cross(t[2] - t[0]).norm();
    if (!(dbl_area > 0.0)) throw Error(ErrorKind::Assembly, "element_stiffness: degenerate triangle");
    Eigen::Matrix3d K = Eigen::Matrix3d::Zero();
    for (int k = 0; k < 3; ++k) {
        // Edge (i, j) opposite vertex k contributes -cot(angle_k)/2.
        const int i = (k + 1) % 3, j = (k + 2) % 3;
        const Vec3 u = t[i] - t[k], v = t[j] - t[k];
        const double cot = u.dot(v) / u.cross(v).norm();
        K(i, j) -= 0.5 * cot;
        K(j, i) -= 0.5 * cot;
        K(i, i) += 0.5 * cot;
        K(j, j) += 0.5 * cot;
    }
    return K;
}

SparseMatrix assemble_stiffness(const TriMesh& mesh, StiffnessMode mode, Exec exec)
{
    const auto kind = mesh.chart().kind;
    if (mode == StiffnessMode::Auto)
        mode = (kind == ChartKind::StereographicSphere) ? StiffnessMode::ChartMetric : StiffnessMode::EmbeddedFlat;
    if (mode == StiffnessMode::ChartMetric && kind == ChartKind::ClosedSphere)
        throw Error(ErrorKind::Assembly, "assemble_stiffness: closed sphere has no chart metric");

    const StereoChart chart(kind == ChartKind::Planar ? 2.0 : mesh.chart().radius);
    std::vector<Triplet> trips;
    trips.reserve(9 * mesh.num_triangles());
    for_elements(mesh.num_triangles(), exec, trips, [&](int t, std::vector<Triplet>& out) {
        Eigen::Matrix3d Ke;
        if (kind == ChartKind::Planar) Ke = element_stiffness(mesh.triangle(t));
        else if (mode == StiffnessMode::ChartMetric) Ke = chart_metric_stiffness(mesh.triangle(t), chart);
        else Ke = element_stiffness(mesh.embedded_triangle(t));
        const auto& T = mesh.triangles()[t];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) out.emplace_back(T[a], T[b], Ke(a, b));
    });
    SparseMatrix K(mesh.num_vertices(), mesh.num_vertices());
    K.setFromTriplets(trips.begin(), trips.end());
    return K;
}

SparseMatrix assemble_measure_mass(const TriMesh& mesh, const MeasureSpec& m, Exec exec)
{
    const auto kind = mesh.chart().kind;
    const bool match = (kind == ChartKind::Planar && m.space() == SpaceKind::Plane) ||
                       (kind == ChartKind::StereographicSphere && m.space() == SpaceKind::StereoSphere &&
                        std::abs(m.sphere_radius() - mesh.chart().radius) < 1e-12) ||
                       (kind == ChartKind::ClosedSphere && m.space() == SpaceKind::ClosedSphere &&
                        std::abs(m.sphere_radius() - mesh.chart().radius) < 1e-12);
    if (!match)
        throw Error(ErrorKind::Domain, "assemble_measure_mass: measure lives on a different chart than the mesh");

    // Boundary edges: edges owned by a single triangle.
    std::vector<long long> ekeys;
    ekeys.reserve(3 * mesh.num_triangles());
    const long long nv = mesh.num_vertices();
    auto ekey = [nv](int a, int b) { return std::min(a, b) * nv + std::max(a, b); };
    for (const auto& T : mesh.triangles())
        for (int k = 0; k < 3; ++k) ekeys.push_back(ekey(T[k], T[(k + 1) % 3]));
    std::sort(ekeys.begin(), ekeys.end());
    std::vector<long long> bedges;
    for (std::size_t i = 0; i < ekeys.size();) {
        std::size_t j = i;
        while (j < ekeys.size() && ekeys[j] == ekeys[i]) ++j;
        if (j - i == 1) bedges.push_back(ekeys[i]);
        i = j;
    }
    auto on_boundary_edge = [&](int a, int b) { return std::binary_search(bedges.begin(), bedges.end(), ekey(a, b)); };

    std::vector<Triplet> trips;
    std::vector<double> covered(1, 0.0), on_boundary(1, 0.0);
#ifdef _OPENMP
    covered.assign(omp_get_max_threads(), 0.0);
    on_boundary.assign(omp_get_max_threads(), 0.0);
#endif
    for_elements(mesh.num_triangles(), exec, trips, [&](int t, std::vector<Triplet>& out) {
        thread_local std::vector<MeasureNode> nodes;
        nodes.clear();
        const auto& T = mesh.triangles()[t];
        element_nodes(m, Element{mesh.triangle(t), mesh.embedded_triangle(t)}, nodes);
        if (nodes.empty()) return;
        int slot = 0;
#ifdef _OPENMP
        if (exec == Exec::Parallel) slot = omp_get_thread_num();
#endif
        Eigen::Matrix3d Me = Eigen::Matrix3d::Zero();
        for (const auto& nd : nodes) {
            Me += nd.w * nd.bary * nd.bary.transpose();
            covered[slot] += nd.w;
            for (int a = 0; a < 3; ++a)
                if (std::abs(nd.bary[a]) < 1e-12 && on_boundary_edge(T[(a + 1) % 3], T[(a + 2) % 3])) {
                    on_boundary[slot] += nd.w;
                    break;
                }
        }
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                if (Me(a, b) != 0.0) out.emplace_back(T[a], T[b], Me(a, b));
    });
    double cov = 0.0, onb = 0.0;
    for (double c : covered) cov += c;
    for (double c : on_boundary) onb += c;
    const double total = total_mass(m);
    if (onb > 1e-12 * total)
        throw Error(ErrorKind::Assembly, "assemble_measure_mass: measure puts mass " + std::to_string(onb) +
                                             " on the boundary (boundary-supported measure rejected)");
    if (cov < (1.0 - 1e-2) * total)
        throw Error(ErrorKind::Assembly, "assemble_measure_mass: measure support is not inside the mesh (covered " +
                                             std::to_string(cov) + " of " + std::to_string(total) + ")");
    SparseMatrix M(mesh.num_vertices(), mesh.num_vertices());
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

Pencil make_pencil(const TriMesh& mesh, const SparseMatrix& K, const SparseMatrix& M, BoundaryCondition bc)
{
    Pencil p;
    p.bc = bc;
    const int nv = mesh.num_vertices();
    if (bc == BoundaryCondition::Closed && mesh.num_boundary() != 0)
        throw Error(ErrorKind::InvalidInput, "make_pencil: closed condition on a mesh with boundary");
    if (bc == BoundaryCondition::Dirichlet && mesh.num_boundary() == 0)
        throw Error(ErrorKind::InvalidInput, "make_pencil: Dirichlet condition on a mesh without boundary");
    p.vertex_to_dof.assign(nv, -1);
    for (int v = 0; v < nv; ++v)
        if (bc == BoundaryCondition::Closed || !mesh.is_boundary(v)) {
            p.vertex_to_dof[v] = static_cast<int>(p.dof_to_vertex.size());
            p.dof_to_vertex.push_back(v);
        }
    auto reduce = [&](const SparseMatrix& A) {
        std::vector<Triplet> t;
        t.reserve(A.nonZeros());
        for (int c = 0; c < A.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(A, c); it; ++it) {
                const int i = p.vertex_to_dof[it.row()], j = p.vertex_to_dof[it.col()];
                if (i >= 0 && j >= 0) t.emplace_back(i, j, it.value());
            }
        SparseMatrix R(p.num_dofs(), p.num_dofs());
        R.setFromTriplets(t.begin(), t.end());
        return R;
    };
    p.K = reduce(K);
    p.M = reduce(M);
    std::vector<Triplet> rows;
    for (int c = 0; c < M.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(M, c); it; ++it)
            if (const int i = p.vertex_to_dof[it.row()]; i >= 0) rows.emplace_back(i, it.col(), it.value());
    p.M_rows.resize(p.num_dofs(), nv);
    p.M_rows.setFromTriplets(rows.begin(), rows.end());
    return p;
}

Pencil assemble_pencil(const TriMesh& mesh, const MeasureSpec& m, BoundaryCondition bc, StiffnessMode mode,
                       Exec exec)
{
    return make_pencil(mesh, assemble_stiffness(mesh, mode, exec), assemble_measure_mass(mesh, m, exec), bc);
}

void write_coo(std::ostream& os, const SparseMatrix& A)
{
    os.precision(17);
    for (int c = 0; c < A.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(A, c); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

} // namespace krein
