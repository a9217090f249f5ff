#include "krein/interpolate.hpp"

#include <algorithm>
#include <cmath>

namespace krein {

PointLocator::PointLocator(const TriMesh& mesh) : mesh_(&mesh)
{
    sphere_ = mesh.chart().kind == ChartKind::ClosedSphere;
    const int nt = mesh.num_triangles();
    std::vector<Vec3> tlo(nt), thi(nt);
    double pad = 1e-12;
    if (sphere_) pad += mesh.max_edge_length();   // faces sit inside the sphere they approximate
    for (int t = 0; t < nt; ++t) {
        Vec3 a = Vec3::Constant(1e300), b = Vec3::Constant(-1e300);
        for (int v : mesh.triangles()[t]) {
            const Vec3 p = sphere_ ? mesh.embedded()[v]
                                   : Vec3(mesh.vertices()[v].x(), mesh.vertices()[v].y(), 0.0);
            a = a.cwiseMin(p);
            b = b.cwiseMax(p);
        }
        tlo[t] = a - Vec3::Constant(pad);
        thi[t] = b + Vec3::Constant(pad);
    }
    lo_ = Vec3::Constant(1e300);
    hi_ = Vec3::Constant(-1e300);
    for (int t = 0; t < nt; ++t) {
        lo_ = lo_.cwiseMin(tlo[t]);
        hi_ = hi_.cwiseMax(thi[t]);
    }
    const int dims = sphere_ ? 3 : 2;
    const int per = std::max(1, static_cast<int>(std::pow(static_cast<double>(nt) / 2.0, 1.0 / dims)));
    for (int d = 0; d < dims; ++d) n_[d] = per;
    if (!sphere_) {
        lo_.z() = -1.0;
        hi_.z() = 1.0;
    }

    auto range = [&](const Vec3& a, const Vec3& b, int d) {
        const double h = (hi_[d] - lo_[d]) / n_[d];
        const int i0 = std::clamp(static_cast<int>(std::floor((a[d] - lo_[d]) / h)), 0, n_[d] - 1);
        const int i1 = std::clamp(static_cast<int>(std::floor((b[d] - lo_[d]) / h)), 0, n_[d] - 1);
        return std::pair{i0, i1};
    };
    const int ncell = n_[0] * n_[1] * n_[2];
    std::vector<int> count(ncell + 1, 0);
    for (int pass = 0; pass < 2; ++pass) {
        if (pass == 1) {
            start_.assign(ncell + 1, 0);
            for (int c = 0; c < ncell; ++c) start_[c + 1] = start_[c] + count[c];
            items_.assign(start_[ncell], 0);
            std::fill(count.begin(), count.end(), 0);
        }
        for (int t = 0; t < nt; ++t) {
            const auto [i0, i1] = range(tlo[t], thi[t], 0);
            const auto [j0, j1] = range(tlo[t], thi[t], 1);
            const auto [k0, k1] = sphere_ ? range(tlo[t], thi[t], 2) : std::pair{0, 0};
            for (int k = k0; k <= k1; ++k)
                for (int j = j0; j <= j1; ++j)
                    for (int i = i0; i <= i1; ++i) {
                        const int c = cell(i, j, k);
                        if (pass == 0) ++count[c];
                        else items_[start_[c] + count[c]++] = t;
                    }
        }
    }
}

std::optional<Location> PointLocator::scan(const Vec3& q) const
{
    int idx[3] = {0, 0, 0};
    for (int d = 0; d < (sphere_ ? 3 : 2); ++d) {
        const double h = (hi_[d] - lo_[d]) / n_[d];
        const double f = (q[d] - lo_[d]) / h;
        if (f < -1e-9 || f > n_[d] + 1e-9) return std::nullopt;
        idx[d] = std::clamp(static_cast<int>(std::floor(f)), 0, n_[d] - 1);
    }
    const int c = cell(idx[0], idx[1], idx[2]);
    Location best;
    double best_min = -1e-10;
    for (int s = start_[c]; s < start_[c + 1]; ++s) {
        const int t = items_[s];
        Eigen::Vector3d l;
        if (!sphere_) {
            l = barycentric(mesh_->triangle(t), Vec2(q.x(), q.y()));
        } else {
            const auto P = mesh_->embedded_triangle(t);
            const Vec3 n = (P[1] - P[0]).cross(P[2] - P[0]);
            const double nq = n.dot(q);
            if (nq <= 0.0) continue;
            const Vec3 x = q * (n.dot(P[0]) / nq);
            const double n2 = n.squaredNorm();
            l[0] = (P[1] - x).cross(P[2] - x).dot(n) / n2;
            l[1] = (P[2] - x).cross(P[0] - x).dot(n) / n2;
            l[2] = 1.0 - l[0] - l[1];
        }
        if (l.minCoeff() >= best_min) {
            best_min = l.minCoeff();
            best.tri = t;
            best.bary = l;
        }
    }
    if (best.tri < 0) return std::nullopt;
    return best;
}

std::optional<Location> PointLocator::locate(const Vec2& y) const
{
    if (sphere_) throw Error(ErrorKind::InvalidInput, "PointLocator: closed sphere meshes take ambient points");
    return scan(Vec3(y.x(), y.y(), 0.0));
}

std::optional<Location> PointLocator::locate(const Vec3& x) const
{
    if (!sphere_) return scan(Vec3(x.x(), x.y(), 0.0));
    const double r = x.norm();
    if (!(r > 0.0)) return std::nullopt;
    return scan(x * (mesh_->chart().radius / r));
}

P1Function::P1Function(const TriMesh& mesh, Vector values) : loc_(mesh), values_(std::move(values))
{
    if (values_.size() != mesh.num_vertices())
        throw Error(ErrorKind::InvalidInput, "P1Function: value count does not match the mesh");
}

namespace {

double eval_at(const TriMesh& m, const Vector& v, const std::optional<Location>& l)
{
    if (!l) throw Error(ErrorKind::Domain, "P1Function: point outside the mesh");
    const auto& T = m.triangles()[l->tri];
    return l->bary[0] * v[T[0]] + l->bary[1] * v[T[1]] + l->bary[2] * v[T[2]];
}

} // namespace

double P1Function::operator()(const Vec2& y) const { return eval_at(loc_.mesh(), values_, loc_.locate(y)); }
double P1Function::operator()(const Vec3& x) const { return eval_at(loc_.mesh(), values_, loc_.locate(x)); }

double P1Function::value_or(const Vec3& x, double fallback) const
{
    const auto l = loc_.locate(x);
    return l ? eval_at(loc_.mesh(), values_, l) : fallback;
}

} // namespace krein
