#include "krein/mesh.hpp"
#include "krein/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace krein {

std::string to_string(ChartKind k)
{
    switch (k) {
    case ChartKind::Planar: return "planar";
    case ChartKind::StereographicSphere: return "stereo";
    case ChartKind::ClosedSphere: return "sphere";
    }
    return "?";
}

namespace {

double angle_at(const Vec3& a, const Vec3& b, const Vec3& c)
{
    const Vec3 u = b - a, v = c - a;
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

Vec3 lift(const Vec2& p) { return {p.x(), p.y(), 0.0}; }

} // namespace

TriMesh::TriMesh(std::vector<Vec2> vertices, std::vector<TriIndex> triangles,
                 std::vector<char> boundary, Chart chart, std::vector<Vec3> embedded)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      boundary_(std::move(boundary)),
      chart_(chart),
      embedded_(std::move(embedded))
{
    const int nv = num_vertices();
    if (boundary_.empty()) boundary_.assign(nv, 0);
    if (static_cast<int>(boundary_.size()) != nv)
        throw Error(ErrorKind::InvalidInput, "TriMesh: boundary mask size mismatch");
    if (!embedded_.empty() && static_cast<int>(embedded_.size()) != nv)
        throw Error(ErrorKind::InvalidInput, "TriMesh: embedded coordinate count mismatch");
    if (chart_.kind != ChartKind::Planar && embedded_.empty())
        throw Error(ErrorKind::InvalidInput, "TriMesh: sphere charts need embedded coordinates");
    if (chart_.kind == ChartKind::ClosedSphere && num_boundary() != 0)
        throw Error(ErrorKind::InvalidInput, "TriMesh: closed sphere cannot carry boundary vertices");

    for (int t = 0; t < num_triangles(); ++t) {
        for (int v : triangles_[t])
            if (v < 0 || v >= nv)
                throw Error(ErrorKind::InvalidInput, "TriMesh: triangle index out of range");
        if (chart_.kind == ChartKind::ClosedSphere) {
            const auto e = embedded_triangle(t);
            const Vec3 n = (e[1] - e[0]).cross(e[2] - e[0]);
            if (n.dot(e[0] + e[1] + e[2]) <= 0.0 || n.norm() <= 0.0)
                throw Error(ErrorKind::Assembly, "TriMesh: triangle " + std::to_string(t) +
                                                     " is degenerate or inward oriented");
        } else if (!(chart_area(t) > 0.0)) {
            throw Error(ErrorKind::Assembly, "TriMesh: triangle " + std::to_string(t) +
                                                 " is degenerate or negatively oriented");
        }
    }
}

int TriMesh::num_boundary() const
{
    return static_cast<int>(std::count(boundary_.begin(), boundary_.end(), 1));
}

Tri2 TriMesh::triangle(int t) const
{
    const auto& T = triangles_[t];
    return {vertices_[T[0]], vertices_[T[1]], vertices_[T[2]]};
}

std::array<Vec3, 3> TriMesh::embedded_triangle(int t) const
{
    const auto& T = triangles_[t];
    if (embedded_.empty())
        return {lift(vertices_[T[0]]), lift(vertices_[T[1]]), lift(vertices_[T[2]])};
    return {embedded_[T[0]], embedded_[T[1]], embedded_[T[2]]};
}

double TriMesh::chart_area(int t) const { return signed_area(triangle(t)); }

double TriMesh::embedded_area(int t) const
{
    const auto e = embedded_triangle(t);
    return 0.5 * (e[1] - e[0]).cross(e[2] - e[0]).norm();
}

double TriMesh::total_chart_area() const
{
    double s = 0.0;
    for (int t = 0; t < num_triangles(); ++t) s += chart_area(t);
    return s;
}

double TriMesh::total_embedded_area() const
{
    double s = 0.0;
    for (int t = 0; t < num_triangles(); ++t) s += embedded_area(t);
    return s;
}

std::vector<std::array<int, 2>> TriMesh::edges() const
{
    std::vector<std::array<int, 2>> out;
    out.reserve(3 * triangles_.size());
    for (const auto& T : triangles_)
        for (int k = 0; k < 3; ++k) {
            const int a = T[k], b = T[(k + 1) % 3];
            out.push_back({std::min(a, b), std::max(a, b)});
        }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

int TriMesh::euler_characteristic() const
{
    return num_vertices() - static_cast<int>(edges().size()) + num_triangles();
}

double TriMesh::max_edge_length() const
{
    double m = 0.0;
    for (int t = 0; t < num_triangles(); ++t) {
        const auto e = embedded_triangle(t);
        for (int k = 0; k < 3; ++k) m = std::max(m, (e[(k + 1) % 3] - e[k]).norm());
    }
    return m;
}

double TriMesh::min_angle_deg() const
{
    double m = 180.0;
    for (int t = 0; t < num_triangles(); ++t) {
        const auto e = embedded_triangle(t);
        for (int k = 0; k < 3; ++k)
            m = std::min(m, angle_at(e[k], e[(k + 1) % 3], e[(k + 2) % 3]) * 180.0 / kPi);
    }
    return m;
}

std::vector<int> TriMesh::boundary_vertices() const
{
    std::vector<int> out;
    for (int v = 0; v < num_vertices(); ++v)
        if (boundary_[v]) out.push_back(v);
    return out;
}

namespace {

void reject_slivers(const TriMesh& m, const char* who)
{
    if (m.min_angle_deg() < kMinAngleDeg)
        throw Error(ErrorKind::Assembly, std::string(who) + ": sliver triangle (min angle < 5 deg)");
}

} // namespace

TriMesh gen_rectangle(double half_width, double half_height, int n)
{
    if (n < 2) throw Error(ErrorKind::InvalidInput, "gen_rectangle: invalid resolution n < 2");
    if (!(half_width > 0.0) || !(half_height > 0.0))
        throw Error(ErrorKind::InvalidInput, "gen_rectangle: half extents must be positive");

    const int cells = 2 * n;
    const int side = cells + 1;
    std::vector<Vec2> verts;
    std::vector<char> bnd;
    verts.reserve(side * side);
    // Integer-ratio coordinates keep the axes exactly at 0.
    for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i) {
            const double x = half_width * static_cast<double>(i - n) / n;
            const double y = half_height * static_cast<double>(j - n) / n;
            verts.emplace_back(x, y);
            bnd.push_back(i == 0 || j == 0 || i == cells || j == cells);
        }
    std::vector<TriIndex> tris;
    tris.reserve(2 * cells * cells);
    auto id = [side](int i, int j) { return j * side + i; };
    for (int j = 0; j < cells; ++j)
        for (int i = 0; i < cells; ++i) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            tris.push_back({a, b, c});
            tris.push_back({a, c, d});
        }
    TriMesh m(std::move(verts), std::move(tris), std::move(bnd));
    reject_slivers(m, "gen_rectangle");
    return m;
}

TriMesh gen_disk(double radius, int level)
{
    if (!(radius > 0.0)) throw Error(ErrorKind::InvalidInput, "gen_disk: radius must be positive");
    if (level < 1) throw Error(ErrorKind::InvalidInput, "gen_disk: invalid resolution level < 1");
    if (level > 10) throw Error(ErrorKind::InvalidInput, "gen_disk: level too large");

    const int rings = 1 << level;
    std::vector<Vec2> verts{Vec2::Zero()};
    std::vector<char> bnd{0};
    std::vector<int> ring_start{0};
    for (int k = 1; k <= rings; ++k) {
        ring_start.push_back(static_cast<int>(verts.size()));
        const int count = 6 * k;
        const double r = radius * k / rings;
        // Half-step offset on odd rings avoids aligned spokes.
        const double offset = (k % 2 == 0) ? 0.0 : 0.5;
        for (int j = 0; j < count; ++j) {
            const double th = 2.0 * kPi * (j + offset) / count;
            verts.emplace_back(r * std::cos(th), r * std::sin(th));
            bnd.push_back(k == rings);
        }
    }
    auto angle_of = [&](int k, int j) {
        const int count = (k == 0) ? 1 : 6 * k;
        const double offset = (k % 2 == 0) ? 0.0 : 0.5;
        return 2.0 * kPi * (j + offset) / count;
    };

    std::vector<TriIndex> tris;
    // Innermost ring: fan around the center.
    for (int j = 0; j < 6; ++j) tris.push_back({0, ring_start[1] + j, ring_start[1] + (j + 1) % 6});
    // Zip ring k-1 and ring k by advancing along angle.
    for (int k = 2; k <= rings; ++k) {
        const int ni = 6 * (k - 1), no = 6 * k;
        const int si = ring_start[k - 1], so = ring_start[k];
        int i = 0, o = 0;
        while (i < ni || o < no) {
            const double ai = (i < ni) ? angle_of(k - 1, i + 1) : 1e300;
            const double ao = (o < no) ? angle_of(k, o + 1) : 1e300;
            const int vi = si + i % ni, vo = so + o % no;
            if (ao <= ai) {
                tris.push_back({vi, vo, so + (o + 1) % no});
                ++o;
            } else {
                tris.push_back({vi, vo, si + (i + 1) % ni});
                ++i;
            }
        }
    }
    for (auto& T : tris) {
        if (signed_area(verts[T[0]], verts[T[1]], verts[T[2]]) < 0.0) std::swap(T[1], T[2]);
    }
    TriMesh m(std::move(verts), std::move(tris), std::move(bnd));
    reject_slivers(m, "gen_disk");
    return m;
}

TriMesh gen_hemisphere_chart(double sphere_radius, const TriMesh& base)
{
    if (base.chart().kind != ChartKind::Planar)
        throw Error(ErrorKind::InvalidInput, "gen_hemisphere_chart: base mesh must be planar");
    const StereoChart chart(sphere_radius);
    std::vector<Vec3> emb;
    emb.reserve(base.num_vertices());
    for (const auto& v : base.vertices()) emb.push_back(chart.inverse(v));
    return TriMesh(base.vertices(), base.triangles(), base.boundary_mask(),
                   Chart{ChartKind::StereographicSphere, sphere_radius}, std::move(emb));
}

TriMesh gen_sphere(double radius, int level)
{
    if (!(radius > 0.0)) throw Error(ErrorKind::InvalidInput, "gen_sphere: radius must be positive");
    if (level < 0 || level > 7) throw Error(ErrorKind::InvalidInput, "gen_sphere: level out of range");

    const double g = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> pts = {
        {-1, g, 0}, {1, g, 0}, {-1, -g, 0}, {1, -g, 0},
        {0, -1, g}, {0, 1, g}, {0, -1, -g}, {0, 1, -g},
        {g, 0, -1}, {g, 0, 1}, {-g, 0, -1}, {-g, 0, 1},
    };
    for (auto& p : pts) p.normalize();
    std::vector<TriIndex> tris = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            pts.push_back((pts[a] + pts[b]).normalized());
            const int id = static_cast<int>(pts.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<TriIndex> next;
        next.reserve(4 * tris.size());
        for (const auto& T : tris) {
            const int ab = midpoint(T[0], T[1]), bc = midpoint(T[1], T[2]), ca = midpoint(T[2], T[0]);
            next.push_back({T[0], ab, ca});
            next.push_back({T[1], bc, ab});
            next.push_back({T[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }
    std::vector<Vec2> chart;
    chart.reserve(pts.size());
    for (auto& p : pts) {
        chart.emplace_back(std::atan2(p.y(), p.x()), std::acos(std::clamp(p.z(), -1.0, 1.0)));
        p *= radius;
    }
    for (auto& T : tris) {
        const Vec3 n = (pts[T[1]] - pts[T[0]]).cross(pts[T[2]] - pts[T[0]]);
        if (n.dot(pts[T[0]]) < 0.0) std::swap(T[1], T[2]);
    }
    const auto nv = pts.size();
    return TriMesh(std::move(chart), std::move(tris), std::vector<char>(nv, 0),
                   Chart{ChartKind::ClosedSphere, radius}, std::move(pts));
}

void write_mesh(std::ostream& os, const TriMesh& mesh)
{
    os.precision(17);
    os << "KLMESH 1 " << to_string(mesh.chart().kind);
    if (mesh.chart().kind != ChartKind::Planar) os << ' ' << mesh.chart().radius;
    os << '\n' << "V " << mesh.num_vertices() << '\n';
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        os << mesh.vertices()[v].x() << ' ' << mesh.vertices()[v].y();
        if (mesh.has_embedding()) {
            const Vec3& e = mesh.embedded()[v];
            os << ' ' << e.x() << ' ' << e.y() << ' ' << e.z();
        }
        os << '\n';
    }
    os << "T " << mesh.num_triangles() << '\n';
    for (const auto& T : mesh.triangles()) os << T[0] << ' ' << T[1] << ' ' << T[2] << '\n';
    const auto b = mesh.boundary_vertices();
    os << "B " << b.size() << '\n';
    for (int v : b) os << v << '\n';
}

TriMesh read_mesh(std::istream& is)
{
    auto fail = [](const std::string& msg) { return Error(ErrorKind::IO, "read_mesh: " + msg); };
    std::string line;
    if (!std::getline(is, line)) throw fail("empty input");
    std::istringstream hdr(line);
    std::string magic, kind;
    int version = 0;
    hdr >> magic >> version >> kind;
    if (magic != "KLMESH" || version != 1) throw fail("bad header '" + line + "'");
    Chart chart;
    if (kind == "planar") chart.kind = ChartKind::Planar;
    else if (kind == "stereo") chart.kind = ChartKind::StereographicSphere;
    else if (kind == "sphere") chart.kind = ChartKind::ClosedSphere;
    else throw fail("unknown chart '" + kind + "'");
    if (chart.kind != ChartKind::Planar && !(hdr >> chart.radius)) throw fail("missing radius");

    auto expect = [&](const char* tag) {
        std::string t;
        std::size_t n = 0;
        if (!(is >> t >> n) || t != tag) throw fail(std::string("expected section ") + tag);
        return n;
    };
    const bool emb = chart.kind != ChartKind::Planar;
    const auto nv = expect("V");
    std::vector<Vec2> verts(nv);
    std::vector<Vec3> embedded(emb ? nv : 0);
    for (std::size_t i = 0; i < nv; ++i) {
        if (!(is >> verts[i].x() >> verts[i].y())) throw fail("truncated vertex list");
        if (emb && !(is >> embedded[i].x() >> embedded[i].y() >> embedded[i].z()))
            throw fail("truncated embedded coordinates");
    }
    const auto nt = expect("T");
    std::vector<TriIndex> tris(nt);
    for (auto& T : tris)
        if (!(is >> T[0] >> T[1] >> T[2])) throw fail("truncated triangle list");
    const auto nb = expect("B");
    std::vector<char> bnd(nv, 0);
    for (std::size_t i = 0; i < nb; ++i) {
        std::size_t v = 0;
        if (!(is >> v) || v >= nv) throw fail("bad boundary index");
        bnd[v] = 1;
    }
    return TriMesh(std::move(verts), std::move(tris), std::move(bnd), chart, std::move(embedded));
}

} // namespace krein
