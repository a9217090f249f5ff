#include "krein/measure.hpp"
#include "krein/conformal.hpp"
#include "krein/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace krein {

namespace {

template <class... Ts> struct overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::InvalidInput, msg); }

double region_area(const Region& r)
{
    return std::visit(overloaded{
                          [](const Box& b) { return (b.hi.x() - b.lo.x()) * (b.hi.y() - b.lo.y()); },
                          [](const Disk& d) { return kPi * d.radius * d.radius; },
                      },
                      r);
}

// Orientation of p against the directed line a->b, evaluated in a canonical
// vertex order so both triangles sharing an edge see exactly negated values.
double orient(const Vec2& a, const Vec2& b, const Vec2& p)
{
    const bool swap = (b.x() < a.x()) || (b.x() == a.x() && b.y() < a.y());
    const Vec2& u = swap ? b : a;
    const Vec2& v = swap ? a : b;
    const double o = (v.x() - u.x()) * (p.y() - u.y()) - (v.y() - u.y()) * (p.x() - u.x());
    return swap ? -o : o;
}

// Half-open ownership: a triangle owns the edges whose direction lies in (0, pi].
bool owns_edge(const Vec2& a, const Vec2& b)
{
    const Vec2 e = b - a;
    return e.y() > 0.0 || (e.y() == 0.0 && e.x() < 0.0);
}

bool owns_point(const Tri2& t, const Vec2& p)
{
    for (int k = 0; k < 3; ++k) {
        const Vec2& a = t[k];
        const Vec2& b = t[(k + 1) % 3];
        const double o = orient(a, b, p);
        if (o < 0.0) return false;
        if (o == 0.0 && !owns_edge(a, b)) return false;
    }
    return true;
}

Vec3 lift(const Vec2& p) { return {p.x(), p.y(), 0.0}; }

void check_finite(double v, const Vec2& at)
{
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os.precision(12);
        os << "quadrature: non-finite integrand at (" << at.x() << ", " << at.y() << ")";
        throw Error(ErrorKind::Quadrature, os.str());
    }
}

// --- area -----------------------------------------------------------------

std::vector<Vec2> clip_polygon(std::vector<Vec2> poly, const Vec2& n, double c)
{
    // keep n.x >= c
    std::vector<Vec2> out;
    const std::size_t m = poly.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % m];
        const double da = n.dot(a) - c, db = n.dot(b) - c;
        if (da >= 0.0) out.push_back(a);
        if ((da >= 0.0) != (db >= 0.0)) out.push_back(a + (b - a) * (da / (da - db)));
    }
    return out;
}

void area_nodes(const AreaLebesgue& a, const Element& e, std::vector<MeasureNode>& out)
{
    const Tri2& t = e.chart;
    const double tri_area = signed_area(t);
    auto emit = [&](const Tri2& sub) {
        const double sa = std::abs(signed_area(sub));
        if (sa <= 1e-300) return;
        for (const auto& nd : quad::triangle7()) {
            const Vec2 p = nd.bary[0] * sub[0] + nd.bary[1] * sub[1] + nd.bary[2] * sub[2];
            double w = nd.w * sa * a.density;
            if (a.density_field) {
                const double d = a.density_field(p);
                check_finite(d, p);
                w *= d;
            }
            out.push_back({barycentric(t, p), p, lift(p), w});
        }
    };

    if (const auto* box = std::get_if<Box>(&a.region)) {
        bool inside = true;
        for (const auto& v : t)
            inside = inside && v.x() >= box->lo.x() && v.x() <= box->hi.x() && v.y() >= box->lo.y() &&
                     v.y() <= box->hi.y();
        if (inside) { emit(t); return; }
        std::vector<Vec2> poly(t.begin(), t.end());
        poly = clip_polygon(poly, Vec2(1, 0), box->lo.x());
        poly = clip_polygon(poly, Vec2(-1, 0), -box->hi.x());
        poly = clip_polygon(poly, Vec2(0, 1), box->lo.y());
        poly = clip_polygon(poly, Vec2(0, -1), -box->hi.y());
        for (std::size_t i = 1; i + 1 < poly.size(); ++i) emit({poly[0], poly[i], poly[i + 1]});
        return;
    }
    const auto& disk = std::get<Disk>(a.region);
    const double r2 = disk.radius * disk.radius * (1.0 + 1e-12);
    int n_in = 0;
    for (const auto& v : t) n_in += (v - disk.center).squaredNorm() <= r2;
    if (n_in == 3) { emit(t); return; }
    // Partially covered: split recursively and keep pieces whose centroid is inside.
    std::vector<std::pair<Tri2, int>> stack{{t, 0}};
    while (!stack.empty()) {
        auto [s, lvl] = stack.back();
        stack.pop_back();
        int in = 0;
        for (const auto& v : s) in += (v - disk.center).squaredNorm() <= r2;
        if (in == 3) { emit(s); continue; }
        if (lvl >= 6) {
            const Vec2 c = (s[0] + s[1] + s[2]) / 3.0;
            if ((c - disk.center).squaredNorm() <= r2) emit(s);
            continue;
        }
        const Vec2 m01 = 0.5 * (s[0] + s[1]), m12 = 0.5 * (s[1] + s[2]), m20 = 0.5 * (s[2] + s[0]);
        stack.push_back({{s[0], m01, m20}, lvl + 1});
        stack.push_back({{m01, s[1], m12}, lvl + 1});
        stack.push_back({{m20, m12, s[2]}, lvl + 1});
        stack.push_back({{m01, m12, m20}, lvl + 1});
    }
    (void)tri_area;
}

// Area of the intersection of the disk B(c, r) with an axis-aligned box,
// integrated over the polar angle so the integrand is smooth between breakpoints.
double disk_box_area(const Vec2& c, double r, const Box& b)
{
    if (r <= 0.0) return 0.0;
    auto chord = [&](double th) {
        const double x = c.x() + r * std::sin(th);
        if (x < b.lo.x() || x > b.hi.x()) return 0.0;
        const double h = r * std::cos(th);
        const double lo = std::max(c.y() - h, b.lo.y());
        const double hi = std::min(c.y() + h, b.hi.y());
        return std::max(0.0, hi - lo) * r * std::cos(th);
    };
    std::vector<double> bp{-kPi / 2, kPi / 2};
    for (double xe : {b.lo.x(), b.hi.x()}) {
        const double s = (xe - c.x()) / r;
        if (std::abs(s) < 1.0) bp.push_back(std::asin(s));
    }
    for (double ye : {b.lo.y(), b.hi.y()}) {
        const double s = std::abs(ye - c.y()) / r;
        if (s < 1.0) {
            const double th = std::acos(s);
            bp.push_back(th);
            bp.push_back(-th);
        }
    }
    std::sort(bp.begin(), bp.end());
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i)
        if (bp[i + 1] > bp[i]) s += quad::integrate_1d(chord, bp[i], bp[i + 1], 12, 4);
    return s;
}

double lens_area(double r1, double r2, double d)
{
    if (d >= r1 + r2) return 0.0;
    if (d <= std::abs(r1 - r2)) return kPi * std::pow(std::min(r1, r2), 2);
    const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0));
    const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0));
    return r1 * r1 * (a1 - std::sin(2 * a1) / 2) + r2 * r2 * (a2 - std::sin(2 * a2) / 2);
}

bool in_region(const Region& r, const Vec2& p)
{
    if (const auto* b = std::get_if<Box>(&r))
        return p.x() >= b->lo.x() && p.x() <= b->hi.x() && p.y() >= b->lo.y() && p.y() <= b->hi.y();
    const auto& d = std::get<Disk>(r);
    return (p - d.center).squaredNorm() <= d.radius * d.radius;
}

double area_ball_mass(const AreaLebesgue& a, const Vec2& c, double r)
{
    if (!a.density_field) {
        if (const auto* b = std::get_if<Box>(&a.region)) return a.density * disk_box_area(c, r, *b);
        const auto& d = std::get<Disk>(a.region);
        return a.density * lens_area(r, d.radius, (c - d.center).norm());
    }
    // Variable density: polar Gauss with the region indicator.
    const auto& gl = quad::gauss_legendre(8);
    const int nr = 32, nt = 128;
    double s = 0.0;
    for (int i = 0; i < nr; ++i) {
        const double r0 = r * i / nr, r1 = r * (i + 1) / nr;
        for (const auto& gr : gl) {
            const double rr = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * gr.x;
            for (int j = 0; j < nt; ++j) {
                const double th = 2 * kPi * (j + 0.5) / nt;
                const Vec2 p = c + rr * Vec2(std::cos(th), std::sin(th));
                if (!in_region(a.region, p)) continue;
                s += gr.w * 0.5 * (r1 - r0) * rr * (2 * kPi / nt) * a.density_field(p);
            }
        }
    }
    return a.density * s;
}

double area_total(const AreaLebesgue& a)
{
    if (!a.density_field) return a.density * region_area(a.region);
    const auto& gl = quad::gauss_legendre(8);
    double s = 0.0;
    if (const auto* b = std::get_if<Box>(&a.region)) {
        const int np = 32;
        const double hx = (b->hi.x() - b->lo.x()) / np, hy = (b->hi.y() - b->lo.y()) / np;
        for (int i = 0; i < np; ++i)
            for (int j = 0; j < np; ++j)
                for (const auto& gx : gl)
                    for (const auto& gy : gl) {
                        const Vec2 p(b->lo.x() + hx * (i + 0.5 + 0.5 * gx.x), b->lo.y() + hy * (j + 0.5 + 0.5 * gy.x));
                        s += gx.w * gy.w * 0.25 * hx * hy * a.density_field(p);
                    }
        return a.density * s;
    }
    const auto& d = std::get<Disk>(a.region);
    return area_ball_mass(a, d.center, d.radius);
}

// --- lines ----------------------------------------------------------------

void line_nodes(const LineSegments& ls, const Element& e, std::vector<MeasureNode>& out)
{
    const Tri2& t = e.chart;
    const auto& g3 = quad::gauss_legendre(3);
    for (const auto& s : ls.segments) {
        const Vec2 d = s.q - s.p;
        const double len = d.norm();
        double t0 = 0.0, t1 = 1.0;
        bool keep = true;
        for (int k = 0; k < 3 && keep; ++k) {
            const Vec2& a = t[k];
            const Vec2& b = t[(k + 1) % 3];
            const double o0 = orient(a, b, s.p), o1 = orient(a, b, s.q);
            const double scale = (b - a).norm() * ((s.p - a).norm() + (s.q - a).norm() + (b - a).norm());
            if (std::abs(o0) <= 1e-13 * scale && std::abs(o1) <= 1e-13 * scale) {
                // Segment runs along this edge's line.
                keep = owns_edge(a, b);
                continue;
            }
            if (o0 < 0.0 && o1 < 0.0) { keep = false; break; }
            if (o0 >= 0.0 && o1 >= 0.0) continue;
            const double tc = o0 / (o0 - o1);
            if (o0 < 0.0) t0 = std::max(t0, tc);
            else t1 = std::min(t1, tc);
        }
        if (!keep || t1 - t0 <= 1e-14) continue;
        const double half = 0.5 * (t1 - t0), mid = 0.5 * (t0 + t1);
        for (const auto& g : g3) {
            const Vec2 p = s.p + (mid + half * g.x) * d;
            out.push_back({barycentric(t, p), p, lift(p), s.density * len * half * g.w});
        }
    }
}

double line_ball_mass(const LineSegments& ls, const Vec2& c, double r)
{
    double m = 0.0;
    for (const auto& s : ls.segments) {
        const Vec2 d = s.q - s.p, f = s.p - c;
        const double A = d.squaredNorm(), B = 2 * f.dot(d), C = f.squaredNorm() - r * r;
        const double disc = B * B - 4 * A * C;
        if (disc <= 0.0) continue;
        const double sq = std::sqrt(disc);
        const double lo = std::max(0.0, (-B - sq) / (2 * A)), hi = std::min(1.0, (-B + sq) / (2 * A));
        if (hi > lo) m += s.density * std::sqrt(A) * (hi - lo);
    }
    return m;
}

// Mass of the parameter set {t in [0,1] : pred(t)} for a segment, by sampling and bisection.
template <class Pred>
double measure_of_set(Pred&& inside, double len_density)
{
    const int n = 512;
    double total = 0.0;
    double prev_t = 0.0;
    bool prev_in = inside(0.0);
    double start = prev_in ? 0.0 : -1.0;
    auto refine = [&](double a, double b, bool a_in) {
        for (int it = 0; it < 60; ++it) {
            const double m = 0.5 * (a + b);
            if (inside(m) == a_in) a = m; else b = m;
        }
        return 0.5 * (a + b);
    };
    for (int i = 1; i <= n; ++i) {
        const double tt = static_cast<double>(i) / n;
        const bool in = inside(tt);
        if (in != prev_in) {
            const double x = refine(prev_t, tt, prev_in);
            if (in) start = x;
            else total += x - start;
        }
        prev_t = tt;
        prev_in = in;
    }
    if (prev_in) total += 1.0 - start;
    return total * len_density;
}

// --- IFS ------------------------------------------------------------------

void ifs_nodes(const SelfSimilarIFS& f, const Element& e, std::vector<MeasureNode>& out)
{
    const Tri2& t = e.chart;
    Vec2 lo = t[0].cwiseMin(t[1]).cwiseMin(t[2]);
    Vec2 hi = t[0].cwiseMax(t[1]).cwiseMax(t[2]);
    thread_local std::vector<int> idx;
    idx.clear();
    f.leaves->query(lo, hi, idx);
    for (int i : idx) {
        const auto& lf = f.leaves->leaves()[i];
        if (owns_point(t, lf.x)) out.push_back({barycentric(t, lf.x), lf.x, lift(lf.x), lf.w});
    }
}

// --- sphere surface ---------------------------------------------------------

void sphere_nodes(const SphereSurface& s, const Element& e, std::vector<MeasureNode>& out)
{
    const auto& v = e.embedded;
    const Vec3 nrm = (v[1] - v[0]).cross(v[2] - v[0]);
    const double flat = 0.5 * nrm.norm();
    const Vec3 n = nrm.normalized();
    const double R = s.radius;
    for (const auto& nd : quad::triangle7()) {
        const Vec3 p = nd.bary[0] * v[0] + nd.bary[1] * v[1] + nd.bary[2] * v[2];
        const double pn = p.norm();
        // Radial projection onto the sphere: dA = R^2 (p.n)/|p|^3 dA_flat.
        const double jac = R * R * std::abs(p.dot(n)) / (pn * pn * pn);
        const Vec2 c = nd.bary[0] * e.chart[0] + nd.bary[1] * e.chart[1] + nd.bary[2] * e.chart[2];
        out.push_back({Eigen::Vector3d(nd.bary[0], nd.bary[1], nd.bary[2]), c, p * (R / pn), nd.w * flat * jac});
    }
}

// Geodesic-ball membership on the sphere of radius R.
bool in_geodesic_ball(const Vec3& x, const Vec3& c, double R, double delta)
{
    const double cosang = std::clamp(x.dot(c) / (x.norm() * c.norm()), -1.0, 1.0);
    return R * std::acos(cosang) < delta;
}

double pushed_ball_mass(const MeasureSpec& base, const Vec3& center, double delta, double R);

} // namespace

// --- AffineMap / IfsLeaves ------------------------------------------------------

double AffineMap::ratio() const
{
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(A);
    return svd.singularValues()(0);
}

IfsLeaves::IfsLeaves(const std::vector<AffineMap>& maps, const std::vector<double>& probs, int depth,
                     double mass)
{
    // Barycenter of the invariant measure: c = sum p_i S_i(c).
    Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
    Vec2 rhs = Vec2::Zero();
    for (std::size_t i = 0; i < maps.size(); ++i) {
        M -= probs[i] * maps[i].A;
        rhs += probs[i] * maps[i].b;
    }
    const Vec2 c = M.partialPivLu().solve(rhs);

    struct Cell {
        Eigen::Matrix2d A;
        Vec2 b;
        double w;
    };
    std::vector<Cell> level{{Eigen::Matrix2d::Identity(), Vec2::Zero(), mass}};
    for (int d = 0; d < depth; ++d) {
        std::vector<Cell> next;
        next.reserve(level.size() * maps.size());
        for (const auto& cell : level)
            for (std::size_t i = 0; i < maps.size(); ++i) {
                if (probs[i] == 0.0) continue;
                next.push_back({cell.A * maps[i].A, cell.A * maps[i].b + cell.b, cell.w * probs[i]});
            }
        level = std::move(next);
    }
    leaves_.reserve(level.size());
    for (const auto& cell : level) leaves_.push_back({cell.A * c + cell.b, cell.w});

    lo_ = hi_ = leaves_.front().x;
    for (const auto& l : leaves_) {
        lo_ = lo_.cwiseMin(l.x);
        hi_ = hi_.cwiseMax(l.x);
    }
    const double n = static_cast<double>(leaves_.size());
    const Vec2 ext = (hi_ - lo_).cwiseMax(1e-12);
    const int cells = std::max(1, static_cast<int>(std::sqrt(n / 4.0)));
    nx_ = (ext.x() >= ext.y()) ? cells : std::max(1, static_cast<int>(cells * ext.x() / ext.y()));
    ny_ = (ext.y() >= ext.x()) ? cells : std::max(1, static_cast<int>(cells * ext.y() / ext.x()));
    if (hi_.x() - lo_.x() < 1e-12) nx_ = 1;
    if (hi_.y() - lo_.y() < 1e-12) ny_ = 1;
    auto cell_of = [&](const Vec2& p) {
        const int ix = std::clamp(static_cast<int>((p.x() - lo_.x()) / ext.x() * nx_), 0, nx_ - 1);
        const int iy = std::clamp(static_cast<int>((p.y() - lo_.y()) / ext.y() * ny_), 0, ny_ - 1);
        return iy * nx_ + ix;
    };
    cell_start_.assign(nx_ * ny_ + 1, 0);
    for (const auto& l : leaves_) ++cell_start_[cell_of(l.x) + 1];
    std::partial_sum(cell_start_.begin(), cell_start_.end(), cell_start_.begin());
    cell_items_.resize(leaves_.size());
    std::vector<int> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (int i = 0; i < static_cast<int>(leaves_.size()); ++i) cell_items_[fill[cell_of(leaves_[i].x)]++] = i;
}

void IfsLeaves::query(const Vec2& lo, const Vec2& hi, std::vector<int>& out) const
{
    if (hi.x() < lo_.x() || hi.y() < lo_.y() || lo.x() > hi_.x() || lo.y() > hi_.y()) return;
    const Vec2 ext = (hi_ - lo_).cwiseMax(1e-12);
    const int x0 = std::clamp(static_cast<int>((lo.x() - lo_.x()) / ext.x() * nx_), 0, nx_ - 1);
    const int x1 = std::clamp(static_cast<int>((hi.x() - lo_.x()) / ext.x() * nx_), 0, nx_ - 1);
    const int y0 = std::clamp(static_cast<int>((lo.y() - lo_.y()) / ext.y() * ny_), 0, ny_ - 1);
    const int y1 = std::clamp(static_cast<int>((hi.y() - lo_.y()) / ext.y() * ny_), 0, ny_ - 1);
    for (int iy = y0; iy <= y1; ++iy)
        for (int ix = x0; ix <= x1; ++ix) {
            const int c = iy * nx_ + ix;
            for (int k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
                const Vec2& p = leaves_[cell_items_[k]].x;
                if (p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y())
                    out.push_back(cell_items_[k]);
            }
        }
}

// --- MeasureSpec ------------------------------------------------------------------

MeasureSpec::MeasureSpec(Variant v) : v_(std::move(v))
{
    std::visit(overloaded{
                   [&](const AreaLebesgue& a) {
                       if (!(a.density > 0.0) || !std::isfinite(a.density))
                           invalid("area measure: density must be positive and finite");
                       if (const auto* b = std::get_if<Box>(&a.region)) {
                           if (!(b->hi.x() > b->lo.x() && b->hi.y() > b->lo.y()))
                               invalid("area measure: empty box");
                       } else if (!(std::get<Disk>(a.region).radius > 0.0)) {
                           invalid("area measure: disk radius must be positive");
                       }
                   },
                   [&](const LineSegments& l) {
                       if (l.segments.empty()) invalid("line measure: no segments");
                       for (const auto& s : l.segments) {
                           if (!((s.q - s.p).norm() > 0.0)) invalid("line measure: zero-length segment");
                           if (!(s.density >= 0.0) || !std::isfinite(s.density))
                               invalid("line measure: density must be non-negative and finite");
                       }
                   },
                   [&](const SelfSimilarIFS& f) {
                       if (f.maps.empty() || f.maps.size() != f.probs.size())
                           invalid("IFS measure: maps and probabilities must match");
                       const double ps = std::accumulate(f.probs.begin(), f.probs.end(), 0.0);
                       if (std::abs(ps - 1.0) > 1e-12) invalid("IFS measure: probabilities must sum to 1");
                       for (double p : f.probs)
                           if (p < 0.0) invalid("IFS measure: negative probability");
                       for (const auto& m : f.maps) {
                           const double r = m.ratio();
                           if (!(r > 0.0 && r < 1.0)) invalid("IFS measure: contraction ratio must lie in (0,1)");
                       }
                       if (f.depth < 0) invalid("IFS measure: negative depth");
                       if (!(f.mass > 0.0)) invalid("IFS measure: mass must be positive");
                       if (!f.leaves) invalid("IFS measure: build with make_ifs");
                   },
                   [&](const SphereSurface& s) {
                       if (!(s.radius > 0.0)) invalid("sphere measure: radius must be positive");
                       space_ = SpaceKind::ClosedSphere;
                       radius_ = s.radius;
                   },
                   [&](const SumMeasure& s) {
                       if (s.parts.empty()) invalid("sum measure: no parts");
                       space_ = s.parts.front().space();
                       radius_ = s.parts.front().sphere_radius();
                       for (const auto& p : s.parts)
                           if (p.space() != space_ || p.sphere_radius() != radius_)
                               invalid("sum measure: parts live on different charts");
                   },
                   [&](const Pushforward& p) {
                       if (!p.base) invalid("pushforward: missing base");
                       if (p.direction == PushDirection::DiskToSphere) {
                           if (p.base->space() != SpaceKind::Plane)
                               throw Error(ErrorKind::Domain, "pushforward: disk->sphere needs a planar base");
                           space_ = SpaceKind::StereoSphere;
                           radius_ = p.sphere_radius;
                       } else {
                           if (p.base->space() != SpaceKind::StereoSphere)
                               throw Error(ErrorKind::Domain, "pushforward: sphere->disk needs a hemisphere base");
                           space_ = SpaceKind::Plane;
                       }
                   },
               },
               v_);
    const double m = total_mass(*this);
    if (!(m > 0.0) || !std::isfinite(m)) invalid("measure: total mass must be finite and positive");
}

MeasureSpec make_area(Region region, double density, Field density_field)
{
    return MeasureSpec(AreaLebesgue{region, density, std::move(density_field)});
}

MeasureSpec make_lines(std::vector<Segment> segments) { return MeasureSpec(LineSegments{std::move(segments)}); }

MeasureSpec make_ifs(std::vector<AffineMap> maps, std::vector<double> probs, int depth, double mass)
{
    if (maps.empty() || maps.size() != probs.size()) invalid("IFS measure: maps and probabilities must match");
    if (depth < 0) invalid("IFS measure: negative depth");
    const double leaves = std::pow(static_cast<double>(maps.size()), depth);
    if (leaves > 4.2e6) invalid("IFS measure: depth too large for leaf quadrature");
    SelfSimilarIFS f{maps, probs, depth, mass, nullptr};
    for (double p : probs)
        if (p < 0.0) invalid("IFS measure: negative probability");
    f.leaves = std::make_shared<const IfsLeaves>(maps, probs, depth, mass);
    return MeasureSpec(std::move(f));
}

MeasureSpec make_sphere_surface(double radius) { return MeasureSpec(SphereSurface{radius}); }

MeasureSpec make_sum(std::vector<MeasureSpec> parts) { return MeasureSpec(SumMeasure{std::move(parts)}); }

MeasureSpec make_cross(double a, double b, double density)
{
    return make_lines({{Vec2(-a, 0), Vec2(a, 0), density}, {Vec2(0, -b), Vec2(0, b), density}});
}

MeasureSpec make_cantor(int depth)
{
    Eigen::Matrix2d A = Eigen::Matrix2d::Identity() / 3.0;
    return make_ifs({{A, Vec2(0, 0)}, {A, Vec2(2.0 / 3.0, 0)}}, {0.5, 0.5}, depth);
}

Element planar_element(const Tri2& t)
{
    return {t, {lift(t[0]), lift(t[1]), lift(t[2])}};
}

void element_nodes(const MeasureSpec& m, const Element& e, std::vector<MeasureNode>& out)
{
    std::visit(overloaded{
                   [&](const AreaLebesgue& a) { area_nodes(a, e, out); },
                   [&](const LineSegments& l) { line_nodes(l, e, out); },
                   [&](const SelfSimilarIFS& f) { ifs_nodes(f, e, out); },
                   [&](const SphereSurface& s) { sphere_nodes(s, e, out); },
                   [&](const SumMeasure& s) {
                       for (const auto& p : s.parts) element_nodes(p, e, out);
                   },
                   [&](const Pushforward& p) {
                       const std::size_t first = out.size();
                       element_nodes(*p.base, e, out);
                       if (p.direction == PushDirection::DiskToSphere) {
                           const StereoChart chart(p.sphere_radius);
                           for (std::size_t i = first; i < out.size(); ++i) out[i].space = chart.inverse(out[i].chart);
                       } else {
                           for (std::size_t i = first; i < out.size(); ++i) out[i].space = lift(out[i].chart);
                       }
                   },
               },
               m.variant());
}

double total_mass(const MeasureSpec& m)
{
    return std::visit(overloaded{
                          [](const AreaLebesgue& a) { return area_total(a); },
                          [](const LineSegments& l) {
                              double s = 0.0;
                              for (const auto& seg : l.segments) s += seg.density * (seg.q - seg.p).norm();
                              return s;
                          },
                          [](const SelfSimilarIFS& f) { return f.mass; },
                          [](const SphereSurface& s) { return 4.0 * kPi * s.radius * s.radius; },
                          [](const SumMeasure& s) {
                              double t = 0.0;
                              for (const auto& p : s.parts) t += total_mass(p);
                              return t;
                          },
                          [](const Pushforward& p) { return total_mass(*p.base); },
                      },
                      m.variant());
}

double integrate_on_element(const MeasureSpec& m, const Field& f, const Element& e)
{
    thread_local std::vector<MeasureNode> nodes;
    nodes.clear();
    element_nodes(m, e, nodes);
    double s = 0.0;
    for (const auto& nd : nodes) {
        const double v = f(nd.chart);
        check_finite(v, nd.chart);
        s += nd.w * v;
    }
    return s;
}

double integrate_on_element(const MeasureSpec& m, const Field& f, const Tri2& tri)
{
    return integrate_on_element(m, f, planar_element(tri));
}

std::vector<MeasureNode> global_nodes(const MeasureSpec& m, int resolution)
{
    std::vector<MeasureNode> out;
    const auto& g = quad::gauss_legendre(4);
    const Eigen::Vector3d nob = Eigen::Vector3d::Zero();
    std::visit(overloaded{
                   [&](const AreaLebesgue& a) {
                       auto push = [&](const Vec2& p, double w) {
                           if (a.density_field) w *= a.density_field(p);
                           out.push_back({nob, p, lift(p), w * a.density});
                       };
                       if (const auto* b = std::get_if<Box>(&a.region)) {
                           const double hx = (b->hi.x() - b->lo.x()) / resolution;
                           const double hy = (b->hi.y() - b->lo.y()) / resolution;
                           for (int j = 0; j < resolution; ++j)
                               for (const auto& gy : g)
                                   for (int i = 0; i < resolution; ++i)
                                       for (const auto& gx : g) {
                                           const Vec2 p(b->lo.x() + hx * (i + 0.5 + 0.5 * gx.x),
                                                        b->lo.y() + hy * (j + 0.5 + 0.5 * gy.x));
                                           push(p, 0.25 * hx * hy * gx.w * gy.w);
                                       }
                       } else {
                           const auto& d = std::get<Disk>(a.region);
                           const int nt = 4 * resolution;
                           for (int i = 0; i < resolution; ++i)
                               for (const auto& gr : g) {
                                   const double hr = d.radius / resolution;
                                   const double r = hr * (i + 0.5 + 0.5 * gr.x);
                                   for (int j = 0; j < nt; ++j) {
                                       const double th = 2 * kPi * (j + 0.5) / nt;
                                       push(d.center + r * Vec2(std::cos(th), std::sin(th)),
                                            0.5 * hr * gr.w * r * 2 * kPi / nt);
                                   }
                               }
                       }
                   },
                   [&](const LineSegments& l) {
                       for (const auto& s : l.segments) {
                           const double len = (s.q - s.p).norm();
                           for (int i = 0; i < resolution; ++i)
                               for (const auto& gp : g) {
                                   const double t = (i + 0.5 + 0.5 * gp.x) / resolution;
                                   const Vec2 p = s.p + t * (s.q - s.p);
                                   out.push_back({nob, p, lift(p), s.density * len * 0.5 * gp.w / resolution});
                               }
                       }
                   },
                   [&](const SelfSimilarIFS& f) {
                       for (const auto& l : f.leaves->leaves()) out.push_back({nob, l.x, lift(l.x), l.w});
                   },
                   [&](const SphereSurface& s) {
                       // Gauss in cos(polar angle), uniform in azimuth.
                       const int nt = 4 * resolution;
                       for (int i = 0; i < resolution; ++i)
                           for (const auto& gz : g) {
                               const double z = -1.0 + (2.0 / resolution) * (i + 0.5 + 0.5 * gz.x);
                               const double rho = std::sqrt(std::max(0.0, 1 - z * z));
                               for (int j = 0; j < nt; ++j) {
                                   const double ph = 2 * kPi * (j + 0.5) / nt;
                                   const Vec3 p = s.radius * Vec3(rho * std::cos(ph), rho * std::sin(ph), z);
                                   out.push_back({nob, Vec2(ph, std::acos(z)), p,
                                                  s.radius * s.radius * gz.w / resolution * 2 * kPi / nt});
                               }
                           }
                   },
                   [&](const SumMeasure& s) {
                       for (const auto& p : s.parts) {
                           auto part = global_nodes(p, resolution);
                           out.insert(out.end(), part.begin(), part.end());
                       }
                   },
                   [&](const Pushforward& p) {
                       out = global_nodes(*p.base, resolution);
                       if (p.direction == PushDirection::DiskToSphere) {
                           const StereoChart chart(p.sphere_radius);
                           for (auto& nd : out) nd.space = chart.inverse(nd.chart);
                       } else {
                           for (auto& nd : out) nd.space = lift(nd.chart);
                       }
                   },
               },
               m.variant());
    return out;
}

namespace {

double pushed_ball_mass(const MeasureSpec& base, const Vec3& center, double delta, double R)
{
    const StereoChart chart(R);
    const Vec3 c = center.normalized() * R;
    return std::visit(
        overloaded{
            [&](const AreaLebesgue& a) {
                // The preimage of a spherical cap is a planar disk (or its complement).
                const double alpha = delta / R;
                if (alpha >= kPi) return area_total(a);
                const double cosa = std::cos(alpha);
                const double A = R * c.z() + R * R * cosa;
                const Vec2 c12(c.x(), c.y());
                if (std::abs(A) < 1e-14) {
                    // Degenerate (half-plane); nudge the radius.
                    return pushed_ball_mass(base, center, delta * (1 - 1e-12), R);
                }
                const Vec2 y0 = R * R * c12 / A;
                const double rho2 = (R * R * R * c.z() - R * R * R * R * cosa) / A + y0.squaredNorm();
                const double rho = std::sqrt(std::max(0.0, rho2));
                if (A > 0.0) return area_ball_mass(a, y0, rho);
                return area_total(a) - area_ball_mass(a, y0, rho);
            },
            [&](const LineSegments& l) {
                double m = 0.0;
                for (const auto& s : l.segments) {
                    const double len = (s.q - s.p).norm();
                    m += measure_of_set(
                        [&](double t) { return in_geodesic_ball(chart.inverse(s.p + t * (s.q - s.p)), c, R, delta); },
                        s.density * len);
                }
                return m;
            },
            [&](const SelfSimilarIFS& f) {
                double m = 0.0;
                for (const auto& lf : f.leaves->leaves())
                    if (in_geodesic_ball(chart.inverse(lf.x), c, R, delta)) m += lf.w;
                return m;
            },
            [&](const SphereSurface&) -> double {
                throw Error(ErrorKind::Domain, "ball_mass: sphere-surface base inside a stereographic pushforward");
            },
            [&](const SumMeasure& s) {
                double m = 0.0;
                for (const auto& p : s.parts) m += pushed_ball_mass(p, center, delta, R);
                return m;
            },
            [&](const Pushforward& p) {
                if (p.direction == PushDirection::SphereToDisk) return pushed_ball_mass(*p.base, center, delta, R);
                throw Error(ErrorKind::Domain, "ball_mass: nested disk->sphere pushforward");
            },
        },
        base.variant());
}

} // namespace

double ball_mass(const MeasureSpec& m, const Vec3& center, double delta)
{
    if (!(delta > 0.0)) invalid("ball_mass: delta must be positive");
    const Vec2 c2(center.x(), center.y());
    return std::visit(
        overloaded{
            [&](const AreaLebesgue& a) { return area_ball_mass(a, c2, delta); },
            [&](const LineSegments& l) { return line_ball_mass(l, c2, delta); },
            [&](const SelfSimilarIFS& f) {
                double s = 0.0;
                thread_local std::vector<int> idx;
                idx.clear();
                f.leaves->query(c2 - Vec2::Constant(delta), c2 + Vec2::Constant(delta), idx);
                for (int i : idx) {
                    const auto& lf = f.leaves->leaves()[i];
                    if ((lf.x - c2).squaredNorm() < delta * delta) s += lf.w;
                }
                return s;
            },
            [&](const SphereSurface& s) {
                const double a = std::min(delta / s.radius, kPi);
                return 2.0 * kPi * s.radius * s.radius * (1.0 - std::cos(a));
            },
            [&](const SumMeasure& s) {
                double t = 0.0;
                for (const auto& p : s.parts) t += ball_mass(p, center, delta);
                return t;
            },
            [&](const Pushforward& p) {
                if (p.direction == PushDirection::DiskToSphere)
                    return pushed_ball_mass(*p.base, center, delta, p.sphere_radius);
                // Planar ball of the image of a hemisphere measure.
                const auto* inner = p.base->as<Pushforward>();
                if (inner && inner->direction == PushDirection::DiskToSphere)
                    return ball_mass(*inner->base, center, delta);
                if (const auto* s = p.base->as<SumMeasure>()) {
                    double t = 0.0;
                    for (const auto& part : s->parts)
                        t += ball_mass(MeasureSpec(Pushforward{std::make_shared<const MeasureSpec>(part),
                                                               PushDirection::SphereToDisk, p.sphere_radius}),
                                       center, delta);
                    return t;
                }
                throw Error(ErrorKind::Domain, "ball_mass: unsupported sphere->disk base");
            },
        },
        m.variant());
}

std::vector<double> dyadic_grid(int kmin, int kmax)
{
    std::vector<double> g;
    for (int k = kmin; k <= kmax; ++k) g.push_back(std::ldexp(1.0, -k));
    return g;
}

std::vector<Vec3> default_centers(const MeasureSpec& m)
{
    std::vector<Vec3> out;
    std::visit(overloaded{
                   [&](const AreaLebesgue& a) {
                       const int n = 33;
                       if (const auto* b = std::get_if<Box>(&a.region)) {
                           for (int j = 0; j < n; ++j)
                               for (int i = 0; i < n; ++i)
                                   out.push_back(lift(Vec2(b->lo.x() + (b->hi.x() - b->lo.x()) * (i + 0.5) / n,
                                                           b->lo.y() + (b->hi.y() - b->lo.y()) * (j + 0.5) / n)));
                       } else {
                           const auto& d = std::get<Disk>(a.region);
                           for (int j = 0; j < n; ++j)
                               for (int i = 0; i < n; ++i) {
                                   const Vec2 p = d.center + d.radius * Vec2(-1 + 2.0 * (i + 0.5) / n, -1 + 2.0 * (j + 0.5) / n);
                                   if ((p - d.center).norm() < d.radius) out.push_back(lift(p));
                               }
                       }
                   },
                   [&](const LineSegments& l) {
                       const int n = 65;
                       for (const auto& s : l.segments)
                           for (int i = 0; i < n; ++i) out.push_back(lift(s.p + (s.q - s.p) * (double(i) / (n - 1))));
                   },
                   [&](const SelfSimilarIFS& f) {
                       const auto& lv = f.leaves->leaves();
                       const std::size_t stride = std::max<std::size_t>(1, lv.size() / 4096);
                       for (std::size_t i = 0; i < lv.size(); i += stride) out.push_back(lift(lv[i].x));
                   },
                   [&](const SphereSurface& s) {
                       out.push_back(Vec3(0, 0, s.radius));
                       out.push_back(Vec3(s.radius, 0, 0));
                   },
                   [&](const SumMeasure& s) {
                       for (const auto& p : s.parts) {
                           auto c = default_centers(p);
                           out.insert(out.end(), c.begin(), c.end());
                       }
                   },
                   [&](const Pushforward& p) {
                       out = default_centers(*p.base);
                       if (p.direction == PushDirection::DiskToSphere) {
                           const StereoChart chart(p.sphere_radius);
                           for (auto& c : out) c = chart.inverse(Vec2(c.x(), c.y()));
                       } else {
                           const StereoChart chart(p.sphere_radius);
                           for (auto& c : out) {
                               const Vec2 y = chart.forward(c);
                               c = lift(y);
                           }
                       }
                   },
               },
               m.variant());
    return out;
}

DimEstimate estimate_dim_infinity(const MeasureSpec& m, std::vector<double> delta_grid,
                                  const std::vector<Vec3>& centers, Exec exec)
{
    if (centers.empty()) invalid("estimate_dim_infinity: empty center set");
    if (delta_grid.size() < 4) invalid("estimate_dim_infinity: need at least 4 delta values");
    std::sort(delta_grid.begin(), delta_grid.end());
    if (!(delta_grid.front() > 0.0)) invalid("estimate_dim_infinity: deltas must be positive");

    DimEstimate est;
    const int nc = static_cast<int>(centers.size());
    for (double d : delta_grid) {
        double best = 0.0;
        if (exec == Exec::Parallel) {
#pragma omp parallel for reduction(max : best) schedule(dynamic, 16)
            for (int i = 0; i < nc; ++i) best = std::max(best, ball_mass(m, centers[i], d));
        } else {
            for (int i = 0; i < nc; ++i) best = std::max(best, ball_mass(m, centers[i], d));
        }
        if (!(best > 0.0)) invalid("estimate_dim_infinity: centers miss the support at delta " + std::to_string(d));
        est.table.emplace_back(d, best);
    }
    const std::size_t nfit = std::min<std::size_t>(5, est.table.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < nfit; ++i) {
        const double x = std::log(est.table[i].first), y = std::log(est.table[i].second);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(nfit);
    est.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    est.intercept = (sy - est.slope * sx) / n;
    est.delta_range = {est.table.front().first, est.table[nfit - 1].first};
    return est;
}

} // namespace krein
