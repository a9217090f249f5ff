#include "krein/green.hpp"
#include "krein/interpolate.hpp"
#include "krein/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <random>
#include <sstream>

namespace krein {

namespace {

constexpr double kInv4Pi = 1.0 / (4.0 * kPi);

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void diagonal()
{
    throw Error(ErrorKind::InvalidInput, "kernel_eval: x = y (diagonal singularity)");
}

void check_planar(const GreenKernel& k, const Vec3& x)
{
    if (!in_domain(k, x)) {
        std::ostringstream os;
        os << "kernel_eval: point (" << x.x() << ", " << x.y() << ") outside " << describe(k);
        throw Error(ErrorKind::Domain, os.str());
    }
}

double disk_eval(const DiskDirichlet& d, const Vec2& x, const Vec2& y)
{
    const double R2 = d.radius * d.radius;
    const double d2 = (x - y).squaredNorm();
    if (d2 == 0.0) diagonal();
    // |x|^2|y|^2 - 2R^2 x.y + R^4 = R^2|x-y|^2 + (R^2-|x|^2)(R^2-|y|^2)
    const double ex = std::max(0.0, R2 - x.squaredNorm()), ey = std::max(0.0, R2 - y.squaredNorm());
    return kInv4Pi * std::log1p(ex * ey / (R2 * d2));
}

// sin(m*theta) for m = 1..n by the three-term recurrence.
void sines(double theta, int n, double* out)
{
    const double c2 = 2.0 * std::cos(theta);
    double prev = 0.0, cur = std::sin(theta);
    for (int m = 0; m < n; ++m) {
        out[m] = cur;
        const double next = c2 * cur - prev;
        prev = cur;
        cur = next;
    }
}

double rect_theta(double x, double half) { return kPi * (x + half) / (2.0 * half); }

double rect_lambda(const RectangleDirichlet& r, int m, int n)
{
    return 0.25 * kPi * kPi * (double(m * m) / (r.half_width * r.half_width) +
                               double(n * n) / (r.half_height * r.half_height));
}

double rect_series(const RectangleDirichlet& r, const Vec2& x, const Vec2& y)
{
    if ((x - y).squaredNorm() == 0.0) diagonal();
    const int N = r.series_terms;
    std::vector<double> a(N), b(N), c(N), d(N);
    sines(rect_theta(x.x(), r.half_width), N, a.data());
    sines(rect_theta(y.x(), r.half_width), N, b.data());
    sines(rect_theta(x.y(), r.half_height), N, c.data());
    sines(rect_theta(y.y(), r.half_height), N, d.data());
    double s = 0.0;
    for (int m = 0; m < N; ++m) {
        const double sx = a[m] * b[m];
        double row = 0.0;
        for (int n = 0; n < N; ++n) row += c[n] * d[n] / rect_lambda(r, m + 1, n + 1);
        s += sx * row;
    }
    return s / (r.half_width * r.half_height);
}

double sphere_eval(const SphereClosed& s, const Vec3& x, const Vec3& y)
{
    const double nx = x.norm(), ny = y.norm();
    const double tol = 1e-9 * s.radius;
    if (std::abs(nx - s.radius) > tol || std::abs(ny - s.radius) > tol)
        throw Error(ErrorKind::Domain, "kernel_eval: point off the sphere of radius " + std::to_string(s.radius));
    const double c2 = (x / nx - y / ny).squaredNorm();
    if (c2 == 0.0) diagonal();
    return kInv4Pi * (std::log(4.0 / c2) - 1.0);
}

} // namespace

std::string describe(const GreenKernel& k)
{
    std::ostringstream os;
    std::visit(overloaded{
                   [&](const DiskDirichlet& d) { os << "disk(R=" << d.radius << ")"; },
                   [&](const RectangleDirichlet& r) {
                       os << "rectangle(" << 2 * r.half_width << "x" << 2 * r.half_height << " N=" << r.series_terms
                          << ")";
                   },
                   [&](const SphereClosed& s) { os << "sphere(R=" << s.radius << ")"; },
               },
               k);
    return os.str();
}

bool is_dirichlet(const GreenKernel& k) { return !std::holds_alternative<SphereClosed>(k); }

bool in_domain(const GreenKernel& k, const Vec3& x)
{
    return std::visit(overloaded{
                          [&](const DiskDirichlet& d) {
                              return x.head<2>().norm() <= d.radius * (1.0 + 1e-12);
                          },
                          [&](const RectangleDirichlet& r) {
                              return std::abs(x.x()) <= r.half_width * (1.0 + 1e-12) &&
                                     std::abs(x.y()) <= r.half_height * (1.0 + 1e-12);
                          },
                          [&](const SphereClosed& s) { return std::abs(x.norm() - s.radius) <= 1e-9 * s.radius; },
                      },
                      k);
}

double kernel_eval(const GreenKernel& k, const Vec3& x, const Vec3& y)
{
    return std::visit(overloaded{
                          [&](const DiskDirichlet& d) {
                              check_planar(k, x);
                              check_planar(k, y);
                              return disk_eval(d, x.head<2>(), y.head<2>());
                          },
                          [&](const RectangleDirichlet& r) {
                              check_planar(k, x);
                              check_planar(k, y);
                              return rect_series(r, x.head<2>(), y.head<2>());
                          },
                          [&](const SphereClosed& s) { return sphere_eval(s, x, y); },
                      },
                      k);
}

double rectangle_kernel_images(const RectangleDirichlet& r, const Vec2& x, const Vec2& y)
{
    const double a = r.half_width, b = r.half_height;
    const double X = x.x() + a, Xp = y.x() + a, Y = x.y() + b, Yp = y.y() + b;
    const double k = kPi / (2.0 * a);
    const double sa = std::sin(0.5 * k * (X - Xp)), sb = std::sin(0.5 * k * (X + Xp));
    // Strip kernel (Dirichlet at X = 0, 2a; unbounded in Y):
    // (1/4pi) ln[(cosh s - cos beta) / (cosh s - cos alpha)].
    auto strip = [&](double dy) {
        const double sh = std::sinh(0.5 * k * dy);
        const double den = sh * sh + sa * sa;
        const double num = sh * sh + sb * sb;
        if (den == 0.0) diagonal();
        return kInv4Pi * std::log1p((num - den) / den);
    };
    const int J = static_cast<int>(std::ceil(40.0 * a / (2.0 * kPi * b))) + 2;
    double s = 0.0;
    for (int j = -J; j <= J; ++j) {
        s += strip(Y - (Yp + 4.0 * b * j));
        s -= strip(Y - (-Yp + 4.0 * b * j));
    }
    return s;
}

double rectangle_series_tail(const RectangleDirichlet& r)
{
    // Dropped modes inside an 8N x 8N block, plus an integral bound for the rest.
    const int N = r.series_terms, L = 8 * N;
    double dropped = 0.0;
    for (int m = 1; m <= L; ++m)
        for (int n = 1; n <= L; ++n) {
            if (m <= N && n <= N) continue;
            const double l = rect_lambda(r, m, n);
            dropped += 1.0 / (l * l);
        }
    // Modes beyond the L x L block: int over |k| > L of 1/lambda^2 in the quarter plane.
    const double c = 0.25 * kPi * kPi / std::max(r.half_width, r.half_height) / std::max(r.half_width, r.half_height);
    dropped += (kPi / 2.0) / (2.0 * c * c * L * L);
    return std::sqrt(dropped);
}

BumpProfile bump_profile(double t)
{
    t = std::abs(t);
    if (t >= 1.0) return {0.0, 0.0, 0.0};
    const double q = 1.0 - t * t;
    const double v = std::exp(1.0 - 1.0 / q);
    const double q2 = q * q;
    return {v, -2.0 * t * v / q2, -2.0 * v / q2 + 4.0 * t * t * v / (q2 * q2) - 8.0 * t * t * v / (q2 * q)};
}

namespace {

// psi'(t)/t, finite at t = 0.
double bump_dt_over_t(double t)
{
    if (std::abs(t) >= 1.0) return 0.0;
    const double q = 1.0 - t * t;
    return -2.0 * std::exp(1.0 - 1.0 / q) / (q * q);
}

double geodesic_angle(const Vec3& u, const Vec3& v) { return std::atan2(u.cross(v).norm(), u.dot(v)); }

// Orthonormal tangent frame at the unit vector p; e1 points toward `toward` when possible.
std::pair<Vec3, Vec3> tangent_frame(const Vec3& p, const Vec3& toward)
{
    Vec3 e1 = toward - toward.dot(p) * p;
    if (e1.norm() < 1e-12) {
        e1 = std::abs(p.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
        e1 -= e1.dot(p) * p;
    }
    e1.normalize();
    return {e1, p.cross(e1)};
}

// int_0^smax g(s) ds for g with an integrable singularity at s = 0: dyadic shells
// below smax/8, uniform Gauss panels above.
template <class G>
double radial_integral(G&& g, double smax, bool singular_at_zero)
{
    const auto& rule = quad::gauss_legendre(16);
    auto panel = [&](double lo, double hi) {
        double s = 0.0;
        const double h = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        for (const auto& nd : rule) s += nd.w * g(mid + h * nd.x);
        return s * h;
    };
    if (!singular_at_zero) {
        double s = 0.0;
        const int P = 16;
        for (int i = 0; i < P; ++i) s += panel(smax * i / P, smax * (i + 1) / P);
        return s;
    }
    double s = 0.0;
    const double split = smax / 8.0;
    const int P = 14;
    for (int i = 0; i < P; ++i) s += panel(split + (smax - split) * i / P, split + (smax - split) * (i + 1) / P);
    double hi = split;
    for (int k = 0; k < 45; ++k) {
        s += panel(0.5 * hi, hi);
        hi *= 0.5;
    }
    return s;
}

double planar_identity(const GreenKernel& k, const Vec2& y, const Bump& v)
{
    const Vec2 c = v.center.head<2>();
    const double rho = v.radius;
    auto minus_lap = [&](const Vec2& x) {
        const double t = (x - c).norm() / rho;
        if (t >= 1.0) return 0.0;
        const auto p = bump_profile(t);
        return -(p.dtt + bump_dt_over_t(t)) / (rho * rho);
    };
    const bool inside = (y - c).norm() < rho;
    const Vec2 p = inside ? y : c;
    const int Nphi = 256;
    double total = 0.0;
    for (int j = 0; j < Nphi; ++j) {
        const double phi = 2.0 * kPi * (j + 0.5) / Nphi;
        const Vec2 e(std::cos(phi), std::sin(phi));
        const Vec2 d = p - c;
        const double bb = d.dot(e);
        const double smax = -bb + std::sqrt(std::max(0.0, bb * bb - d.squaredNorm() + rho * rho));
        total += radial_integral(
            [&](double s) {
                const Vec2 x = p + s * e;
                const double g = minus_lap(x);
                if (g == 0.0) return 0.0;
                return kernel_eval(k, x, y) * g * s;
            },
            smax, inside);
    }
    return total * 2.0 * kPi / Nphi;
}

double rectangle_identity(const RectangleDirichlet& r, const Vec2& y, const Bump& v)
{
    const Vec2 c = v.center.head<2>();
    const double rho = v.radius;
    const int N = r.series_terms;
    const auto& rule = quad::gauss_legendre(8);
    const int P = 48, Q = P * static_cast<int>(rule.size());
    Vector xs(Q), ys(Q), w(Q);
    for (int i = 0; i < P; ++i)
        for (std::size_t g = 0; g < rule.size(); ++g) {
            const double h = 2.0 * rho / P;
            const int q = i * static_cast<int>(rule.size()) + static_cast<int>(g);
            xs[q] = c.x() - rho + h * (i + 0.5 + 0.5 * rule[g].x);
            ys[q] = c.y() - rho + h * (i + 0.5 + 0.5 * rule[g].x);
            w[q] = 0.5 * h * rule[g].w;
        }
    Eigen::MatrixXd F(Q, Q), Sx(Q, N), Sy(Q, N);
    for (int i = 0; i < Q; ++i)
        for (int j = 0; j < Q; ++j) {
            const double t = Vec2(xs[i] - c.x(), ys[j] - c.y()).norm() / rho;
            if (t >= 1.0) {
                F(i, j) = 0.0;
                continue;
            }
            const auto p = bump_profile(t);
            F(i, j) = -w[i] * w[j] * (p.dtt + bump_dt_over_t(t)) / (rho * rho);
        }
    for (int i = 0; i < Q; ++i) {
        std::vector<double> tmp(N);
        sines(rect_theta(xs[i], r.half_width), N, tmp.data());
        for (int m = 0; m < N; ++m) Sx(i, m) = tmp[m];
        sines(rect_theta(ys[i], r.half_height), N, tmp.data());
        for (int m = 0; m < N; ++m) Sy(i, m) = tmp[m];
    }
    const Eigen::MatrixXd C = Sx.transpose() * F * Sy;
    std::vector<double> ay(N), by(N);
    sines(rect_theta(y.x(), r.half_width), N, ay.data());
    sines(rect_theta(y.y(), r.half_height), N, by.data());
    double s = 0.0;
    for (int m = 0; m < N; ++m)
        for (int n = 0; n < N; ++n) s += ay[m] * by[n] * C(m, n) / rect_lambda(r, m + 1, n + 1);
    return s / (r.half_width * r.half_height);
}

double sphere_identity(const SphereClosed& sk, const Vec3& y, const Bump& v)
{
    const Vec3 yh = y.normalized(), ch = v.center.normalized();
    const double rho = v.radius / sk.radius;   // angular radius
    const SphereClosed unit{1.0};
    auto minus_lap = [&](const Vec3& x) {
        const double th = geodesic_angle(x, ch);
        const double t = th / rho;
        if (t >= 1.0) return 0.0;
        const auto p = bump_profile(t);
        const double thcot = th < 1e-8 ? 1.0 - th * th / 3.0 : th * std::cos(th) / std::sin(th);
        return -(p.dtt + thcot * bump_dt_over_t(t)) / (rho * rho);
    };
    const double delta = geodesic_angle(yh, ch);
    const bool inside = delta < rho;
    const Vec3 p = inside ? yh : ch;
    const auto [e1, e2] = tangent_frame(p, inside ? ch : yh);
    const int Nphi = 256;
    double total = 0.0;
    for (int j = 0; j < Nphi; ++j) {
        const double phi = 2.0 * kPi * (j + 0.5) / Nphi;
        double smax = rho;
        if (inside) {
            const double A = std::cos(delta), B = std::sin(delta) * std::cos(phi);
            smax = std::atan2(B, A) + std::acos(std::clamp(std::cos(rho) / std::hypot(A, B), -1.0, 1.0));
        }
        const Vec3 dir = std::cos(phi) * e1 + std::sin(phi) * e2;
        total += radial_integral(
            [&](double s) {
                const Vec3 x = std::cos(s) * p + std::sin(s) * dir;
                const double g = minus_lap(x);
                if (g == 0.0) return 0.0;
                double G;
                if (inside) {
                    const double h = std::sin(0.5 * s);
                    G = kInv4Pi * (std::log(1.0 / (h * h)) - 1.0);
                } else {
                    G = sphere_eval(unit, x, yh);
                }
                return G * g * std::sin(s);
            },
            smax, inside);
    }
    return total * 2.0 * kPi / Nphi;
}

} // namespace

double bump_value(const GreenKernel& k, const Bump& b, const Vec3& x)
{
    if (b.radius <= 0.0) return b.offset;
    if (const auto* s = std::get_if<SphereClosed>(&k)) {
        const double th = geodesic_angle(x.normalized(), b.center.normalized());
        return b.offset + bump_profile(th * s->radius / b.radius).v;
    }
    return b.offset + bump_profile((x.head<2>() - b.center.head<2>()).norm() / b.radius).v;
}

double verify_distributional_identity(const GreenKernel& k, const Vec3& y, const Bump& v)
{
    if (is_dirichlet(k)) {
        if (v.offset != 0.0)
            throw Error(ErrorKind::InvalidInput, "distributional identity: Dirichlet test fields need compact support");
        if (!in_domain(k, y)) throw Error(ErrorKind::Domain, "distributional identity: y outside the domain");
        if (v.radius <= 0.0) return 0.0;
        // The bump must sit inside the domain.
        const Vec2 c = v.center.head<2>();
        const bool ok = std::visit(overloaded{
                                       [&](const DiskDirichlet& d) { return c.norm() + v.radius <= d.radius; },
                                       [&](const RectangleDirichlet& r) {
                                           return std::abs(c.x()) + v.radius <= r.half_width &&
                                                  std::abs(c.y()) + v.radius <= r.half_height;
                                       },
                                       [&](const SphereClosed&) { return true; },
                                   },
                                   k);
        if (!ok) throw Error(ErrorKind::InvalidInput, "distributional identity: bump support leaves the domain");
        const double target = bump_value(k, v, y);
        double got;
        if (const auto* r = std::get_if<RectangleDirichlet>(&k)) got = rectangle_identity(*r, y.head<2>(), v);
        else got = planar_identity(k, y.head<2>(), v);
        return std::abs(got - target);
    }
    const auto& s = std::get<SphereClosed>(k);
    if (!in_domain(k, y)) throw Error(ErrorKind::Domain, "distributional identity: y off the sphere");
    if (v.radius <= 0.0) return 0.0;   // constant field: both sides vanish
    const double rho = v.radius / s.radius;
    if (rho >= kPi) throw Error(ErrorKind::InvalidInput, "distributional identity: bump wraps the sphere");
    const double mean_psi =
        0.5 * quad::integrate_1d([&](double th) { return bump_profile(th / rho).v * std::sin(th); }, 0.0, rho, 16, 32);
    const double target = bump_value(k, v, y) - v.offset - mean_psi;
    return std::abs(sphere_identity(s, y, v) - target);
}

// ---------------------------------------------------------------------------
// Green operator

void check_compatible(const GreenKernel& k, const MeasureSpec& m)
{
    if (is_dirichlet(k)) {
        if (m.space() != SpaceKind::Plane)
            throw Error(ErrorKind::Config, "green: planar kernel " + describe(k) + " used with a non-planar measure");
        return;
    }
    const auto& s = std::get<SphereClosed>(k);
    if (m.space() != SpaceKind::ClosedSphere || std::abs(m.sphere_radius() - s.radius) > 1e-12 * s.radius)
        throw Error(ErrorKind::Config, "green: kernel " + describe(k) + " needs a measure on the same sphere");
}

namespace {

struct SegPart {
    Vec2 p, q;
    double wlen;          // density * length
    double panel;         // parameter length of one base panel
    std::vector<double> t, w, fw;   // base nodes: parameter, weight, f * weight
};

struct Atom {
    Vec3 x;
    double wf;
};

struct TriPart {
    std::array<Vec3, 3> P;   // flat triangle in ambient coordinates
    bool radial = false;     // project onto the sphere of radius R
    double R = 0.0;
    double density = 1.0;
    int field = -1;          // index of the density field, if any
    Vec3 center;             // ambient centroid
    double diam = 0.0;
    std::array<Vec3, 7> y;
    std::array<double, 7> wf;
};

} // namespace

struct GreenOperator::Impl {
    GreenKernel k;
    SpaceField f;
    GreenOptions opt;

    // Rectangle kernel: coefficient route, value(x) = s(x1)^T D s(x2).
    bool series = false;
    Eigen::MatrixXd D;

    std::vector<SegPart> segs;
    std::vector<Atom> atoms;
    std::vector<TriPart> tris;
    std::vector<Field> fields;

    double K(const Vec3& x, const Vec3& y) const
    {
        const double g = kernel_eval(k, x, y);
        return opt.absolute_kernel ? std::abs(g) : g;
    }

    // Flat point -> ambient point and area factor.
    static std::pair<Vec3, double> lift(const TriPart& T, const Vec3& P, double h)
    {
        if (!T.radial) return {P, 1.0};
        const double r = P.norm();
        return {P * (T.R / r), T.R * T.R * h / (r * r * r)};
    }

    double source(const TriPart& T, const Vec3& y) const
    {
        double v = f(y) * T.density;
        if (T.field >= 0) v *= fields[T.field](y.head<2>());
        return v;
    }

    void build(const MeasureSpec& m);
    void build_series(const MeasureSpec& m);
    void add_triangles(const std::vector<std::array<Vec3, 3>>& flat, bool radial, double R, double density,
                       int field);

    double eval(const Vec3& x) const;
    double eval_segment(const SegPart& s, const Vec3& x) const;
    double eval_triangle(const TriPart& T, const Vec3& x) const;
    double tri_rec(const TriPart& T, const std::array<Vec3, 3>& P, const Vec3& x, const Vec3& xp, double h,
                   int depth) const;
    double tri_rule(const TriPart& T, const std::array<Vec3, 3>& P, const Vec3& x, double h) const;
    double tri_duffy(const TriPart& T, const std::array<Vec3, 3>& P, const Vec3& x, const Vec3& xp, double h) const;
};

void GreenOperator::Impl::add_triangles(const std::vector<std::array<Vec3, 3>>& flat, bool radial, double R,
                                        double density, int field)
{
    const auto& rule = quad::triangle7();
    for (const auto& P : flat) {
        TriPart T;
        T.P = P;
        T.radial = radial;
        T.R = R;
        T.density = density;
        T.field = field;
        const Vec3 n = (P[1] - P[0]).cross(P[2] - P[0]);
        const double area = 0.5 * n.norm();
        const double h = radial ? n.normalized().dot(P[0]) : 1.0;
        T.diam = std::max({(P[1] - P[0]).norm(), (P[2] - P[1]).norm(), (P[0] - P[2]).norm()});
        const Vec3 c = (P[0] + P[1] + P[2]) / 3.0;
        T.center = lift(T, c, h).first;
        for (int q = 0; q < 7; ++q) {
            const auto& nd = rule[q];
            const Vec3 X = nd.bary[0] * P[0] + nd.bary[1] * P[1] + nd.bary[2] * P[2];
            const auto [y, J] = lift(T, X, h);
            T.y[q] = y;
            T.wf[q] = nd.w * area * J * source(T, y);
        }
        tris.push_back(std::move(T));
    }
}

void GreenOperator::Impl::build(const MeasureSpec& m)
{
    std::visit(
        overloaded{
            [&](const AreaLebesgue& a) {
                int field = -1;
                if (a.density_field) {
                    field = static_cast<int>(fields.size());
                    fields.push_back(a.density_field);
                }
                std::vector<std::array<Vec3, 3>> flat;
                auto lift0 = [](const Vec2& p) { return Vec3(p.x(), p.y(), 0.0); };
                if (const auto* b = std::get_if<Box>(&a.region)) {
                    const int n = opt.area_resolution;
                    auto pt = [&](int i, int j) {
                        return Vec2(b->lo.x() + (b->hi.x() - b->lo.x()) * i / n, b->lo.y() + (b->hi.y() - b->lo.y()) * j / n);
                    };
                    for (int j = 0; j < n; ++j)
                        for (int i = 0; i < n; ++i) {
                            flat.push_back({lift0(pt(i, j)), lift0(pt(i + 1, j)), lift0(pt(i + 1, j + 1))});
                            flat.push_back({lift0(pt(i, j)), lift0(pt(i + 1, j + 1)), lift0(pt(i, j + 1))});
                        }
                } else {
                    const auto& d = std::get<Disk>(a.region);
                    const int level = std::max(1, static_cast<int>(std::ceil(std::log2(opt.area_resolution / 2.0))));
                    const TriMesh dm = gen_disk(d.radius, level);
                    for (int t = 0; t < dm.num_triangles(); ++t) {
                        const auto tr = dm.triangle(t);
                        flat.push_back({lift0(tr[0] + d.center), lift0(tr[1] + d.center), lift0(tr[2] + d.center)});
                    }
                }
                add_triangles(flat, false, 0.0, a.density, field);
            },
            [&](const LineSegments& l) {
                const auto& rule = quad::gauss_legendre(8);
                for (const auto& s : l.segments) {
                    SegPart sp;
                    sp.p = s.p;
                    sp.q = s.q;
                    sp.wlen = s.density * (s.q - s.p).norm();
                    const int P = opt.line_panels;
                    sp.panel = 1.0 / P;
                    for (int i = 0; i < P; ++i)
                        for (const auto& nd : rule) {
                            const double t = (i + 0.5 + 0.5 * nd.x) / P;
                            const Vec2 y = s.p + t * (s.q - s.p);
                            const double w = 0.5 * nd.w / P * sp.wlen;
                            sp.t.push_back(t);
                            sp.w.push_back(w);
                            sp.fw.push_back(w * f(Vec3(y.x(), y.y(), 0.0)));
                        }
                    segs.push_back(std::move(sp));
                }
            },
            [&](const SelfSimilarIFS& s) {
                for (const auto& lf : s.leaves->leaves()) {
                    const Vec3 x(lf.x.x(), lf.x.y(), 0.0);
                    atoms.push_back({x, lf.w * f(x)});
                }
            },
            [&](const SphereSurface& s) {
                const TriMesh sm = gen_sphere(s.radius, opt.sphere_level);
                std::vector<std::array<Vec3, 3>> flat;
                for (int t = 0; t < sm.num_triangles(); ++t) flat.push_back(sm.embedded_triangle(t));
                add_triangles(flat, true, s.radius, 1.0, -1);
            },
            [&](const SumMeasure& s) {
                for (const auto& p : s.parts) build(p);
            },
            [&](const Pushforward&) {
                throw Error(ErrorKind::Config, "green: pushforward measures have no Green kernel here");
            },
        },
        m.variant());
}

void GreenOperator::Impl::build_series(const MeasureSpec& m)
{
    const auto& r = std::get<RectangleDirichlet>(k);
    const int N = r.series_terms;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(N, N);
    std::vector<double> sx(N), sy(N);
    // General node sets: C += sum_q w_q f_q s(x_q) s(y_q)^T.
    auto add_nodes = [&](const std::vector<MeasureNode>& nodes) {
        Eigen::MatrixXd A(nodes.size(), N), B(nodes.size(), N);
        for (std::size_t q = 0; q < nodes.size(); ++q) {
            const auto& nd = nodes[q];
            const double wf = nd.w * f(Vec3(nd.chart.x(), nd.chart.y(), 0.0));
            sines(rect_theta(nd.chart.x(), r.half_width), N, sx.data());
            sines(rect_theta(nd.chart.y(), r.half_height), N, sy.data());
            for (int j = 0; j < N; ++j) {
                A(q, j) = wf * sx[j];
                B(q, j) = sy[j];
            }
        }
        C.noalias() += A.transpose() * B;
    };
    std::function<void(const MeasureSpec&)> visit = [&](const MeasureSpec& part) {
        std::visit(overloaded{
                       [&](const AreaLebesgue& a) {
                           const auto* b = std::get_if<Box>(&a.region);
                           if (!b) {
                               add_nodes(global_nodes(part, std::max(opt.area_resolution, N)));
                               return;
                           }
                           // Tensor grid: C += Sx^T F Sy.
                           const auto& g = quad::gauss_legendre(4);
                           const int P = std::max(opt.area_resolution, N), Q = 4 * P;
                           Vector X(Q), Y(Q), wx(Q), wy(Q);
                           const double hx = (b->hi.x() - b->lo.x()) / P, hy = (b->hi.y() - b->lo.y()) / P;
                           for (int i = 0; i < P; ++i)
                               for (int gq = 0; gq < 4; ++gq) {
                                   X[4 * i + gq] = b->lo.x() + hx * (i + 0.5 + 0.5 * g[gq].x);
                                   Y[4 * i + gq] = b->lo.y() + hy * (i + 0.5 + 0.5 * g[gq].x);
                                   wx[4 * i + gq] = 0.5 * hx * g[gq].w;
                                   wy[4 * i + gq] = 0.5 * hy * g[gq].w;
                               }
                           Eigen::MatrixXd F(Q, Q), Sx(Q, N), Sy(Q, N);
                           for (int j = 0; j < Q; ++j)
                               for (int i = 0; i < Q; ++i) {
                                   const Vec2 p(X[i], Y[j]);
                                   double d = a.density * wx[i] * wy[j];
                                   if (a.density_field) d *= a.density_field(p);
                                   F(i, j) = d * f(Vec3(p.x(), p.y(), 0.0));
                               }
                           for (int i = 0; i < Q; ++i) {
                               sines(rect_theta(X[i], r.half_width), N, sx.data());
                               sines(rect_theta(Y[i], r.half_height), N, sy.data());
                               for (int j = 0; j < N; ++j) {
                                   Sx(i, j) = sx[j];
                                   Sy(i, j) = sy[j];
                               }
                           }
                           C.noalias() += Sx.transpose() * F * Sy;
                       },
                       [&](const LineSegments&) {
                           add_nodes(global_nodes(part, std::max(opt.line_panels, 2 * N)));
                       },
                       [&](const SelfSimilarIFS&) { add_nodes(global_nodes(part)); },
                       [&](const SumMeasure& s) {
                           for (const auto& p : s.parts) visit(p);
                       },
                       [&](const auto&) {
                           throw Error(ErrorKind::Config, "green: measure not supported by the rectangle kernel");
                       },
                   },
                   part.variant());
    };
    visit(m);
    // Measure must live in the rectangle.
    for (const auto& nd : global_nodes(m, 8))
        if (!in_domain(k, nd.space))
            throw Error(ErrorKind::Domain, "green: measure support leaves " + describe(k));
    D.resize(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) D(i, j) = C(i, j) / (rect_lambda(r, i + 1, j + 1) * r.half_width * r.half_height);
    series = true;
}

double GreenOperator::Impl::eval(const Vec3& x) const
{
    if (!in_domain(k, x)) throw Error(ErrorKind::Domain, "green_apply: evaluation point outside " + describe(k));
    if (series) {
        const auto& r = std::get<RectangleDirichlet>(k);
        const int N = r.series_terms;
        Vector a(N), b(N);
        sines(rect_theta(x.x(), r.half_width), N, a.data());
        sines(rect_theta(x.y(), r.half_height), N, b.data());
        const double full = a.dot(D * b);
        if (!opt.series_extrapolation || N < 4) return full;
        const int H = N / 2;
        const double half = a.head(H).dot(D.topLeftCorner(H, H) * b.head(H));
        return 2.0 * full - half;
    }
    double s = 0.0;
    for (const auto& a : atoms) {
        if ((a.x - x).squaredNorm() == 0.0) continue;   // a single atom at x carries no mass here
        s += a.wf * K(x, a.x);
    }
    for (const auto& sp : segs) s += eval_segment(sp, x);
    for (const auto& T : tris) s += eval_triangle(T, x);
    return s;
}

double GreenOperator::Impl::eval_segment(const SegPart& sp, const Vec3& x) const
{
    const Vec2 x2 = x.head<2>(), d = sp.q - sp.p;
    const double L2 = d.squaredNorm();
    const double ts = std::clamp((x2 - sp.p).dot(d) / L2, 0.0, 1.0);
    const double dist = (sp.p + ts * d - x2).norm();
    if (dist > 2.0 * sp.panel * std::sqrt(L2)) {
        double s = 0.0;
        for (std::size_t q = 0; q < sp.t.size(); ++q) {
            const Vec2 y = sp.p + sp.t[q] * d;
            s += sp.fw[q] * K(x, Vec3(y.x(), y.y(), 0.0));
        }
        return s;
    }
    // Dyadic shells in the parameter toward ts on both sides.
    const auto& rule = quad::gauss_legendre(8);
    auto piece = [&](double u0, double u1, int dir) {
        const int P = std::max(1, static_cast<int>(std::ceil((u1 - u0) / sp.panel - 1e-9)));
        const double h = (u1 - u0) / P;
        double s = 0.0;
        for (int i = 0; i < P; ++i)
            for (const auto& nd : rule) {
                const double u = u0 + h * (i + 0.5 + 0.5 * nd.x);
                const double t = ts + dir * u;
                const Vec2 y2 = sp.p + t * d;
                const Vec3 y(y2.x(), y2.y(), 0.0);
                if ((y - x).squaredNorm() == 0.0) continue;
                s += 0.5 * h * nd.w * sp.wlen * f(y) * K(x, y);
            }
        return s;
    };
    double total = 0.0;
    for (int dir : {-1, 1}) {
        const double len = dir < 0 ? ts : 1.0 - ts;
        if (len <= 0.0) continue;
        double acc = 0.0, hi = len;
        bool done = false;
        for (int k = 0; k < opt.max_shells; ++k) {
            const double c = piece(0.5 * hi, hi, dir);
            acc += c;
            hi *= 0.5;
            if (k + 1 >= opt.min_shells && std::abs(c) <= opt.shell_tol * std::abs(acc)) {
                done = true;
                break;
            }
            if (c == 0.0 && acc == 0.0 && k + 1 >= opt.min_shells) {
                done = true;
                break;
            }
        }
        if (!done)
            throw Error(ErrorKind::Quadrature, "green_apply: singular line quadrature did not converge");
        total += acc;
    }
    return total;
}

double GreenOperator::Impl::tri_rule(const TriPart& T, const std::array<Vec3, 3>& P, const Vec3& x, double h) const
{
    const double area = 0.5 * (P[1] - P[0]).cross(P[2] - P[0]).norm();
    double s = 0.0;
    for (const auto& nd : quad::triangle7()) {
        const Vec3 X = nd.bary[0] * P[0] + nd.bary[1] * P[1] + nd.bary[2] * P[2];
        const auto [y, J] = lift(T, X, h);
        if ((y - x).squaredNorm() == 0.0) continue;
        s += nd.w * area * J * source(T, y) * K(x, y);
    }
    return s;
}

double GreenOperator::Impl::tri_duffy(const TriPart& T, const std::array<Vec3, 3>& P, const Vec3& x, const Vec3& xp,
                                      double h) const
{
    const auto& gu = quad::gauss_legendre(6);
    const auto& gv = quad::gauss_legendre(8);
    const double full = (P[1] - P[0]).cross(P[2] - P[0]).norm();
    double s = 0.0;
    for (int e = 0; e < 3; ++e) {
        const Vec3& B = P[e];
        const Vec3& C = P[(e + 1) % 3];
        const double A2 = (B - xp).cross(C - xp).norm();   // twice the area
        if (A2 <= 1e-14 * full) continue;
        // p(u, v) = xp + u (B - xp) + u v (C - B), dA = A2 u du dv on [0,1]^2.
        double hi = 1.0;
        for (int k = 0; k < 24; ++k) {
            const double lo = 0.5 * hi;
            for (const auto& a : gu) {
                const double u = lo + 0.5 * (hi - lo) * (1.0 + a.x);
                const double wu = 0.5 * (hi - lo) * a.w;
                for (const auto& b : gv) {
                    const double v = 0.5 * (1.0 + b.x);
                    const Vec3 X = xp + u * (B - xp) + u * v * (C - B);
                    const auto [y, J] = lift(T, X, h);
                    if ((y - x).squaredNorm() == 0.0) continue;
                    s += wu * 0.5 * b.w * A2 * u * J * source(T, y) * K(x, y);
                }
            }
            hi = lo;
        }
    }
    return s;
}

double GreenOperator::Impl::tri_rec(const TriPart& T, const std::array<Vec3, 3>& P, const Vec3& x, const Vec3& xp,
                                    double h, int depth) const
{
    const Vec3 c = (P[0] + P[1] + P[2]) / 3.0;
    const double diam = std::max({(P[1] - P[0]).norm(), (P[2] - P[1]).norm(), (P[0] - P[2]).norm()});
    if ((xp - c).norm() > 1.5 * diam) return tri_rule(T, P, x, h);
    // Barycentric coordinates of xp in the plane of P.
    const Vec3 n = (P[1] - P[0]).cross(P[2] - P[0]);
    const double n2 = n.squaredNorm();
    const double l0 = (P[1] - xp).cross(P[2] - xp).dot(n) / n2;
    const double l1 = (P[2] - xp).cross(P[0] - xp).dot(n) / n2;
    const double l2 = 1.0 - l0 - l1;
    const double off_plane = std::abs((xp - P[0]).dot(n)) / std::sqrt(n2);
    if (std::min({l0, l1, l2}) >= -1e-12 && off_plane <= 1e-12 * diam) return tri_duffy(T, P, x, xp, h);
    if (depth >= 10) return tri_rule(T, P, x, h);
    const Vec3 m01 = 0.5 * (P[0] + P[1]), m12 = 0.5 * (P[1] + P[2]), m20 = 0.5 * (P[2] + P[0]);
    return tri_rec(T, {P[0], m01, m20}, x, xp, h, depth + 1) + tri_rec(T, {m01, P[1], m12}, x, xp, h, depth + 1) +
           tri_rec(T, {m20, m12, P[2]}, x, xp, h, depth + 1) + tri_rec(T, {m01, m12, m20}, x, xp, h, depth + 1);
}

double GreenOperator::Impl::eval_triangle(const TriPart& T, const Vec3& x) const
{
    if ((x - T.center).norm() > 2.0 * T.diam) {
        double s = 0.0;
        for (int q = 0; q < 7; ++q) {
            if ((T.y[q] - x).squaredNorm() == 0.0) continue;
            s += T.wf[q] * K(x, T.y[q]);
        }
        return s;
    }
    const Vec3 n = (T.P[1] - T.P[0]).cross(T.P[2] - T.P[0]).normalized();
    double h = 1.0;
    Vec3 xp = x;
    if (T.radial) {
        h = n.dot(T.P[0]);
        const double nx = n.dot(x);
        if (nx <= 0.0) return tri_rule(T, T.P, x, h);
        xp = x * (h / nx);
    } else {
        xp.z() = 0.0;
    }
    return tri_rec(T, T.P, x, xp, h, 0);
}

GreenOperator::GreenOperator(GreenKernel k, const MeasureSpec& m, SpaceField f, GreenOptions opt)
    : impl_(std::make_unique<Impl>())
{
    check_compatible(k, m);
    impl_->k = std::move(k);
    impl_->f = std::move(f);
    impl_->opt = opt;
    if (std::holds_alternative<RectangleDirichlet>(impl_->k)) impl_->build_series(m);
    else impl_->build(m);
}

GreenOperator::~GreenOperator() = default;
GreenOperator::GreenOperator(GreenOperator&&) noexcept = default;

const GreenKernel& GreenOperator::kernel() const { return impl_->k; }

double GreenOperator::operator()(const Vec3& x) const { return impl_->eval(x); }

std::vector<double> GreenOperator::apply(const std::vector<Vec3>& xs, Exec exec) const
{
    std::vector<double> out(xs.size());
    const long n = static_cast<long>(xs.size());
    if (exec == Exec::Serial) {
        for (long i = 0; i < n; ++i) out[i] = impl_->eval(xs[i]);
        return out;
    }
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 4)
    for (long i = 0; i < n; ++i) {
        try {
            out[i] = impl_->eval(xs[i]);
        } catch (...) {
#pragma omp critical(krein_green_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    return out;
}

double green_apply(const GreenKernel& k, const MeasureSpec& m, const SpaceField& f, const Vec3& x,
                   const GreenOptions& opt)
{
    return GreenOperator(k, m, f, opt)(x);
}

std::vector<double> green_apply(const GreenKernel& k, const MeasureSpec& m, const SpaceField& f,
                                const std::vector<Vec3>& xs, Exec exec, const GreenOptions& opt)
{
    return GreenOperator(k, m, f, opt).apply(xs, exec);
}

double c2_constant(const GreenKernel& k, const MeasureSpec& m, const std::vector<Vec3>& samples, Exec exec,
                   const GreenOptions& opt)
{
    if (samples.empty()) throw Error(ErrorKind::InvalidInput, "c2_constant: empty sample set");
    GreenOptions o = opt;
    o.absolute_kernel = !is_dirichlet(k);
    const auto v = GreenOperator(k, m, [](const Vec3&) { return 1.0; }, o).apply(samples, exec);
    double best = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorKind::Quadrature, "c2_constant: non-finite kernel integral");
        best = std::max(best, x);
    }
    return best;
}

double fixed_point_residual(const GreenKernel& k, const MeasureSpec& m, const TriMesh& mesh, const EigenPair& pair,
                            const std::vector<Vec3>& samples, Exec exec, const GreenOptions& opt)
{
    check_compatible(k, m);
    const bool sphere_mesh = mesh.chart().kind == ChartKind::ClosedSphere;
    if (sphere_mesh == is_dirichlet(k) || mesh.chart().kind == ChartKind::StereographicSphere)
        throw Error(ErrorKind::Config, "fixed_point_residual: mesh and kernel " + describe(k) + " do not match");
    if (is_dirichlet(k))
        for (const Vec2& v : mesh.vertices())
            if (!in_domain(k, Vec3(v.x(), v.y(), 0.0)))
                throw Error(ErrorKind::Config, "fixed_point_residual: mesh extends outside " + describe(k));
    if (pair.coeffs.size() != mesh.num_vertices())
        throw Error(ErrorKind::Config, "fixed_point_residual: eigenpair does not belong to this mesh");
    if (samples.empty()) throw Error(ErrorKind::InvalidInput, "fixed_point_residual: empty sample set");
    const double unorm = pair.coeffs.cwiseAbs().maxCoeff();
    const P1Function u(mesh, pair.coeffs);
    if (!is_dirichlet(k)) {
        // The identity only inverts the operator on mean-zero functions.
        double mean = 0.0, mass = 0.0;
        for (const auto& nd : global_nodes(m, 24)) {
            mean += nd.w * u(nd.space);
            mass += nd.w;
        }
        if (pair.index == 0 || std::abs(mean) > 1e-6 * unorm * mass)
            throw Error(ErrorKind::InvalidInput,
                        "fixed_point_residual: constant (non mean-zero) eigenfunction on a closed manifold; "
                        "the Green operator does not invert the operator there");
    }
    // A polygonal mesh of a curved domain misses thin boundary slivers; Dirichlet data
    // extends by zero there.
    const bool zero_ext = is_dirichlet(k);
    const SpaceField uf = [&u, zero_ext](const Vec3& x) { return zero_ext ? u.value_or(x, 0.0) : u(x); };
    const auto g = GreenOperator(k, m, uf, opt).apply(samples, exec);
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        worst = std::max(worst, std::abs(uf(samples[i]) - pair.lambda * g[i]));
    return worst / unorm;
}

OperatorNormEstimate operator_norm_estimate(const GreenKernel& k, const MeasureSpec& m, int trials, std::uint64_t seed,
                                            int node_resolution, Exec exec, const GreenOptions& opt)
{
    if (trials < 1) throw Error(ErrorKind::InvalidInput, "operator_norm_estimate: need at least one trial");
    const auto nodes = global_nodes(m, node_resolution);
    if (nodes.empty()) throw Error(ErrorKind::InvalidInput, "operator_norm_estimate: measure has no nodes");
    std::vector<Vec3> xs;
    xs.reserve(nodes.size());
    for (const auto& nd : nodes) xs.push_back(is_dirichlet(k) ? Vec3(nd.chart.x(), nd.chart.y(), 0.0) : nd.space);

    OperatorNormEstimate est;
    {
        GreenOptions o = opt;
        o.absolute_kernel = !is_dirichlet(k);
        const auto v = GreenOperator(k, m, [](const Vec3&) { return 1.0; }, o).apply(xs, exec);
        est.schur_bound = *std::max_element(v.begin(), v.end());
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int t = 0; t < trials; ++t) {
        struct Mode {
            Vec3 kv;
            double a, ph;
        };
        std::vector<Mode> modes(6);
        for (auto& md : modes) {
            md.kv = Vec3(4 * U(rng), 4 * U(rng), 4 * U(rng));
            md.a = U(rng);
            md.ph = kPi * U(rng);
        }
        const SpaceField f = [modes](const Vec3& x) {
            double s = 0.0;
            for (const auto& md : modes) s += md.a * std::cos(md.kv.dot(x) + md.ph);
            return s;
        };
        const auto g = GreenOperator(k, m, f, opt).apply(xs, exec);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            num += nodes[i].w * g[i] * g[i];
            den += nodes[i].w * f(xs[i]) * f(xs[i]);
        }
        const double r = std::sqrt(num / den);
        est.ratios.push_back(r);
        est.max_ratio = std::max(est.max_ratio, r);
    }
    return est;
}

std::vector<Vec3> sample_points(const GreenKernel& k, int n)
{
    if (n < 2) throw Error(ErrorKind::InvalidInput, "sample_points: need n >= 2");
    std::vector<Vec3> out;
    std::visit(overloaded{
                   [&](const RectangleDirichlet& r) {
                       for (int j = 0; j < n; ++j)
                           for (int i = 0; i < n; ++i)
                               out.emplace_back(-r.half_width + 2.0 * r.half_width * i / (n - 1),
                                                -r.half_height + 2.0 * r.half_height * j / (n - 1), 0.0);
                   },
                   [&](const DiskDirichlet& d) {
                       out.emplace_back(0.0, 0.0, 0.0);
                       for (int i = 1; i < n; ++i) {
                           const double r = d.radius * i / (n - 1);
                           const int m = 4 * i;
                           for (int j = 0; j < m; ++j) {
                               const double th = 2.0 * kPi * (j + 0.5 * (i % 2)) / m;
                               out.emplace_back(r * std::cos(th), r * std::sin(th), 0.0);
                           }
                       }
                   },
                   [&](const SphereClosed& s) {
                       const int N = n * n;
                       const double golden = kPi * (3.0 - std::sqrt(5.0));
                       for (int i = 0; i < N; ++i) {
                           const double z = 1.0 - (2.0 * i + 1.0) / N;
                           const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
                           out.emplace_back(s.radius * rho * std::cos(golden * i), s.radius * rho * std::sin(golden * i),
                                            s.radius * z);
                       }
                   },
               },
               k);
    return out;
}

void write_green_csv(std::ostream& os, const std::vector<GreenCheckRow>& rows)
{
    os << "check,domain,measure,value,tolerance,pass\n";
    char buf[64];
    for (const auto& r : rows) {
        os << r.check << ',' << r.domain << ',' << r.measure << ',';
        std::snprintf(buf, sizeof buf, "%.10g", r.value);
        os << buf << ',';
        std::snprintf(buf, sizeof buf, "%.3g", r.tolerance);
        os << buf << ',' << (r.pass ? "pass" : "fail") << '\n';
    }
}

} // namespace krein
