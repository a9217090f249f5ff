#include "krein/conformal.hpp"

#include <cmath>
#include <sstream>

namespace krein {

namespace {

constexpr double kSphereTol = 1e-9;

std::string fmt3(const Vec3& p)
{
    std::ostringstream os;
    os.precision(12);
    os << '(' << p.x() << ", " << p.y() << ", " << p.z() << ')';
    return os.str();
}

} // namespace

StereoChart::StereoChart(double sphere_radius) : radius_(sphere_radius)
{
    if (!(sphere_radius > 0.0))
        throw Error(ErrorKind::InvalidInput, "StereoChart: radius must be positive");
}

Vec2 StereoChart::forward(const Vec3& p) const
{
    const double R = radius_;
    if (std::abs(p.norm() - R) > kSphereTol * std::max(1.0, R))
        throw Error(ErrorKind::Domain, "stereo_forward: point " + fmt3(p) + " is off the sphere");
    if (p.z() < -kSphereTol)
        throw Error(ErrorKind::Domain, "stereo_forward: point " + fmt3(p) + " is below the equator");
    const double s = R / (R + std::max(p.z(), 0.0));
    return {s * p.x(), s * p.y()};
}

Vec3 StereoChart::inverse(const Vec2& y) const
{
    const double R = radius_;
    const double s = y.squaredNorm();
    if (std::sqrt(s) > R * (1.0 + 1e-12))
        throw Error(ErrorKind::Domain, "stereo_inverse: point outside the chart disk (out-of-chart)");
    const double k = R / (s + R * R);
    return {k * 2.0 * R * y.x(), k * 2.0 * R * y.y(), k * (R * R - s)};
}

double StereoChart::jacobian_inverse_det(double x3) const
{
    if (x3 < -kSphereTol || x3 > radius_ * (1.0 + kSphereTol))
        throw Error(ErrorKind::Domain, "jacobian_inverse_det: x3 outside [0, R]");
    const double t = radius_ + x3;
    return t * t / (4.0 * radius_ * radius_);
}

Eigen::Matrix<double, 3, 2> StereoChart::inverse_differential(const Vec2& y) const
{
    const double R = radius_, R2 = R * R;
    const double s = y.squaredNorm();
    const double d = s + R2, d2 = d * d;
    Eigen::Matrix<double, 3, 2> J;
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 2; ++i)
            J(i, j) = 2.0 * R2 * ((i == j ? d : 0.0) - 2.0 * y[i] * y[j]) / d2;
        J(2, j) = -4.0 * R2 * R * y[j] / d2;
    }
    return J;
}

double StereoChart::conformal_factor(const Vec2& y) const
{
    return 2.0 * radius_ * radius_ / (y.squaredNorm() + radius_ * radius_);
}

Eigen::Matrix<double, 2, 3> StereoChart::forward_differential(const Vec3& p) const
{
    const double R = radius_;
    const double t = R + p.z();
    Eigen::Matrix<double, 2, 3> D;
    D << R / t, 0.0, -R * p.x() / (t * t),
         0.0, R / t, -R * p.y() / (t * t);
    return D;
}

SurfaceField pullback_function(const StereoChart& chart, Field u_tilde)
{
    return [chart, u = std::move(u_tilde)](const Vec3& p) { return u(chart.forward(p)); };
}

MeasureSpec pushforward_measure(const MeasureSpec& m, PushDirection direction, double sphere_radius)
{
    if (direction == PushDirection::DiskToSphere) {
        if (m.space() != SpaceKind::Plane)
            throw Error(ErrorKind::Domain, "pushforward_measure: disk->sphere needs a planar measure");
        if (const auto* pf = m.as<Pushforward>(); pf && pf->direction == PushDirection::SphereToDisk)
            return *pf->base;
        return MeasureSpec(Pushforward{std::make_shared<const MeasureSpec>(m), direction, sphere_radius});
    }
    if (m.space() != SpaceKind::StereoSphere)
        throw Error(ErrorKind::Domain, "pushforward_measure: sphere->disk needs a hemisphere-chart measure");
    if (std::abs(m.sphere_radius() - sphere_radius) > 1e-12)
        throw Error(ErrorKind::Domain, "pushforward_measure: sphere radius mismatch");
    if (const auto* pf = m.as<Pushforward>(); pf && pf->direction == PushDirection::DiskToSphere)
        return *pf->base;
    return MeasureSpec(Pushforward{std::make_shared<const MeasureSpec>(m), direction, sphere_radius});
}

} // namespace krein
