#pragma once

#include "krein/common.hpp"
#include "krein/measure.hpp"

namespace krein {

/// Stereographic projection between the upper hemisphere of the sphere of radius R
/// (centered at the origin) and the open disk of radius R, projecting from the
/// south pole. For R = 2:
///   forward(x) = 2/(2+x3) (x1, x2),
///   inverse(y) = 2/(|y|^2+4) (4y1, 4y2, 4-|y|^2).
class StereoChart {
public:
    explicit StereoChart(double sphere_radius = 2.0);

    double radius() const { return radius_; }

    /// Hemisphere (x3 >= 0, on the sphere within 1e-9) -> disk.
    Vec2 forward(const Vec3& p) const;
    /// Closed disk |y| <= R -> closed upper hemisphere.
    Vec3 inverse(const Vec2& y) const;

    /// Area Jacobian of the inverse map written in sphere coordinates:
    /// (R + x3)^2 / (4R^2), i.e. (2 + x3)^2 / 16 for R = 2.
    double jacobian_inverse_det(double x3) const;

    /// d(inverse)/dy, a 3x2 matrix whose columns are orthogonal with equal length.
    Eigen::Matrix<double, 3, 2> inverse_differential(const Vec2& y) const;
    /// Length scale of inverse_differential: 2R^2 / (|y|^2 + R^2).
    double conformal_factor(const Vec2& y) const;
    /// d(forward) restricted to the tangent plane, as a 2x3 matrix.
    Eigen::Matrix<double, 2, 3> forward_differential(const Vec3& p) const;

private:
    double radius_;
};

using SurfaceField = std::function<double(const Vec3&)>;

/// u = u_tilde o forward. Evaluating off the hemisphere raises a domain error.
SurfaceField pullback_function(const StereoChart& chart, Field u_tilde);

/// Symbolic image measure through the stereographic pair. DiskToSphere expects a
/// planar base and yields mu = mu_tilde o forward on the hemisphere; SphereToDisk
/// expects a hemisphere measure and returns its planar image.
MeasureSpec pushforward_measure(const MeasureSpec& m, PushDirection direction,
                                double sphere_radius = 2.0);

} // namespace krein
