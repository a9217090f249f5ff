#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

namespace krein {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vector = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;

/// Scalar field over chart coordinates.
using Field = std::function<double(const Vec2&)>;

/// Error categories; the CLI maps them onto exit codes.
enum class ErrorKind {
    InvalidInput,   // bad arguments / resolution / empty sets
    Domain,         // point outside the chart or off the sphere
    Quadrature,     // non-finite integrand or unconverged singular quadrature
    Assembly,       // degenerate triangle, indefinite stiffness
    Numerical,      // solver breakdown
    Config,         // experiment configuration parse errors
    IO,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Execution policy for the data-parallel kernels. Serial is the reference path
/// the parallel one is tested against.
enum class Exec { Serial, Parallel };

/// Triangle in chart coordinates.
using Tri2 = std::array<Vec2, 3>;

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c)
{
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

inline double signed_area(const Tri2& t) { return signed_area(t[0], t[1], t[2]); }

/// Barycentric coordinates of p in t (may be negative outside).
inline Eigen::Vector3d barycentric(const Tri2& t, const Vec2& p)
{
    const double a = signed_area(t);
    Eigen::Vector3d l;
    l[0] = signed_area(p, t[1], t[2]) / a;
    l[1] = signed_area(t[0], p, t[2]) / a;
    l[2] = 1.0 - l[0] - l[1];
    return l;
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

} // namespace krein
