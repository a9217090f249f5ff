#pragma once

#include "krein/common.hpp"

#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace krein {

// Regions carrying area measures (chart coordinates).
struct Box {
    Vec2 lo, hi;
};
struct Disk {
    Vec2 center = Vec2::Zero();
    double radius = 1.0;
};
using Region = std::variant<Box, Disk>;

/// Lebesgue measure on a planar region, optionally weighted by a bounded density.
struct AreaLebesgue {
    Region region;
    double density = 1.0;
    Field density_field;    // multiplies `density` when set
};

struct Segment {
    Vec2 p, q;
    double density = 1.0;   // mass per unit chart length
};

/// One-dimensional Lebesgue measures on straight segments.
struct LineSegments {
    std::vector<Segment> segments;
};

struct AffineMap {
    Eigen::Matrix2d A;
    Vec2 b;
    Vec2 operator()(const Vec2& x) const { return A * x + b; }
    double ratio() const;   // operator 2-norm of A
};

class IfsLeaves;

/// Self-similar measure of a contractive IFS, discretized by its cells at `depth`.
struct SelfSimilarIFS {
    std::vector<AffineMap> maps;
    std::vector<double> probs;
    int depth = 12;
    double mass = 1.0;
    std::shared_ptr<const IfsLeaves> leaves;   // built by make_ifs
};

/// Surface measure of the round sphere of the given radius (closed-sphere meshes).
struct SphereSurface {
    double radius = 1.0;
};

class MeasureSpec;

struct SumMeasure {
    std::vector<MeasureSpec> parts;
};

enum class PushDirection { DiskToSphere, SphereToDisk };

/// Image of `base` under the stereographic pair. Nodes keep their chart
/// coordinates; only the ambient space (and hence balls) change.
struct Pushforward {
    std::shared_ptr<const MeasureSpec> base;
    PushDirection direction = PushDirection::DiskToSphere;
    double sphere_radius = 2.0;
};

/// Ambient space a measure lives in.
enum class SpaceKind { Plane, StereoSphere, ClosedSphere };

class MeasureSpec {
public:
    using Variant = std::variant<AreaLebesgue, LineSegments, SelfSimilarIFS, SphereSurface,
                                 SumMeasure, Pushforward>;

    MeasureSpec(Variant v);

    const Variant& variant() const { return v_; }
    SpaceKind space() const { return space_; }
    double sphere_radius() const { return radius_; }

    template <class T> const T* as() const { return std::get_if<T>(&v_); }

private:
    Variant v_;
    SpaceKind space_ = SpaceKind::Plane;
    double radius_ = 0.0;
};

// Builders.
MeasureSpec make_area(Region region, double density = 1.0, Field density_field = {});
MeasureSpec make_lines(std::vector<Segment> segments);
MeasureSpec make_ifs(std::vector<AffineMap> maps, std::vector<double> probs, int depth = 12,
                     double mass = 1.0);
MeasureSpec make_sphere_surface(double radius);
MeasureSpec make_sum(std::vector<MeasureSpec> parts);

/// Unit-density segments (-a,a)x{0} and {0}x(-b,b).
MeasureSpec make_cross(double half_width = 1.0, double half_height = 1.0, double density = 1.0);
/// Middle-thirds Cantor measure on [0,1]x{0}.
MeasureSpec make_cantor(int depth = 12);

/// Leaf cells of an IFS: barycenter and weight, bucketed for box queries.
class IfsLeaves {
public:
    IfsLeaves(const std::vector<AffineMap>& maps, const std::vector<double>& probs, int depth,
              double mass);

    struct Leaf {
        Vec2 x;
        double w;
    };
    const std::vector<Leaf>& leaves() const { return leaves_; }
    /// Indices of leaves whose point lies in the closed box.
    void query(const Vec2& lo, const Vec2& hi, std::vector<int>& out) const;
    Vec2 lo() const { return lo_; }
    Vec2 hi() const { return hi_; }

private:
    std::vector<Leaf> leaves_;
    Vec2 lo_, hi_;
    int nx_ = 1, ny_ = 1;
    std::vector<int> cell_start_, cell_items_;
};

/// Geometric element a measure is integrated on.
struct Element {
    Tri2 chart;
    std::array<Vec3, 3> embedded;   // z = 0 lift for planar meshes
};

Element planar_element(const Tri2& t);

/// Quadrature node of a measure restricted to one element.
struct MeasureNode {
    Eigen::Vector3d bary;   // barycentric coordinates in the element
    Vec2 chart;
    Vec3 space;             // location in the measure's ambient space
    double w;
};

/// Appends the nodes of m inside the element. Points on shared edges and vertices
/// are assigned to exactly one element (half-open ownership rule).
void element_nodes(const MeasureSpec& m, const Element& e, std::vector<MeasureNode>& out);

/// Total mass mu(Omega).
double total_mass(const MeasureSpec& m);

/// Integral of f (chart coordinates) over the element.
double integrate_on_element(const MeasureSpec& m, const Field& f, const Element& e);
double integrate_on_element(const MeasureSpec& m, const Field& f, const Tri2& tri);

/// All quadrature nodes of the measure (not tied to a mesh), e.g. for Green operators.
std::vector<MeasureNode> global_nodes(const MeasureSpec& m, int resolution = 64);

/// mu(B_delta(center)). Euclidean balls in the plane, geodesic balls on spheres.
double ball_mass(const MeasureSpec& m, const Vec3& center, double delta);
inline double ball_mass(const MeasureSpec& m, const Vec2& center, double delta)
{
    return ball_mass(m, Vec3(center.x(), center.y(), 0.0), delta);
}

struct DimEstimate {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<std::pair<double, double>> table;   // (delta, sup ball mass), ascending delta
    std::pair<double, double> delta_range;          // range used by the fit
};

/// Lower L-infinity dimension by regression of ln sup_x mu(B_delta(x)) on ln delta
/// over the five smallest deltas. The sup over a finite center set is a lower bound.
DimEstimate estimate_dim_infinity(const MeasureSpec& m, std::vector<double> delta_grid,
                                  const std::vector<Vec3>& centers, Exec exec = Exec::Parallel);

/// Per-variant default centers sampling supp(mu).
std::vector<Vec3> default_centers(const MeasureSpec& m);

/// 2^-k for k in [kmin, kmax].
std::vector<double> dyadic_grid(int kmin, int kmax);

} // namespace krein
