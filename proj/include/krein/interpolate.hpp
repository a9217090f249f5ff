#pragma once

#include "krein/mesh.hpp"

#include <optional>
#include <vector>

namespace krein {

/// Triangle containing a point together with its barycentric coordinates.
struct Location {
    int tri = -1;
    Eigen::Vector3d bary = Eigen::Vector3d::Zero();
};

/// Bucket-grid point location. Planar and stereographic meshes are searched in
/// chart coordinates; closed spheres by radial projection onto the flat faces.
class PointLocator {
public:
    explicit PointLocator(const TriMesh& mesh);

    /// Chart point (planar / stereographic meshes).
    std::optional<Location> locate(const Vec2& y) const;
    /// Ambient point: (x, y, 0) in the plane, any nonzero direction on a closed sphere.
    std::optional<Location> locate(const Vec3& x) const;

    const TriMesh& mesh() const { return *mesh_; }

private:
    const TriMesh* mesh_;
    bool sphere_ = false;
    Vec3 lo_, hi_;
    int n_[3] = {1, 1, 1};
    std::vector<int> start_, items_;

    int cell(int i, int j, int k) const { return (k * n_[1] + j) * n_[0] + i; }
    std::optional<Location> scan(const Vec3& q) const;
};

/// P1 function on a mesh evaluated anywhere in its domain.
class P1Function {
public:
    P1Function(const TriMesh& mesh, Vector values);

    double operator()(const Vec2& chart_point) const;
    double operator()(const Vec3& ambient_point) const;
    /// Value, or fallback where the point misses every triangle (zero extension of H^1_0 data).
    double value_or(const Vec3& ambient_point, double fallback) const;

    const Vector& values() const { return values_; }

private:
    PointLocator loc_;
    Vector values_;
};

} // namespace krein
