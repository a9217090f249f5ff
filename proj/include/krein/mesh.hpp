#pragma once

#include "krein/common.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace krein {

enum class ChartKind {
    Planar,                 // Euclidean domain, chart = geometry
    StereographicSphere,    // chart disk of a sphere cap, embedded = inverse projection
    ClosedSphere,           // whole sphere; chart stores (azimuth, polar angle)
};

struct Chart {
    ChartKind kind = ChartKind::Planar;
    double radius = 0.0;    // sphere radius for the two sphere kinds
};

std::string to_string(ChartKind k);

using TriIndex = std::array<int, 3>;

/// Immutable triangulation of a chart. Triangles are positively oriented in the
/// chart (or outward oriented on the embedded surface for ClosedSphere).
class TriMesh {
public:
    TriMesh(std::vector<Vec2> vertices, std::vector<TriIndex> triangles,
            std::vector<char> boundary, Chart chart = {},
            std::vector<Vec3> embedded = {});

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<TriIndex>& triangles() const { return triangles_; }
    const std::vector<char>& boundary_mask() const { return boundary_; }
    const std::vector<Vec3>& embedded() const { return embedded_; }
    const Chart& chart() const { return chart_; }

    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_triangles() const { return static_cast<int>(triangles_.size()); }
    int num_boundary() const;
    bool has_embedding() const { return !embedded_.empty(); }
    bool is_boundary(int v) const { return boundary_[v] != 0; }

    Tri2 triangle(int t) const;
    std::array<Vec3, 3> embedded_triangle(int t) const;

    /// Area measured in chart coordinates.
    double chart_area(int t) const;
    /// Area of the flat triangle through the embedded vertices.
    double embedded_area(int t) const;
    double total_chart_area() const;
    double total_embedded_area() const;

    /// Unique undirected edges as (lo, hi) pairs, sorted.
    std::vector<std::array<int, 2>> edges() const;
    int euler_characteristic() const;
    double max_edge_length() const;
    double min_angle_deg() const;

    /// Vertex indices of the boundary, ascending.
    std::vector<int> boundary_vertices() const;

private:
    std::vector<Vec2> vertices_;
    std::vector<TriIndex> triangles_;
    std::vector<char> boundary_;
    Chart chart_;
    std::vector<Vec3> embedded_;
};

inline constexpr double kMinAngleDeg = 5.0;

/// Structured grid of (-half_width, half_width) x (-half_height, half_height) with
/// 2n cells per side, so both axes are unions of mesh edges. Each cell is split
/// along its (+1, +1) diagonal.
TriMesh gen_rectangle(double half_width, double half_height, int n);

/// Concentric-ring disk with 2^level rings; ring k carries 6k vertices and the
/// outer ring lies on the circle.
TriMesh gen_disk(double radius, int level);

/// Re-tags a planar mesh as the stereographic chart of a sphere of the given
/// radius and fills the embedded coordinates by inverse projection.
TriMesh gen_hemisphere_chart(double sphere_radius, const TriMesh& base);

/// Closed icosphere (level subdivisions of the icosahedron) projected onto the sphere.
TriMesh gen_sphere(double radius, int level);

/// KLMESH text format.
void write_mesh(std::ostream& os, const TriMesh& mesh);
TriMesh read_mesh(std::istream& is);

} // namespace krein
