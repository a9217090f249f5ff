#include <doctest.h>

#include "krein/mesh.hpp"
#include "krein/quadrature.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace krein;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

} // namespace

TEST_CASE("gauss-legendre integrates polynomials of degree 2n-1 exactly")
{
    for (int n : {1, 3, 5, 8, 10}) {
        for (int p = 0; p <= 2 * n - 1; ++p) {
            const double got = quad::integrate_1d([p](double x) { return std::pow(x, p); }, -1.0, 1.0, n);
            const double want = p % 2 ? 0.0 : 2.0 / (p + 1);
            CHECK(got == doctest::Approx(want).epsilon(1e-13));
        }
    }
}

TEST_CASE("seven-point triangle rule is exact to degree 5")
{
    // Reference triangle (0,0),(1,0),(0,1): int x^a y^b = a! b! / (a+b+2)!
    const Tri2 t{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
    for (int a = 0; a <= 5; ++a)
        for (int b = 0; a + b <= 5; ++b) {
            const double got = quad::integrate_triangle([&](const Vec2& p) { return std::pow(p.x(), a) * std::pow(p.y(), b); }, t);
            CHECK(got == doctest::Approx(factorial(a) * factorial(b) / factorial(a + b + 2)).epsilon(1e-13));
        }
}

TEST_CASE("gen_rectangle combinatorics")
{
    const TriMesh m = gen_rectangle(1, 1, 2);
    CHECK(m.num_vertices() == 25);
    CHECK(m.num_triangles() == 32);
    CHECK(m.num_boundary() == 16);
    CHECK(m.euler_characteristic() == 1);
    CHECK(m.total_chart_area() == doctest::Approx(4.0).epsilon(1e-15));
    for (int t = 0; t < m.num_triangles(); ++t) CHECK(m.chart_area(t) > 0.0);
}

TEST_CASE("gen_rectangle contains the axes as edge unions")
{
    const TriMesh m = gen_rectangle(1, 1, 64);
    int origin = -1;
    for (int v = 0; v < m.num_vertices(); ++v)
        if (m.vertices()[v].x() == 0.0 && m.vertices()[v].y() == 0.0) origin = v;
    REQUIRE(origin >= 0);
    CHECK_FALSE(m.is_boundary(origin));
    // Every consecutive pair of vertices on x = 0 is joined by an edge.
    std::set<std::array<int, 2>> E;
    for (const auto& e : m.edges()) E.insert(e);
    std::vector<int> axis;
    for (int v = 0; v < m.num_vertices(); ++v)
        if (m.vertices()[v].x() == 0.0) axis.push_back(v);
    std::sort(axis.begin(), axis.end(), [&](int a, int b) { return m.vertices()[a].y() < m.vertices()[b].y(); });
    CHECK(axis.size() == 129u);
    for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
        const int a = std::min(axis[i], axis[i + 1]), b = std::max(axis[i], axis[i + 1]);
        CHECK(E.count({a, b}) == 1);
    }
}

TEST_CASE("gen_rectangle rejects n < 2")
{
    CHECK_THROWS_AS(gen_rectangle(1, 1, 1), Error);
    try {
        gen_rectangle(1, 1, 1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidInput);
    }
}

TEST_CASE("refinement halves the maximum edge length")
{
    for (int n : {4, 8, 16}) {
        const double h1 = gen_rectangle(1, 1, n).max_edge_length(), h2 = gen_rectangle(1, 1, 2 * n).max_edge_length();
        CHECK(h1 / h2 == doctest::Approx(2.0).epsilon(0.25));
        const double d1 = gen_disk(1, 3).max_edge_length(), d2 = gen_disk(1, 4).max_edge_length();
        CHECK(d1 / d2 > 2.0 / 1.5);
        CHECK(d1 / d2 < 2.0 * 1.5);
    }
}

TEST_CASE("gen_disk geometry")
{
    SUBCASE("boundary on the circle")
    {
        const TriMesh m = gen_disk(2, 3);
        for (int v : m.boundary_vertices()) CHECK(std::abs(m.vertices()[v].squaredNorm() - 4.0) < 1e-12);
        CHECK(m.euler_characteristic() == 1);
    }
    SUBCASE("area converges to pi")
    {
        const TriMesh m = gen_disk(1, 6);
        CHECK(m.num_triangles() >= 5000);
        CHECK(std::abs(m.total_chart_area() - kPi) / kPi < 0.01);
    }
    SUBCASE("coarsest mesh has an interior vertex")
    {
        const TriMesh m = gen_disk(1, 1);
        CHECK(m.num_vertices() - m.num_boundary() >= 1);
    }
    CHECK_THROWS_AS(gen_disk(-1, 3), Error);
    CHECK_THROWS_AS(gen_disk(1, 0), Error);
}

TEST_CASE("hemisphere chart lifts vertices onto the sphere")
{
    const TriMesh base = gen_disk(2, 3);
    const TriMesh h = gen_hemisphere_chart(2, base);
    CHECK(h.chart().kind == ChartKind::StereographicSphere);
    CHECK(h.num_triangles() == base.num_triangles());
    CHECK(h.boundary_mask() == base.boundary_mask());
    for (int v = 0; v < h.num_vertices(); ++v) {
        CHECK(std::abs(h.embedded()[v].squaredNorm() - 4.0) < 1e-12);
        CHECK(h.embedded()[v].z() >= -1e-12);
    }
    CHECK((h.embedded()[0] - Vec3(0, 0, 2)).norm() < 1e-15);   // center vertex
    for (int v : h.boundary_vertices()) CHECK(std::abs(h.embedded()[v].z()) < 1e-12);
    for (int t = 0; t < h.num_triangles(); ++t) CHECK(h.embedded_area(t) > 0.0);

    // A vertex outside the chart disk is rejected.
    CHECK_THROWS_AS(gen_hemisphere_chart(0.5, gen_rectangle(1, 1, 2)), Error);
}

TEST_CASE("icosphere is a closed surface")
{
    for (int level : {0, 1, 3}) {
        const TriMesh s = gen_sphere(1.5, level);
        CHECK(s.euler_characteristic() == 2);
        CHECK(s.num_boundary() == 0);
        CHECK(s.num_vertices() == 10 * (1 << (2 * level)) + 2);
        for (const auto& p : s.embedded()) CHECK(std::abs(p.norm() - 1.5) < 1e-12);
        for (int t = 0; t < s.num_triangles(); ++t) {
            const auto P = s.embedded_triangle(t);
            // outward orientation
            CHECK((P[1] - P[0]).cross(P[2] - P[0]).dot(P[0] + P[1] + P[2]) > 0.0);
        }
    }
    CHECK(std::abs(gen_sphere(1, 4).total_embedded_area() - 4 * kPi) / (4 * kPi) < 0.005);
}

TEST_CASE("mesh text format round trip")
{
    for (const TriMesh& m : {gen_rectangle(1, 0.5, 3), gen_hemisphere_chart(2, gen_disk(2, 2)), gen_sphere(1, 1)}) {
        std::stringstream ss;
        write_mesh(ss, m);
        CHECK(ss.str().rfind("KLMESH 1 ", 0) == 0);
        const TriMesh r = read_mesh(ss);
        CHECK(r.num_vertices() == m.num_vertices());
        CHECK(r.triangles() == m.triangles());
        CHECK(r.boundary_mask() == m.boundary_mask());
        CHECK(r.chart().kind == m.chart().kind);
        for (int v = 0; v < m.num_vertices(); ++v) CHECK((r.vertices()[v] - m.vertices()[v]).norm() == 0.0);
    }
    std::stringstream bad("KLMESH 1 planar\nV 3\n0 0\n1 0\n");
    CHECK_THROWS_AS(read_mesh(bad), Error);
}
