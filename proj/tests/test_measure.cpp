#include <doctest.h>

#include "krein/conformal.hpp"
#include "krein/measure.hpp"
#include "krein/mesh.hpp"
#include "krein/quadrature.hpp"

#include <cmath>
#include <limits>

using namespace krein;

namespace {

double tent(const Vec2& p) { return (1 - std::abs(p.x())) * (1 - std::abs(p.y())); }

double sum_over_mesh(const MeasureSpec& m, const Field& f, const TriMesh& mesh)
{
    double s = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        Element e;
        e.chart = mesh.triangle(t);
        e.embedded = mesh.has_embedding() ? mesh.embedded_triangle(t) : planar_element(e.chart).embedded;
        s += integrate_on_element(m, f, e);
    }
    return s;
}

// Composite Simpson, independent of the library's Gauss rules.
template <class F>
double simpson(F f, double a, double b, int n = 2000)
{
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
    return s * h / 3;
}

} // namespace

TEST_CASE("total masses")
{
    CHECK(total_mass(make_area(Box{Vec2(-1, -1), Vec2(1, 1)})) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(total_mass(make_cross()) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(total_mass(make_cantor(10)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(total_mass(make_area(Disk{Vec2(0, 0), 0.5})) == doctest::Approx(kPi / 4).epsilon(1e-10));
    CHECK(total_mass(make_sphere_surface(2)) == doctest::Approx(16 * kPi).epsilon(1e-12));
    CHECK(total_mass(make_sum({make_cross(), make_cantor(8)})) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("measure validation")
{
    auto kind = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::IO;   // sentinel: nothing thrown
    };
    AffineMap half{Eigen::Matrix2d::Identity() * 0.5, Vec2(0, 0)};
    AffineMap id{Eigen::Matrix2d::Identity(), Vec2(0, 0)};
    CHECK(kind([&] { make_ifs({half, half}, {0.5, 0.6}); }) == ErrorKind::InvalidInput);
    CHECK(kind([&] { make_ifs({half, id}, {0.5, 0.5}); }) == ErrorKind::InvalidInput);
    CHECK(kind([&] { make_lines({}); }) == ErrorKind::InvalidInput);
    CHECK(kind([&] { make_area(Box{Vec2(0, 0), Vec2(0, 1)}); }) == ErrorKind::InvalidInput);
    CHECK(kind([&] { make_sum({make_cross(), make_sphere_surface(1)}); }) == ErrorKind::InvalidInput);
}

TEST_CASE("additivity over a mesh partition")
{
    const TriMesh mesh = gen_rectangle(1, 1, 8);
    const Field one = [](const Vec2&) { return 1.0; };
    for (const MeasureSpec& m : {make_cross(), make_area(Box{Vec2(-0.5, -0.3), Vec2(0.7, 0.9)}),
                                 make_cantor(10),
                                 make_lines({{Vec2(-0.9, -0.8), Vec2(0.7, 0.95), 2.0}})}) {
        const double mass = total_mass(m);
        CHECK(std::abs(sum_over_mesh(m, one, mesh) - mass) <= 1e-9 * mass);
    }
    // Disk region: the recursive clip loses at most a sliver.
    const MeasureSpec disk = make_area(Disk{Vec2(0, 0), 0.75});
    CHECK(std::abs(sum_over_mesh(disk, one, mesh) - total_mass(disk)) <= 1e-3 * total_mass(disk));

    // Sphere: the projected-area Jacobian is smooth, so only quadrature error remains
    // and it shrinks under refinement.
    const MeasureSpec s = make_sphere_surface(1);
    const double e3 = std::abs(sum_over_mesh(s, one, gen_sphere(1, 3)) - 4 * kPi);
    const double e4 = std::abs(sum_over_mesh(s, one, gen_sphere(1, 4)) - 4 * kPi);
    MESSAGE("sphere mass error level 3: " << e3 << ", level 4: " << e4);
    CHECK(e3 < 1e-5);
    CHECK(e4 < e3);
}

TEST_CASE("cross measure integrals")
{
    const TriMesh mesh = gen_rectangle(1, 1, 6);
    const MeasureSpec cross = make_cross();
    CHECK(sum_over_mesh(cross, [](const Vec2&) { return 1.0; }, mesh) == doctest::Approx(4.0).epsilon(1e-12));
    // Each axis contributes int (1 - |t|) dt = 1.
    const double oracle = 2 * simpson([](double t) { return tent(Vec2(t, 0)); }, -1, 1);
    CHECK(oracle == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(sum_over_mesh(cross, tent, mesh) == doctest::Approx(oracle).epsilon(1e-12));
    // x^4 y^0 on the horizontal axis: 2/5; the vertical axis contributes 0.
    CHECK(sum_over_mesh(cross, [](const Vec2& p) { return std::pow(p.x(), 4); }, mesh) ==
          doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("area measure integrals")
{
    const TriMesh mesh = gen_rectangle(1, 1, 4);
    const MeasureSpec sq = make_area(Box{Vec2(-1, -1), Vec2(1, 1)});
    CHECK(std::abs(sum_over_mesh(sq, [](const Vec2& p) { return p.x(); }, mesh)) < 1e-14);
    CHECK(sum_over_mesh(sq, [](const Vec2& p) { return p.x() * p.x() * p.y() * p.y(); }, mesh) ==
          doctest::Approx(4.0 / 9).epsilon(1e-12));
    // Density field multiplies the base density.
    const MeasureSpec w = make_area(Box{Vec2(-1, -1), Vec2(1, 1)}, 2.0, [](const Vec2& p) { return 1 + p.x() * p.x(); });
    CHECK(total_mass(w) == doctest::Approx(2 * (4 + 4.0 / 3)).epsilon(1e-10));
}

TEST_CASE("non-finite integrand raises a quadrature error")
{
    const TriMesh mesh = gen_rectangle(1, 1, 2);
    const Field bad = [](const Vec2&) { return std::numeric_limits<double>::quiet_NaN(); };
    try {
        sum_over_mesh(make_cross(), bad, mesh);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Quadrature);
    }
}

TEST_CASE("ball masses")
{
    CHECK(ball_mass(make_cross(), Vec2(0.5, 0), 0.1) == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(ball_mass(make_cross(), Vec2(0, 0), 0.25) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(ball_mass(make_area(Box{Vec2(-1, -1), Vec2(1, 1)}), Vec2(0, 0), 0.5) == doctest::Approx(kPi / 4).epsilon(1e-4));
    CHECK(ball_mass(make_cross(), Vec2(0.5, 0.5), 0.2) == 0.0);
    for (int k = 1; k <= 6; ++k)
        CHECK(ball_mass(make_cantor(12), Vec2(0, 0), std::pow(3.0, -k)) == doctest::Approx(std::pow(2.0, -k)).epsilon(1e-12));
    // Geodesic balls on the sphere: cap area 2 pi R^2 (1 - cos(d/R)).
    const double R = 2, d = 0.7;
    CHECK(ball_mass(make_sphere_surface(R), Vec3(0, 0, R), d) ==
          doctest::Approx(2 * kPi * R * R * (1 - std::cos(d / R))).epsilon(1e-6));
    CHECK_THROWS_AS(ball_mass(make_cross(), Vec2(0, 0), 0.0), Error);
}

TEST_CASE("ball mass is monotone in delta")
{
    for (const MeasureSpec& m : {make_cross(), make_cantor(10), make_area(Disk{Vec2(0.2, 0), 0.5})}) {
        const Vec2 c(0.1, 0.0);
        double prev = 0.0;
        for (int i = 1; i <= 40; ++i) {
            const double b = ball_mass(m, c, 0.03 * i);
            CHECK(b >= prev - 1e-15);
            prev = b;
        }
    }
}

TEST_CASE("lower L-infinity dimension")
{
    SUBCASE("area")
    {
        const MeasureSpec m = make_area(Box{Vec2(-1, -1), Vec2(1, 1)});
        const auto est = estimate_dim_infinity(m, dyadic_grid(3, 7), default_centers(m));
        CHECK(est.slope >= 1.9);
        CHECK(est.slope <= 2.1);
        for (std::size_t i = 1; i < est.table.size(); ++i) CHECK(est.table[i].second >= est.table[i - 1].second);
    }
    SUBCASE("cross")
    {
        const MeasureSpec m = make_cross();
        const auto est = estimate_dim_infinity(m, dyadic_grid(3, 8), default_centers(m));
        CHECK(est.slope == doctest::Approx(1.0).epsilon(0.1));
    }
    SUBCASE("cantor")
    {
        const MeasureSpec m = make_cantor(12);
        std::vector<double> grid;
        for (int k = 2; k <= 8; ++k) grid.push_back(std::pow(3.0, -k));
        const auto est = estimate_dim_infinity(m, grid, default_centers(m));
        CHECK(std::abs(est.slope - std::log(2.0) / std::log(3.0)) <= 0.03);
        CHECK(est.delta_range.first == doctest::Approx(std::pow(3.0, -8)));
    }
    SUBCASE("serial and parallel agree")
    {
        const MeasureSpec m = make_cantor(10);
        const auto a = estimate_dim_infinity(m, dyadic_grid(2, 8), default_centers(m), Exec::Serial);
        const auto b = estimate_dim_infinity(m, dyadic_grid(2, 8), default_centers(m), Exec::Parallel);
        CHECK(a.slope == b.slope);
        CHECK(a.table == b.table);
    }
    CHECK_THROWS_AS(estimate_dim_infinity(make_cross(), dyadic_grid(3, 8), {}), Error);
}

TEST_CASE("pushforward keeps masses and integrals")
{
    const MeasureSpec cross = make_cross();
    const MeasureSpec up = pushforward_measure(cross, PushDirection::DiskToSphere, 2.0);
    CHECK(up.space() == SpaceKind::StereoSphere);
    CHECK(total_mass(up) == doctest::Approx(4.0).epsilon(1e-12));

    const StereoChart chart(2.0);
    double a = 0.0, b = 0.0;
    for (const auto& nd : global_nodes(cross, 64)) a += nd.w * tent(nd.chart);
    for (const auto& nd : global_nodes(up, 64)) b += nd.w * tent(chart.forward(nd.space));
    CHECK(a == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(b == doctest::Approx(2.0).epsilon(1e-10));

    // Horizontal segment alone: its image still carries mass 2.
    const MeasureSpec xaxis = make_lines({{Vec2(-1, 0), Vec2(1, 0), 1.0}});
    CHECK(total_mass(pushforward_measure(xaxis, PushDirection::DiskToSphere, 2.0)) == doctest::Approx(2.0));

    // Round trip back to the disk.
    const MeasureSpec down = pushforward_measure(up, PushDirection::SphereToDisk, 2.0);
    CHECK(down.space() == SpaceKind::Plane);
    CHECK(total_mass(down) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_THROWS_AS(pushforward_measure(cross, PushDirection::SphereToDisk, 2.0), Error);
}
