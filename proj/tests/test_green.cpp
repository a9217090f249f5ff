#include <doctest.h>

#include "krein/green.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace krein;

namespace {

const Vec3 O = Vec3::Zero();

double tent(const Vec3& x) { return (1 - std::abs(x.x())) * (1 - std::abs(x.y())); }

} // namespace

TEST_CASE("closed-form kernel values")
{
    const GreenKernel disk = DiskDirichlet{1.0};
    CHECK(kernel_eval(disk, Vec2(0, 0), Vec2(0.5, 0)) == doctest::Approx(std::log(2.0) / (2 * kPi)).epsilon(1e-13));
    // Radius scaling: G_R(Rx, Ry) = G_1(x, y).
    CHECK(kernel_eval(DiskDirichlet{3.0}, Vec2(0.6, 0.3), Vec2(-0.9, 1.2)) ==
          doctest::Approx(kernel_eval(disk, Vec2(0.2, 0.1), Vec2(-0.3, 0.4))).epsilon(1e-13));

    const GreenKernel sph = SphereClosed{1.0};
    CHECK(kernel_eval(sph, Vec3(0, 0, 1), Vec3(0, 0, -1)) == doctest::Approx(-1.0 / (4 * kPi)).epsilon(1e-13));
    const double q = std::sqrt(0.5);
    // |x - y|^2 = 2 at a right angle.
    CHECK(kernel_eval(sph, Vec3(0, 0, 1), Vec3(1, 0, 0)) == doctest::Approx((std::log(2.0) - 1) / (4 * kPi)));
    CHECK(kernel_eval(SphereClosed{2.0}, Vec3(0, 0, 2), Vec3(2 * q, 0, 2 * q)) ==
          doctest::Approx(kernel_eval(sph, Vec3(0, 0, 1), Vec3(q, 0, q))).epsilon(1e-13));

    CHECK_THROWS_AS(kernel_eval(disk, Vec2(0.1, 0), Vec2(0.1, 0)), Error);
    CHECK_THROWS_AS(kernel_eval(disk, Vec2(2, 0), Vec2(0.1, 0)), Error);
    CHECK_THROWS_AS(kernel_eval(sph, Vec3(0, 0, 1), Vec3(0, 0, 0.5)), Error);
}

TEST_CASE("kernel symmetry, sign and boundary values")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-1, 1);
    const RectangleDirichlet rect{1.0, 1.0, 200};
    for (int t = 0; t < 100; ++t) {
        Vec2 x(U(rng), U(rng)), y(U(rng), U(rng));
        const GreenKernel rk = rect;
        const double gxy = kernel_eval(rk, x, y), gyx = kernel_eval(rk, y, x);
        CHECK(std::abs(gxy - gyx) <= 1e-12 * std::abs(gxy) + 1e-14);
        CHECK(gxy >= -1e-10);
        CHECK(std::abs(gxy - rectangle_kernel_images(rect, x, y)) < 2e-3);
        CHECK(std::abs(rectangle_kernel_images(rect, x, y) - rectangle_kernel_images(rect, y, x)) < 1e-12);

        const Vec2 dx = 0.7 * x, dy = 0.7 * y;   // inside the unit disk
        const GreenKernel dk = DiskDirichlet{};
        CHECK(kernel_eval(dk, dx, dy) == doctest::Approx(kernel_eval(dk, dy, dx)).epsilon(1e-12));
        CHECK(kernel_eval(dk, dx, dy) > 0);
        const double th = kPi * U(rng);
        CHECK(std::abs(kernel_eval(dk, Vec2(std::cos(th), std::sin(th)), dy)) < 1e-14);
        CHECK(std::abs(rectangle_kernel_images(rect, Vec2(1, y.y()), x)) < 1e-12);
        CHECK(std::abs(kernel_eval(GreenKernel(rect), Vec2(x.x(), -1), y)) < 1e-10);
    }
    CHECK(rectangle_series_tail(rect) > 0);
    CHECK(rectangle_series_tail(RectangleDirichlet{1, 1, 400}) < rectangle_series_tail(rect));
}

TEST_CASE("sphere kernel has zero mean")
{
    const GreenKernel k = SphereClosed{1.0};
    const MeasureSpec mu = make_sphere_surface(1.0);
    for (const Vec3& y : {Vec3(0, 0, 1), Vec3(0.6, 0, 0.8), Vec3(0, -1, 0)}) {
        const double v = green_apply(k, mu, [](const Vec3&) { return 1.0; }, y);
        CHECK(std::abs(v) < 1e-6);
    }
}

TEST_CASE("distributional identity with bump test fields")
{
    CHECK(verify_distributional_identity(DiskDirichlet{}, Vec3(0.3, 0, 0), Bump{O, 0.5, 0}) < 1e-4);
    CHECK(verify_distributional_identity(DiskDirichlet{}, Vec3(0.1, 0.4, 0), Bump{Vec3(0.2, 0.2, 0), 0.6, 0}) <
          1e-4);
    CHECK(verify_distributional_identity(SphereClosed{1.0}, Vec3(0, 0, 1), Bump{Vec3(0, 0.6, 0.8), 1.0, 0}) < 1e-4);
    // Constants: -Delta 1 = 0 and the closed target 1 - mean(1) vanishes.
    CHECK(verify_distributional_identity(SphereClosed{1.0}, Vec3(0, 1, 0), Bump{Vec3(0, 0, 1), 0.5, 1.0}) < 1e-6);
    const double e100 = verify_distributional_identity(RectangleDirichlet{1, 1, 100}, Vec3(0.1, 0.2, 0), Bump{O, 0.4, 0});
    const double e400 = verify_distributional_identity(RectangleDirichlet{1, 1, 400}, Vec3(0.1, 0.2, 0), Bump{O, 0.4, 0});
    CHECK(e400 < e100);
    CHECK(e400 < 1e-4);
    CHECK_THROWS_AS(verify_distributional_identity(DiskDirichlet{}, Vec3(0.3, 0, 0), Bump{Vec3(0.8, 0, 0), 0.5, 0}),
                    Error);
}

TEST_CASE("Green operator against closed-form solutions")
{
    // -Delta u = 1 on the unit disk: u = (1 - |x|^2)/4.
    const GreenKernel disk = DiskDirichlet{};
    const MeasureSpec area = make_area(Disk{});
    const SpaceField one = [](const Vec3&) { return 1.0; };
    CHECK(green_apply(disk, area, one, O) == doctest::Approx(0.25).epsilon(1e-4));
    CHECK(green_apply(disk, area, one, Vec3(0.5, 0.2, 0)) == doctest::Approx(0.25 * (1 - 0.29)).epsilon(1e-4));
    CHECK(green_apply(disk, area, [](const Vec3&) { return 0.0; }, Vec3(0.5, 0, 0)) == 0.0);

    // Cross measure: the tent is an eigenfunction with lambda = 2.
    const GreenKernel rect = RectangleDirichlet{};
    const MeasureSpec cross = make_cross();
    for (const Vec3& x : {O, Vec3(0.5, 0, 0), Vec3(0.5, 0.5, 0), Vec3(-0.3, 0.8, 0)})
        CHECK(std::abs(green_apply(rect, cross, tent, x) - 0.5 * tent(x)) < 2e-4);

    // Extrapolation removes most of the truncation tail on the support.
    GreenOptions plain;
    plain.series_extrapolation = false;
    const double with = std::abs(green_apply(rect, cross, tent, O) - 0.5);
    const double without = std::abs(green_apply(rect, cross, tent, O, plain) - 0.5);
    CHECK(with < without);

    // Sphere: z has eigenvalue 2, so G z = z / 2.
    const GreenKernel sph = SphereClosed{1.0};
    GreenOptions sopt;
    sopt.sphere_level = 4;
    const SpaceField z = [](const Vec3& x) { return x.z(); };
    for (const Vec3& x : {Vec3(0, 0, 1), Vec3(0.6, 0, 0.8), Vec3(1, 0, 0)})
        CHECK(std::abs(green_apply(sph, make_sphere_surface(1.0), z, x, sopt) - 0.5 * x.z()) < 5e-3);
}

TEST_CASE("Green operator of a concentrated measure")
{
    // A tiny cluster of unit mass acts like a point mass.
    const GreenKernel disk = DiskDirichlet{};
    const double s = 1e-3;
    const MeasureSpec tiny = make_area(Box{Vec2(0.5 - s, 0.5 - s), Vec2(0.5 + s, 0.5 + s)}, 1.0 / (4 * s * s));
    const Vec3 x(-0.5, -0.4, 0);
    CHECK(green_apply(disk, tiny, [](const Vec3&) { return 1.0; }, x) ==
          doctest::Approx(kernel_eval(disk, Vec2(-0.5, -0.4), Vec2(0.5, 0.5))).epsilon(1e-5));
}

TEST_CASE("C2 constant")
{
    const GreenKernel rect = RectangleDirichlet{};
    const auto samples = sample_points(rect, 5);
    const double c1 = c2_constant(rect, make_cross(), samples);
    const double c2 = c2_constant(rect, make_cross(1, 1, 2.0), samples);
    CHECK(c1 > 0);
    CHECK(c2 == doctest::Approx(2 * c1).epsilon(1e-10));
    // Sample grid includes the origin, where int G dmu_cross is largest.
    CHECK(c1 == doctest::Approx(green_apply(rect, make_cross(), [](const Vec3&) { return 1.0; }, O)).epsilon(1e-12));
    CHECK_THROWS_AS(c2_constant(rect, make_cross(), {}), Error);
}

TEST_CASE("fixed point residual")
{
    // Analytic first eigenfunction of the Lebesgue square, interpolated.
    const TriMesh m = gen_rectangle(1, 1, 16);
    EigenPair e;
    e.index = 1;
    e.lambda = kPi * kPi / 2;
    e.coeffs.resize(m.num_vertices());
    for (int i = 0; i < m.num_vertices(); ++i)
        e.coeffs[i] = std::cos(kPi * m.vertices()[i].x() / 2) * std::cos(kPi * m.vertices()[i].y() / 2);
    const GreenKernel rect = RectangleDirichlet{};
    const MeasureSpec sq = make_area(Box{Vec2(-1, -1), Vec2(1, 1)});
    const double r = fixed_point_residual(rect, sq, m, e, sample_points(rect, 5));
    CHECK(r < 2e-3);

    // Sphere l = 1 from the discrete solver.
    const TriMesh s = gen_sphere(1, 3);
    const MeasureSpec area = make_sphere_surface(1);
    const Pencil p = assemble_pencil(s, area, BoundaryCondition::Closed);
    const auto pairs = solve_eigenpairs(p, 3);
    GreenOptions sopt;
    sopt.sphere_level = 3;
    const GreenKernel sph = SphereClosed{1.0};
    const auto sp = sample_points(sph, 3);
    CHECK(fixed_point_residual(sph, area, s, pairs[1], sp, Exec::Parallel, sopt) < 0.02);
    CHECK_THROWS_AS(fixed_point_residual(sph, area, s, pairs[0], sp, Exec::Parallel, sopt), Error);

    // Mesh and kernel mismatch.
    try {
        fixed_point_residual(DiskDirichlet{}, sq, m, e, sp);
        FAIL("expected an error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::Config);
    }
}

TEST_CASE("measure and kernel compatibility")
{
    CHECK_THROWS_AS(check_compatible(DiskDirichlet{}, make_sphere_surface(1)), Error);
    CHECK_THROWS_AS(check_compatible(SphereClosed{1.0}, make_cross()), Error);
    CHECK_THROWS_AS(check_compatible(SphereClosed{2.0}, make_sphere_surface(1)), Error);
    CHECK_NOTHROW(check_compatible(RectangleDirichlet{}, make_cross()));
    try {
        green_apply(DiskDirichlet{}, make_sphere_surface(1), [](const Vec3&) { return 1.0; }, O);
        FAIL("expected an error");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::Config);
    }
}

TEST_CASE("serial and parallel application agree")
{
    const GreenKernel rect = RectangleDirichlet{};
    const auto xs = sample_points(rect, 6);
    const GreenOperator op(rect, make_cross(), tent);
    const auto a = op.apply(xs, Exec::Serial);
    const auto b = op.apply(xs, Exec::Parallel);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("operator norm stays under the Schur bound")
{
    const auto est = operator_norm_estimate(RectangleDirichlet{}, make_cross(), 4, 9, 8);
    CHECK(est.ratios.size() == 4u);
    CHECK(est.max_ratio > 0);
    CHECK(est.max_ratio <= 1.02 * est.schur_bound);
    // ||G_mu|| is 1 / lambda_1 = 0.5 for the cross.
    CHECK(est.max_ratio <= 0.5 * 1.02);
}

TEST_CASE("green csv")
{
    std::ostringstream os;
    write_green_csv(os, {GreenCheckRow{"symmetry", "disk", "area", 1e-12, 1e-10, true}});
    CHECK(os.str().rfind("check,domain,measure,value,tolerance,pass\n", 0) == 0);
}
