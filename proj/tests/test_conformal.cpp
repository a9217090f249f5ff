#include <doctest.h>

#include "krein/conformal.hpp"

#include <cmath>
#include <random>

using namespace krein;

TEST_CASE("stereographic pair at reference points")
{
    const StereoChart c(2.0);
    CHECK((c.forward(Vec3(0, 0, 2)) - Vec2(0, 0)).norm() < 1e-15);
    CHECK((c.forward(Vec3(2, 0, 0)) - Vec2(2, 0)).norm() < 1e-15);
    const double s = std::sqrt(2.0);
    CHECK((c.forward(Vec3(0, s, s)) - Vec2(0, 2 * s / (2 + s))).norm() < 1e-15);
    CHECK(c.forward(Vec3(0, s, s)).y() == doctest::Approx(0.828427).epsilon(1e-6));
    CHECK((c.inverse(Vec2(0, 0)) - Vec3(0, 0, 2)).norm() < 1e-15);
    CHECK((c.inverse(Vec2(2, 0)) - Vec3(2, 0, 0)).norm() < 1e-15);
}

TEST_CASE("stereographic pair errors")
{
    const StereoChart c(2.0);
    auto kind = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::IO;
    };
    CHECK(kind([&] { c.inverse(Vec2(2.1, 0)); }) == ErrorKind::Domain);
    CHECK(kind([&] { c.forward(Vec3(0, 0, 3)); }) == ErrorKind::Domain);
    CHECK(kind([&] { c.forward(Vec3(0, 0, -2)); }) == ErrorKind::Domain);
}

TEST_CASE("round trips")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-1, 1);
    for (double R : {2.0, 0.5, 3.0}) {
        const StereoChart c(R);
        for (int i = 0; i < 100; ++i) {
            Vec2 y(U(rng), U(rng));
            if (y.norm() > 1) y /= 1.01 * y.norm();
            y *= R;
            CHECK((c.forward(c.inverse(y)) - y).norm() <= 1e-12 * R);
            const Vec3 p = c.inverse(y);
            CHECK(std::abs(p.norm() - R) <= 1e-12 * R);
            CHECK((c.inverse(c.forward(p)) - p).norm() <= 1e-12 * R);
        }
    }
}

TEST_CASE("jacobian of the inverse")
{
    const StereoChart c(2.0);
    CHECK(c.jacobian_inverse_det(2.0) == doctest::Approx(1.0));
    CHECK(c.jacobian_inverse_det(0.0) == doctest::Approx(0.25));
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double j = c.jacobian_inverse_det(0.02 * i);
        CHECK(j > prev);
        CHECK(j <= 1.0 + 1e-15);
        prev = j;
    }
}

TEST_CASE("differentials are conformal")
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-1, 1);
    const StereoChart c(2.0);
    for (int i = 0; i < 100; ++i) {
        Vec2 y(U(rng), U(rng));
        y *= 1.9 / std::max(1.0, y.norm());
        // Finite-difference check of the inverse differential.
        const auto D = c.inverse_differential(y);
        const double h = 1e-6;
        for (int k = 0; k < 2; ++k) {
            Vec2 e = Vec2::Zero();
            e[k] = h;
            const Vec3 fd = (c.inverse(y + e) - c.inverse(y - e)) / (2 * h);
            CHECK((fd - D.col(k)).norm() < 1e-8);
        }
        CHECK(std::abs(D.col(0).dot(D.col(1))) < 1e-12);
        CHECK(D.col(0).norm() == doctest::Approx(c.conformal_factor(y)).epsilon(1e-12));
        CHECK(D.col(1).norm() == doctest::Approx(c.conformal_factor(y)).epsilon(1e-12));

        // Forward differential on a random orthonormal tangent pair scales both equally.
        const Vec3 p = c.inverse(y);
        const Vec3 n = p.normalized();
        Vec3 t1 = Vec3(U(rng), U(rng), U(rng));
        t1 = (t1 - t1.dot(n) * n).normalized();
        const Vec3 t2 = n.cross(t1);
        const auto F = c.forward_differential(p);
        const Vec2 a = F * t1, b = F * t2;
        CHECK(a.norm() / b.norm() == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(std::abs(a.dot(b)) < 1e-10 * a.squaredNorm());
    }
}

TEST_CASE("pullback of chart functions")
{
    const StereoChart c(2.0);
    const auto one = pullback_function(c, [](const Vec2&) { return 1.0; });
    CHECK(one(Vec3(0, 0, 2)) == 1.0);
    const auto u = pullback_function(c, [](const Vec2& p) { return (1 - std::abs(p.x())) * (1 - std::abs(p.y())); });
    CHECK(u(Vec3(0, 0, 2)) == doctest::Approx(1.0));
    CHECK(std::abs(u(c.inverse(Vec2(1, 0)))) < 1e-12);
    CHECK_THROWS_AS(u(Vec3(0, 0, 5)), Error);
}
