#include <doctest.h>

#include "krein/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

using namespace krein;

namespace {

MeasureSpec lebesgue_square() { return make_area(Box{Vec2(-1, -1), Vec2(1, 1)}); }

void check_pair_invariants(const Pencil& p, const std::vector<EigenPair>& pairs)
{
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Vector ui = p.restrict_to_dofs(pairs[i].coeffs);
        CHECK(ui.dot(p.M * ui) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(pairs[i].residual <= 1e-8);
        if (pairs[i].lambda > 0)
            CHECK(std::abs(rayleigh_quotient(p, pairs[i].coeffs) - pairs[i].lambda) <= 1e-8 * pairs[i].lambda);
        if (i > 0) CHECK(pairs[i].lambda >= pairs[i - 1].lambda);
        for (std::size_t j = 0; j < i; ++j) {
            const Vector uj = p.restrict_to_dofs(pairs[j].coeffs);
            CHECK(std::abs(ui.dot(p.M * uj)) <= 1e-8);
        }
    }
}

} // namespace

TEST_CASE("Lebesgue square spectrum")
{
    const TriMesh m = gen_rectangle(1, 1, 16);
    const Pencil p = assemble_pencil(m, lebesgue_square(), BoundaryCondition::Dirichlet);
    const auto pairs = solve_eigenpairs(p, 6);
    REQUIRE(pairs.size() == 6u);
    const double pi2 = kPi * kPi / 4;
    const double want[] = {2 * pi2, 5 * pi2, 5 * pi2, 8 * pi2, 10 * pi2, 10 * pi2};
    for (int i = 0; i < 6; ++i) {
        CHECK(pairs[i].index == i + 1);
        CHECK(std::abs(pairs[i].lambda - want[i]) / want[i] < 0.02);
    }
    CHECK(std::abs(pairs[0].lambda - 2 * pi2) / (2 * pi2) < 0.01);
    CHECK(pairs[0].lambda > 0);
    check_pair_invariants(p, pairs);
}

TEST_CASE("Krylov and dense paths agree")
{
    const TriMesh m = gen_rectangle(1, 1, 12);
    for (const MeasureSpec& mu : {lebesgue_square(), make_cross()}) {
        const Pencil p = assemble_pencil(m, mu, BoundaryCondition::Dirichlet);
        SolveOptions dense, kry;
        kry.dense_limit = 0;
        SolveReport rd, rk;
        const auto a = solve_eigenpairs(p, 8, dense, &rd);
        const auto b = solve_eigenpairs(p, 8, kry, &rk);
        CHECK(rd.dense);
        CHECK_FALSE(rk.dense);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i].lambda - b[i].lambda) <= 1e-9 * a[i].lambda);
        check_pair_invariants(p, b);
    }
}

TEST_CASE("cross measure ground state")
{
    for (int n : {8, 16}) {
        const TriMesh m = gen_rectangle(1, 1, n);
        const Pencil p = assemble_pencil(m, make_cross(), BoundaryCondition::Dirichlet);
        const auto pairs = solve_eigenpairs(p, 4);
        CHECK(std::abs(pairs[0].lambda - 2.0) / 2.0 < 0.02);
        check_pair_invariants(p, pairs);
        // Sign-normalized ground state is nonnegative.
        CHECK(pairs[0].coeffs.minCoeff() >= -1e-10 * pairs[0].coeffs.maxCoeff());
    }
}

TEST_CASE("closed sphere spectrum")
{
    const TriMesh s = gen_sphere(1, 3);
    const Pencil p = assemble_pencil(s, make_sphere_surface(1), BoundaryCondition::Closed);
    const auto pairs = solve_eigenpairs(p, 8);
    REQUIRE(pairs.size() == 9u);
    CHECK(pairs[0].index == 0);
    CHECK(pairs[0].lambda == 0.0);
    CHECK((pairs[0].coeffs.array() - pairs[0].coeffs[0]).abs().maxCoeff() < 1e-14);
    for (int i = 1; i <= 3; ++i) {
        CHECK(std::abs(pairs[i].lambda - 2) / 2 < 0.02);
        CHECK(pairs[i].cluster_first == 1);
        CHECK(pairs[i].multiplicity == 3);
    }
    for (int i = 4; i <= 8; ++i) {
        CHECK(std::abs(pairs[i].lambda - 6) / 6 < 0.02);
        CHECK(pairs[i].cluster_first == 4);
        CHECK(pairs[i].multiplicity == 5);
    }
    check_pair_invariants(p, pairs);
    // Mean-zero complement.
    const Vector one = Vector::Ones(p.num_dofs());
    for (int i = 1; i <= 8; ++i) CHECK(std::abs(one.dot(p.M * p.restrict_to_dofs(pairs[i].coeffs))) < 1e-10);
    CHECK(pencil_kernel_dimension(p) == 1);
    CHECK(rayleigh_quotient(p, Vector::Ones(s.num_vertices())) == doctest::Approx(0.0));
}

TEST_CASE("rank-deficient mass truncates with a warning")
{
    const TriMesh m = gen_rectangle(1, 1, 4);
    // Short segment: only a handful of basis functions see the measure.
    const Pencil p = assemble_pencil(m, make_lines({{Vec2(-0.3, 0), Vec2(0.3, 0), 1.0}}), BoundaryCondition::Dirichlet);
    SolveReport rep;
    const auto pairs = solve_eigenpairs(p, 20, {}, &rep);
    CHECK(pairs.size() < 20u);
    CHECK(pairs.size() >= 1u);
    REQUIRE_FALSE(rep.warnings.empty());
    CHECK(rep.warnings.back().find("truncated") != std::string::npos);
    check_pair_invariants(p, pairs);
}

TEST_CASE("Rayleigh quotient floor and undefined quotient")
{
    const TriMesh m = gen_rectangle(1, 1, 8);
    const Pencil p = assemble_pencil(m, make_cross(), BoundaryCondition::Dirichlet);
    const auto pairs = solve_eigenpairs(p, 1);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N;
    for (int t = 0; t < 200; ++t) {
        Vector u(p.num_dofs());
        for (int i = 0; i < u.size(); ++i) u[i] = N(rng);
        CHECK(rayleigh_quotient(p, u) >= pairs[0].lambda - 1e-8);
    }
    // Vanishes on the cross: supported away from both axes.
    Vector off = Vector::Zero(m.num_vertices());
    for (int v = 0; v < m.num_vertices(); ++v) {
        const Vec2& x = m.vertices()[v];
        if (std::abs(x.x()) > 0.3 && std::abs(x.y()) > 0.3 && !m.is_boundary(v)) off[v] = 1.0;
    }
    CHECK_THROWS_AS(rayleigh_quotient(p, off), Error);
}

TEST_CASE("second pair minimizes the quotient on the complement of the first")
{
    // Independent dense oracle: minimize R over {v : v^T M u1 = 0}.
    const TriMesh m = gen_rectangle(1, 1, 4);
    const Pencil p = assemble_pencil(m, lebesgue_square(), BoundaryCondition::Dirichlet);
    const auto pairs = solve_eigenpairs(p, 2);
    const Eigen::MatrixXd K(p.K), M(p.M);
    const Vector c = M * p.restrict_to_dofs(pairs[0].coeffs);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
    const Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd Z = Q.rightCols(Q.cols() - 1);   // basis of c^perp
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Z.transpose() * K * Z, Z.transpose() * M * Z);
    const Vector v = Z * es.eigenvectors().col(0);
    const double lam = es.eigenvalues()[0];
    CHECK(pencil_residual(p, v, lam) < 1e-6);
    CHECK(lam == doctest::Approx(pairs[1].lambda).epsilon(1e-10));
}

TEST_CASE("Dirichlet source solves")
{
    const TriMesh m = gen_rectangle(1, 1, 8);
    const Pencil p = assemble_pencil(m, make_cross(), BoundaryCondition::Dirichlet);
    const Vector zero = solve_dirichlet_source(p, Vector::Zero(m.num_vertices()));
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0);

    const auto pairs = solve_eigenpairs(p, 1);
    const Vector u = solve_dirichlet_source(p, pairs[0].lambda * pairs[0].coeffs);
    CHECK((u - pairs[0].coeffs).cwiseAbs().maxCoeff() <= 1e-8 * pairs[0].coeffs.cwiseAbs().maxCoeff());

    // Maximum principle: f <= 0 gives u <= 0, mirrored for f >= 0.
    const DirichletSolver solver(p);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(0, 1);
    for (int t = 0; t < 50; ++t) {
        Vector f(m.num_vertices());
        for (int i = 0; i < f.size(); ++i) f[i] = -U(rng);
        const Vector w = solver.solve(f);
        CHECK(w.maxCoeff() <= 1e-10 * w.cwiseAbs().maxCoeff());
        const Vector w2 = solver.solve(-f);
        CHECK(w2.minCoeff() >= -1e-10 * w2.cwiseAbs().maxCoeff());
    }
    const Pencil closed = assemble_pencil(gen_sphere(1, 1), make_sphere_surface(1), BoundaryCondition::Closed);
    CHECK_THROWS_AS(DirichletSolver{closed}, Error);
}

TEST_CASE("solver errors")
{
    const TriMesh m = gen_rectangle(1, 1, 2);
    const Pencil p = assemble_pencil(m, make_cross(), BoundaryCondition::Dirichlet);
    CHECK_THROWS_AS(solve_eigenpairs(p, 0), Error);
}

TEST_CASE("eigenfunction dump")
{
    const TriMesh m = gen_rectangle(1, 1, 2);
    std::ostringstream os;
    write_eigenfunction_csv(os, m, Vector::Constant(m.num_vertices(), 0.5));
    const std::string s = os.str();
    CHECK(s.rfind("x,y,value\n-1,-1,0.5\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == m.num_vertices() + 1);
    CHECK_THROWS_AS(write_eigenfunction_csv(os, m, Vector::Zero(3)), Error);
}
