#pragma once

#include "krein/assemble.hpp"

#include <Eigen/SparseCholesky>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace krein {

/// Eigenpair of the pencil. `coeffs` holds per-vertex P1 coefficients with
/// u^T M u = 1. Index 0 is the constant zero mode of a closed pencil.
struct EigenPair {
    double lambda = 0.0;
    Vector coeffs;
    int index = 0;
    double residual = 0.0;      // ||K u - lambda M u|| / ||K u|| on the free DOFs
    int cluster_first = 0;      // index of the first member of this eigenvalue cluster
    int multiplicity = 1;       // cluster size
};

struct SolveOptions {
    double residual_tol = 1e-8;
    double cluster_rel = 1e-6;  // eigenvalues within this relative gap form a cluster
    int dense_limit = 1200;     // dense generalized solve up to this many DOFs
    int block_size = 8;
    int max_basis = 1500;
    std::uint64_t seed = 20240607;
};

struct SolveReport {
    std::vector<std::string> warnings;
    bool dense = false;
    int basis_size = 0;
    double shift = 0.0;
};

/// The k smallest eigenpairs of K u = lambda M u restricted to range(M). For closed
/// pencils the zero mode is returned as index 0 and indices 1..k are taken in the
/// mean-zero complement, so k + 1 pairs are returned.
std::vector<EigenPair> solve_eigenpairs(const Pencil& p, int k, const SolveOptions& opt = {},
                                        SolveReport* report = nullptr);

/// u^T K u / u^T M u. u may be a DOF vector or a per-vertex vector.
double rayleigh_quotient(const Pencil& p, const Vector& u);

/// Number of (numerically) zero eigenvalues of the pencil.
int pencil_kernel_dimension(const Pencil& p, const SolveOptions& opt = {});

/// ||K u - lambda M u|| / ||K u|| for a DOF or per-vertex vector.
double pencil_residual(const Pencil& p, const Vector& u, double lambda);

/// Per-vertex `x,y,value` CSV of a P1 function (chart coordinates).
void write_eigenfunction_csv(std::ostream& os, const TriMesh& mesh, const Vector& values);

/// Factors the Dirichlet stiffness once; solves K u = M f repeatedly.
class DirichletSolver {
public:
    explicit DirichletSolver(const Pencil& p);

    /// f: per-vertex coefficients of the source in L^2(mu). Returns per-vertex u
    /// (zero on the boundary).
    Vector solve(const Vector& f) const;

private:
    const Pencil* pencil_;
    Eigen::SimplicialLLT<SparseMatrix> chol_;
};

/// One-shot -Delta_mu u = f with zero Dirichlet data.
Vector solve_dirichlet_source(const Pencil& p, const Vector& f);

} // namespace krein
