#include "krein/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

namespace krein {

namespace {

using Dense = Eigen::MatrixXd;

struct RawPairs {
    std::vector<double> lambda;     // ascending
    Dense U;                        // DOF-space vectors, columns
    bool exhausted = false;         // range(M) smaller than requested
};

Vector as_dofs(const Pencil& p, const Vector& u)
{
    if (u.size() == p.num_dofs()) return u;
    if (u.size() == p.num_vertices()) return p.restrict_to_dofs(u);
    throw Error(ErrorKind::InvalidInput, "pencil: vector size matches neither DOFs nor vertices");
}

double shift_for(const Pencil& p)
{
    if (p.bc == BoundaryCondition::Dirichlet) return 0.0;
    // Scale-aware shift making K + s M definite on a closed pencil.
    const double tk = p.K.diagonal().sum(), tm = p.M.diagonal().sum();
    return tk / tm / std::max(1, p.num_dofs());
}

RawPairs dense_smallest(const SparseMatrix& K, const SparseMatrix& M, double sigma, int want)
{
    const Dense Md = Dense(M);
    const Dense A = Dense(K) + sigma * Md;
    Eigen::LLT<Dense> llt(A);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorKind::Assembly, "solve_eigenpairs: stiffness is not positive definite on the free DOFs");
    const auto L = llt.matrixL();
    const Dense X = L.solve(Md);                       // L^-1 M
    Dense C = L.solve(Dense(X.transpose()));           // L^-1 M L^-T
    C = 0.5 * (C + C.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Dense> es(C);
    const Vector theta = es.eigenvalues();             // ascending
    const double tmax = theta.maxCoeff();
    RawPairs out;
    const int n = static_cast<int>(theta.size());
    std::vector<int> keep;
    for (int i = n - 1; i >= 0 && static_cast<int>(keep.size()) < want; --i)
        if (theta[i] > 1e-12 * tmax) keep.push_back(i);
    out.exhausted = static_cast<int>(keep.size()) < want;
    out.U.resize(K.rows(), keep.size());
    const auto LT = llt.matrixU();
    for (std::size_t j = 0; j < keep.size(); ++j) {
        const Vector u = LT.solve(es.eigenvectors().col(keep[j]));
        out.U.col(j) = u;
        out.lambda.push_back(u.dot(K * u) / u.dot(M * u));
    }
    return out;
}

// Block Krylov on B = A^-1 M, self-adjoint in the A inner product, A = K + sigma M.
// Full reorthogonalization; Rayleigh-Ritz with T = V^T M V on an A-orthonormal V.
RawPairs krylov_smallest(const SparseMatrix& K, const SparseMatrix& M, double sigma, int want,
                         const SolveOptions& opt, SolveReport* report)
{
    const int n = static_cast<int>(K.rows());
    const SparseMatrix A = K + sigma * M;
    Eigen::SimplicialLLT<SparseMatrix> chol(A);
    if (chol.info() != Eigen::Success)
        throw Error(ErrorKind::Assembly, "solve_eigenpairs: stiffness is not positive definite on the free DOFs");

    const int b = std::max(opt.block_size, 1);
    const int cap = std::min(n, opt.max_basis);
    Dense V(n, cap), AV(n, cap), MV(n, cap);
    int m = 0;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    Dense X(n, b);
    for (int j = 0; j < b; ++j)
        for (int i = 0; i < n; ++i) X(i, j) = nd(rng);
    X = chol.solve(Dense(M * X));

    auto append = [&](Vector x) {
        const double n0 = std::sqrt(std::max(0.0, x.dot(A * x)));
        if (!(n0 > 0.0)) return false;
        for (int pass = 0; pass < 2 && m > 0; ++pass) {
            const Vector c = AV.leftCols(m).transpose() * x;
            x -= V.leftCols(m) * c;
        }
        const Vector Ax = A * x;
        const double nrm = std::sqrt(std::max(0.0, x.dot(Ax)));
        if (!(nrm > 1e-10 * n0) || m >= cap) return false;
        V.col(m) = x / nrm;
        AV.col(m) = Ax / nrm;
        MV.col(m) = M * V.col(m);
        ++m;
        return true;
    };

    RawPairs best;
    int last_check = 0;
    while (true) {
        const int before = m;
        for (int j = 0; j < X.cols(); ++j) append(X.col(j));
        const bool grew = m > before;
        const bool full = m >= cap;
        if (m >= want + b || !grew || full) {
            if (m - last_check >= b || !grew || full) {
                last_check = m;
                Dense T = V.leftCols(m).transpose() * MV.leftCols(m);
                T = 0.5 * (T + T.transpose()).eval();
                Eigen::SelfAdjointEigenSolver<Dense> es(T);
                const Vector& theta = es.eigenvalues();
                const double tmax = theta.maxCoeff();
                RawPairs cur;
                std::vector<int> keep;
                for (int i = m - 1; i >= 0 && static_cast<int>(keep.size()) < want; --i)
                    if (theta[i] > 1e-12 * tmax) keep.push_back(i);
                cur.U.resize(n, keep.size());
                bool converged = true;
                for (std::size_t j = 0; j < keep.size(); ++j) {
                    const Vector u = V.leftCols(m) * es.eigenvectors().col(keep[j]);
                    const Vector Ku = K * u, Mu = M * u;
                    const double lam = u.dot(Ku) / u.dot(Mu);
                    const double res = (Ku - lam * Mu).norm() / std::max(Ku.norm(), 1e-300);
                    // Zero modes of a closed pencil have Ku ~ 0; judge them by |lambda|.
                    const bool ok = res <= opt.residual_tol || std::abs(lam) <= 1e-10 * sigma;
                    converged = converged && ok;
                    cur.U.col(j) = u;
                    cur.lambda.push_back(lam);
                }
                cur.exhausted = static_cast<int>(keep.size()) < want;
                best = std::move(cur);
                if ((converged && !best.exhausted) || !grew || full) {
                    if (!converged && report)
                        report->warnings.push_back("krylov basis limit reached before all residuals met tolerance");
                    break;
                }
            }
        }
        // Next block: B applied to the newest basis vectors.
        const int nb = m - before;
        X = chol.solve(Dense(MV.middleCols(before, nb)));
    }
    if (report) report->basis_size = m;
    // Ritz values come out in descending theta, i.e. ascending lambda up to rounding.
    return best;
}

RawPairs smallest_pairs(const Pencil& p, int want, const SolveOptions& opt, SolveReport* report)
{
    const double sigma = shift_for(p);
    if (report) report->shift = sigma;
    if (p.num_dofs() == 0) throw Error(ErrorKind::InvalidInput, "solve_eigenpairs: pencil has no free DOFs");
    if (p.num_dofs() <= opt.dense_limit) {
        if (report) report->dense = true;
        return dense_smallest(p.K, p.M, sigma, want);
    }
    return krylov_smallest(p.K, p.M, sigma, want, opt, report);
}

void sign_normalize(Vector& u)
{
    const double tol = 1e-10 * u.cwiseAbs().maxCoeff();
    for (int i = 0; i < u.size(); ++i)
        if (std::abs(u[i]) > tol) {
            if (u[i] < 0.0) u = -u;
            return;
        }
}

} // namespace

std::vector<EigenPair> solve_eigenpairs(const Pencil& p, int k, const SolveOptions& opt, SolveReport* report)
{
    if (k < 1) throw Error(ErrorKind::InvalidInput, "solve_eigenpairs: k must be >= 1");
    const bool closed = p.bc == BoundaryCondition::Closed;
    const int guard = 3;   // extra pairs to detect clusters straddling k
    const int want = k + (closed ? 1 : 0) + guard;
    RawPairs raw = smallest_pairs(p, want, opt, report);

    struct Item {
        double lambda;
        Vector u;
    };
    std::vector<Item> items;
    for (std::size_t j = 0; j < raw.lambda.size(); ++j) items.push_back({raw.lambda[j], raw.U.col(j)});
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.lambda < b.lambda; });

    std::vector<EigenPair> out;
    Vector one;
    double mass = 0.0;
    if (closed) {
        one = Vector::Ones(p.num_dofs());
        mass = one.dot(p.M * one);
        if (items.empty() || std::abs(items.front().lambda) > 1e-6 * std::max(1.0, items.size() > 1 ? items[1].lambda : 1.0))
            throw Error(ErrorKind::Numerical, "solve_eigenpairs: closed pencil has no zero mode");
        items.erase(items.begin());
        EigenPair z;
        z.lambda = 0.0;
        z.index = 0;
        z.coeffs = p.expand(one / std::sqrt(mass));
        z.residual = 0.0;
        out.push_back(std::move(z));
    }

    // Mean-zero projection (closed), M-normalization and the final Rayleigh quotient.
    std::vector<double> lam;
    std::vector<Vector> vecs;
    for (auto& it : items) {
        Vector u = it.u;
        if (closed) u -= (one.dot(p.M * u) / mass) * one;
        const double nm = std::sqrt(u.dot(p.M * u));
        if (!(nm > 0.0)) continue;
        u /= nm;
        sign_normalize(u);
        lam.push_back(u.dot(p.K * u));
        vecs.push_back(std::move(u));
    }
    // The Rayleigh values can swap order at rounding level inside a cluster.
    {
        std::vector<int> ord(lam.size());
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return lam[a] < lam[b]; });
        std::vector<double> l2;
        std::vector<Vector> v2;
        for (int i : ord) {
            l2.push_back(lam[i]);
            v2.push_back(std::move(vecs[i]));
        }
        lam = std::move(l2);
        vecs = std::move(v2);
    }
    // Clusters over everything computed (including the guard pairs).
    const int total = static_cast<int>(lam.size());
    std::vector<int> first(total), mult(total);
    for (int i = 0; i < total;) {
        int j = i + 1;
        while (j < total && lam[j] - lam[j - 1] <= opt.cluster_rel * std::max(std::abs(lam[j - 1]), 1e-300)) ++j;
        for (int q = i; q < j; ++q) {
            first[q] = i;
            mult[q] = j - i;
        }
        i = j;
    }

    const int keep = std::min(k, total);
    for (int i = 0; i < keep; ++i) {
        EigenPair e;
        e.lambda = lam[i];
        e.index = i + 1;
        e.coeffs = p.expand(vecs[i]);
        e.residual = pencil_residual(p, vecs[i], lam[i]);
        e.cluster_first = first[i] + 1;
        e.multiplicity = mult[i];
        out.push_back(std::move(e));
    }
    if (closed) {
        out[0].cluster_first = 0;
        out[0].multiplicity = 1;
    }
    if (keep < k && report)
        report->warnings.push_back("requested " + std::to_string(k) + " pairs but range(M) supports only " +
                                   std::to_string(keep) + "; result truncated");
    return out;
}

double rayleigh_quotient(const Pencil& p, const Vector& u)
{
    const Vector d = as_dofs(p, u);
    const double den = d.dot(p.M * d);
    const double scale = std::max(d.squaredNorm() * p.M.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    if (!(den > 1e-14 * scale))
        throw Error(ErrorKind::Numerical, "rayleigh_quotient: u vanishes mu-a.e. (undefined quotient)");
    return d.dot(p.K * d) / den;
}

double pencil_residual(const Pencil& p, const Vector& u, double lambda)
{
    const Vector d = as_dofs(p, u);
    const Vector Ku = p.K * d;
    const double nk = Ku.norm();
    const Vector r = Ku - lambda * (p.M * d);
    return nk > 0.0 ? r.norm() / nk : r.norm();
}

int pencil_kernel_dimension(const Pencil& p, const SolveOptions& opt)
{
    const int want = std::min(p.num_dofs(), 6);
    const RawPairs raw = smallest_pairs(p, want, opt, nullptr);
    double top = 0.0;
    for (double l : raw.lambda) top = std::max(top, std::abs(l));
    int count = 0;
    for (double l : raw.lambda) count += std::abs(l) <= 1e-8 * std::max(top, 1.0);
    return count;
}

DirichletSolver::DirichletSolver(const Pencil& p) : pencil_(&p)
{
    if (p.bc != BoundaryCondition::Dirichlet)
        throw Error(ErrorKind::InvalidInput, "DirichletSolver: pencil is not Dirichlet");
    chol_.compute(p.K);
    if (chol_.info() != Eigen::Success)
        throw Error(ErrorKind::Assembly, "DirichletSolver: singular reduced stiffness (mesh error)");
}

Vector DirichletSolver::solve(const Vector& f) const
{
    const Pencil& p = *pencil_;
    Vector rhs;
    if (f.size() == p.num_vertices()) rhs = p.M_rows * f;
    else if (f.size() == p.num_dofs()) rhs = p.M * f;
    else throw Error(ErrorKind::InvalidInput, "DirichletSolver: source size mismatch");
    return p.expand(chol_.solve(rhs));
}

Vector solve_dirichlet_source(const Pencil& p, const Vector& f)
{
    return DirichletSolver(p).solve(f);
}

void write_eigenfunction_csv(std::ostream& os, const TriMesh& mesh, const Vector& values)
{
    if (values.size() != mesh.num_vertices())
        throw Error(ErrorKind::InvalidInput, "write_eigenfunction_csv: value count does not match the mesh");
    os << "x,y,value\n";
    char buf[96];
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const Vec2& p = mesh.vertices()[v];
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", p.x(), p.y(), values[v]);
        os << buf;
    }
}

} // namespace krein
