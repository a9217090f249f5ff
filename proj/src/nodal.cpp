#include "krein/nodal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace krein {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x)
    {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b)
    {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace

NodalDecomposition nodal_components(const TriMesh& mesh, const Vector& u, double rel_threshold)
{
    if (u.size() != mesh.num_vertices())
        throw Error(ErrorKind::InvalidInput, "nodal_components: coefficient count does not match the mesh");
    const double umax = u.cwiseAbs().maxCoeff();
    if (!(umax > 0.0)) throw Error(ErrorKind::InvalidInput, "nodal_components: degenerate function (all zero)");
    const double thr = rel_threshold * umax;

    const int nt = mesh.num_triangles();
    std::vector<int> tsign(nt, 0);
    for (int t = 0; t < nt; ++t) {
        int pos = 0, neg = 0;
        for (int v : mesh.triangles()[t]) {
            if (u[v] > thr) ++pos;
            else if (u[v] < -thr) ++neg;
        }
        tsign[t] = (pos > 0 && neg == 0) ? 1 : (neg > 0 && pos == 0) ? -1 : 0;
    }

    // Edge adjacency: sort (edge, triangle) records and pair equal edges.
    struct Rec {
        long long key;
        int tri;
    };
    std::vector<Rec> recs;
    recs.reserve(3 * nt);
    const long long nv = mesh.num_vertices();
    for (int t = 0; t < nt; ++t) {
        const auto& T = mesh.triangles()[t];
        for (int k = 0; k < 3; ++k) {
            const long long a = std::min(T[k], T[(k + 1) % 3]), b = std::max(T[k], T[(k + 1) % 3]);
            recs.push_back({a * nv + b, t});
        }
    }
    std::sort(recs.begin(), recs.end(), [](const Rec& x, const Rec& y) {
        return x.key < y.key || (x.key == y.key && x.tri < y.tri);
    });
    UnionFind uf(nt);
    for (std::size_t i = 0; i + 1 < recs.size(); ++i)
        if (recs[i].key == recs[i + 1].key) {
            const int a = recs[i].tri, b = recs[i + 1].tri;
            if (tsign[a] != 0 && tsign[a] == tsign[b]) uf.unite(a, b);
        }

    NodalDecomposition d;
    d.threshold_used = rel_threshold;
    d.labels.assign(nt, -1);
    std::vector<int> comp_of_root(nt, -1);
    for (int t = 0; t < nt; ++t) {
        if (tsign[t] == 0) continue;
        const int r = uf.find(t);
        if (comp_of_root[r] < 0) {
            comp_of_root[r] = d.count++;
            d.signs.push_back(tsign[t]);
        }
        d.labels[t] = comp_of_root[r];
    }
    return d;
}

int courant_bound(int cluster_first, int multiplicity, BoundaryCondition bc)
{
    const int r = std::max(multiplicity, 1);
    return bc == BoundaryCondition::Dirichlet ? cluster_first + r - 1 : cluster_first + r;
}

CourantReport courant_check(const std::vector<EigenPair>& pairs, const std::vector<NodalDecomposition>& decomps,
                            BoundaryCondition bc)
{
    if (pairs.size() != decomps.size())
        throw Error(ErrorKind::InvalidInput, "courant_check: pairs and decompositions are not aligned");
    CourantReport rep;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        CourantRow row;
        row.index = p.index;
        row.lambda = p.lambda;
        row.cluster_first = p.cluster_first;
        row.multiplicity = p.multiplicity;
        row.nodal_count = decomps[i].count;
        row.bound = courant_bound(p.cluster_first, p.multiplicity, bc);
        row.pass = row.nodal_count <= row.bound;
        rep.all_pass = rep.all_pass && row.pass;
        rep.rows.push_back(row);
    }
    return rep;
}

} // namespace krein
