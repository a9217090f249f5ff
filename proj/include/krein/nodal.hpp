#pragma once

#include "krein/assemble.hpp"
#include "krein/mesh.hpp"
#include "krein/spectral.hpp"

#include <vector>

namespace krein {

inline constexpr double kDefaultNodalThreshold = 1e-8;

/// Nodal domains of a P1 function as edge-connected sets of same-sign triangles.
struct NodalDecomposition {
    std::vector<int> labels;    // per triangle: component id, or -1 for the zero set
    std::vector<int> signs;     // per component: +1 / -1
    int count = 0;
    double threshold_used = 0.0;
};

/// Vertices with |u| <= rel_threshold * ||u||_inf count as zero; a triangle takes the
/// sign of its nonzero vertices when they agree and joins the zero set otherwise.
NodalDecomposition nodal_components(const TriMesh& mesh, const Vector& u,
                                    double rel_threshold = kDefaultNodalThreshold);

struct CourantRow {
    int index = 0;
    double lambda = 0.0;
    int cluster_first = 0;
    int multiplicity = 1;
    int nodal_count = 0;
    int bound = 0;
    bool pass = false;
};

struct CourantReport {
    std::vector<CourantRow> rows;
    bool all_pass = true;
};

/// Courant bound per pair: n (boundary) or n + 1 (closed), widened to n + r - 1 and
/// n + r for an eigenvalue cluster of multiplicity r starting at index n.
int courant_bound(int cluster_first, int multiplicity, BoundaryCondition bc);

CourantReport courant_check(const std::vector<EigenPair>& pairs, const std::vector<NodalDecomposition>& decomps,
                            BoundaryCondition bc);

} // namespace krein
