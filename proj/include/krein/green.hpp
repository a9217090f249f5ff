#pragma once

#include "krein/measure.hpp"
#include "krein/mesh.hpp"
#include "krein/spectral.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace krein {

// Kernels follow -Delta G_y = delta_y (Dirichlet) and
// -Delta G_y = delta_y - 1/|M| with zero mean (closed sphere).

/// Dirichlet kernel of the disk |x| < radius centered at the origin.
struct DiskDirichlet {
    double radius = 1.0;
};

/// Dirichlet kernel of (-half_width, half_width) x (-half_height, half_height) as the
/// double sine series truncated to series_terms modes per axis.
struct RectangleDirichlet {
    double half_width = 1.0;
    double half_height = 1.0;
    int series_terms = 200;
};

/// Zero-mean kernel of the round sphere of the given radius (centered at the origin).
/// Depends only on x/|x| and y/|y|; the unit-sphere formula serves every radius.
struct SphereClosed {
    double radius = 1.0;
};

using GreenKernel = std::variant<DiskDirichlet, RectangleDirichlet, SphereClosed>;

std::string describe(const GreenKernel& k);
bool is_dirichlet(const GreenKernel& k);

/// Planar kernels read (x, y) and ignore the third coordinate.
double kernel_eval(const GreenKernel& k, const Vec3& x, const Vec3& y);
inline double kernel_eval(const GreenKernel& k, const Vec2& x, const Vec2& y)
{
    return kernel_eval(k, Vec3(x.x(), x.y(), 0.0), Vec3(y.x(), y.y(), 0.0));
}

/// Whether x lies in the closed domain of the kernel.
bool in_domain(const GreenKernel& k, const Vec3& x);

/// Rectangle kernel in closed form: strip kernel summed over images (reference for the series).
double rectangle_kernel_images(const RectangleDirichlet& k, const Vec2& x, const Vec2& y);

/// Hilbert-Schmidt norm of the discarded part of the rectangle series,
/// sqrt(sum over dropped modes of 1/lambda^2).
double rectangle_series_tail(const RectangleDirichlet& k);

/// v = offset + psi(dist(x, center)/radius) with psi(t) = exp(1 - 1/(1 - t^2)) for t < 1.
/// Distances are Euclidean in the plane and geodesic on the sphere.
struct Bump {
    Vec3 center = Vec3::Zero();
    double radius = 0.5;
    double offset = 0.0;
};

/// psi and its first two derivatives in t.
struct BumpProfile {
    double v, dt, dtt;
};
BumpProfile bump_profile(double t);

double bump_value(const GreenKernel& k, const Bump& b, const Vec3& x);

/// |int G_y (-Delta v) dnu - target|, target = v(y) (Dirichlet) or v(y) - mean(v) (closed).
double verify_distributional_identity(const GreenKernel& k, const Vec3& y, const Bump& v);

using SpaceField = std::function<double(const Vec3&)>;

struct GreenOptions {
    int line_panels = 512;      // Gauss panels per segment (8 points each)
    int area_resolution = 96;   // cells per side for area measures
    int sphere_level = 5;       // icosphere level carrying sphere surface measures
    int min_shells = 3;         // dyadic shells toward a singular point, at least
    int max_shells = 60;
    double shell_tol = 1e-10;   // relative size of the last shell that ends refinement
    bool absolute_kernel = false;   // integrate |G| (bounds for the closed kernel)
    // Rectangle series: combine the N and N/2 truncations as 2 G_N - G_{N/2}. Line measures
    // leave an O(1/N) tail on their support, which this cancels to leading order.
    bool series_extrapolation = true;
};

/// x -> int G(x, y) f(y) dmu(y). Holds a cache of f on the regular quadrature nodes,
/// so evaluation at many points is cheap; operator() is safe to call concurrently.
class GreenOperator {
public:
    GreenOperator(GreenKernel k, const MeasureSpec& m, SpaceField f, GreenOptions opt = {});
    ~GreenOperator();
    GreenOperator(GreenOperator&&) noexcept;

    double operator()(const Vec3& x) const;
    std::vector<double> apply(const std::vector<Vec3>& xs, Exec exec = Exec::Parallel) const;

    const GreenKernel& kernel() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Raises a configuration error unless the measure lives on the kernel's domain.
void check_compatible(const GreenKernel& k, const MeasureSpec& m);

double green_apply(const GreenKernel& k, const MeasureSpec& m, const SpaceField& f, const Vec3& x,
                   const GreenOptions& opt = {});
std::vector<double> green_apply(const GreenKernel& k, const MeasureSpec& m, const SpaceField& f,
                                const std::vector<Vec3>& xs, Exec exec = Exec::Parallel,
                                const GreenOptions& opt = {});

/// max over samples of int |G_y(x)| dmu(y) (equal to int G for the Dirichlet kernels).
double c2_constant(const GreenKernel& k, const MeasureSpec& m, const std::vector<Vec3>& samples,
                   Exec exec = Exec::Parallel, const GreenOptions& opt = {});

/// max over samples of |u(x) - lambda (G_mu u)(x)| / ||u||_inf with u the P1 interpolant.
/// The constant mode of a closed pencil is rejected.
double fixed_point_residual(const GreenKernel& k, const MeasureSpec& m, const TriMesh& mesh, const EigenPair& pair,
                            const std::vector<Vec3>& samples, Exec exec = Exec::Parallel,
                            const GreenOptions& opt = {});

struct OperatorNormEstimate {
    std::vector<double> ratios;   // ||G_mu f|| / ||f|| in L^2(mu), per trial
    double max_ratio = 0.0;
    double schur_bound = 0.0;     // sup over the support nodes of int |G| dmu
};

/// Random smooth fields (seeded) pushed through G_mu, norms on the measure's own nodes.
OperatorNormEstimate operator_norm_estimate(const GreenKernel& k, const MeasureSpec& m, int trials,
                                            std::uint64_t seed, int node_resolution = 16,
                                            Exec exec = Exec::Parallel, const GreenOptions& opt = {});

/// Deterministic sample points of the closed domain: an n x n grid (rectangle),
/// rings (disk), or a Fibonacci lattice of about n^2 points (sphere).
std::vector<Vec3> sample_points(const GreenKernel& k, int n);

struct GreenCheckRow {
    std::string check, domain, measure;
    double value = 0.0, tolerance = 0.0;
    bool pass = false;
};

void write_green_csv(std::ostream& os, const std::vector<GreenCheckRow>& rows);

} // namespace krein
