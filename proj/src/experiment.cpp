#include "krein/experiment.hpp"

#include "config_json.hpp"
#include "krein/conformal.hpp"
#include "krein/interpolate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace krein {

using cfg::json;

// ---------------------------------------------------------------------------
// Config

MeasureSpec parse_measure_config(const std::string& text, const std::string& origin)
{
    return cfg::measure_from_json(cfg::parse_text(text, origin), "measure");
}

namespace {

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Config, "config: cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

MeasureSpec load_measure_config(const std::filesystem::path& path)
{
    return parse_measure_config(read_file(path), path.string());
}

std::string DomainSpec::describe() const
{
    std::ostringstream os;
    auto planar = [&](Kind k) {
        if (k == Kind::Rectangle) os << "rectangle(" << 2 * half_width << "x" << 2 * half_height << " cells=" << 2 * n << ")";
        else os << "disk(R=" << radius << " rings=" << (1 << level) << ")";
    };
    switch (kind) {
    case Kind::Rectangle:
    case Kind::Disk: planar(kind); break;
    case Kind::Sphere: os << "sphere(R=" << radius << " level=" << level << ")"; break;
    case Kind::Hemisphere:
        os << "hemisphere-chart(R=" << sphere_radius << " base=";
        planar(base);
        os << ")";
        break;
    }
    return os.str();
}

TriMesh build_mesh(const DomainSpec& d)
{
    auto planar = [&](DomainSpec::Kind k) {
        return k == DomainSpec::Kind::Rectangle ? gen_rectangle(d.half_width, d.half_height, d.n)
                                                : gen_disk(d.radius, d.level);
    };
    switch (d.kind) {
    case DomainSpec::Kind::Rectangle:
    case DomainSpec::Kind::Disk: return planar(d.kind);
    case DomainSpec::Kind::Sphere: return gen_sphere(d.radius, d.level);
    case DomainSpec::Kind::Hemisphere: return gen_hemisphere_chart(d.sphere_radius, planar(d.base));
    }
    throw Error(ErrorKind::Config, "build_mesh: unknown domain");
}

namespace {

constexpr int kMaxCells = 300;   // desk-scale limit: 300 x 300 grid
constexpr int kMaxDiskLevel = 7;
constexpr int kMaxSphereLevel = 6;

bool within_limits(const DomainSpec& d)
{
    const auto k = d.kind == DomainSpec::Kind::Hemisphere ? d.base : d.kind;
    if (k == DomainSpec::Kind::Rectangle) return d.n >= 1 && 2 * d.n <= kMaxCells;
    if (k == DomainSpec::Kind::Disk) return d.level >= 1 && d.level <= kMaxDiskLevel;
    return d.level >= 0 && d.level <= kMaxSphereLevel;
}

} // namespace

std::optional<DomainSpec> refine(const DomainSpec& d)
{
    DomainSpec r = d;
    const auto k = d.kind == DomainSpec::Kind::Hemisphere ? d.base : d.kind;
    if (k == DomainSpec::Kind::Rectangle) r.n *= 2;
    else ++r.level;
    if (!within_limits(r)) return std::nullopt;
    return r;
}

const std::vector<std::string>& known_checks()
{
    static const std::vector<std::string> names = {"spectrum", "nodal",    "courant",      "green",
                                                   "dim",      "maxprinciple", "conformal-roundtrip",
                                                   "rayleigh", "harmonic"};
    return names;
}

namespace {

DomainSpec domain_from_json(const json& j, const std::string& path)
{
    DomainSpec d;
    const std::string type = cfg::get_string(j, "type", path, "");
    auto planar = [&](const json& b, const std::string& p, DomainSpec::Kind& kind) {
        const std::string t = cfg::get_string(b, "type", p, "");
        if (t == "rectangle") {
            kind = DomainSpec::Kind::Rectangle;
            d.half_width = cfg::get_number(b, "half_width", p, 1.0);
            d.half_height = cfg::get_number(b, "half_height", p, 1.0);
            d.n = cfg::get_int(b, "n", p, 16);
            if (!(d.half_width > 0 && d.half_height > 0)) cfg::fail(p, "half sizes must be positive");
        } else if (t == "disk") {
            kind = DomainSpec::Kind::Disk;
            d.radius = cfg::get_number(b, "radius", p, 1.0);
            d.level = cfg::get_int(b, "level", p, 4);
            if (!(d.radius > 0)) cfg::fail(p + ".radius", "must be positive");
        } else {
            cfg::fail(p + ".type", "expected 'rectangle' or 'disk', got '" + t + "'");
        }
    };
    if (type == "rectangle" || type == "disk") {
        planar(j, path, d.kind);
    } else if (type == "sphere") {
        d.kind = DomainSpec::Kind::Sphere;
        d.radius = cfg::get_number(j, "radius", path, 1.0);
        d.level = cfg::get_int(j, "level", path, 4);
        if (!(d.radius > 0)) cfg::fail(path + ".radius", "must be positive");
    } else if (type == "hemisphere") {
        d.kind = DomainSpec::Kind::Hemisphere;
        d.sphere_radius = cfg::get_number(j, "sphere_radius", path, 2.0);
        planar(cfg::require(j, "base", path), path + ".base", d.base);
    } else {
        cfg::fail(path + ".type", "unknown domain type '" + type + "'");
    }
    if (!within_limits(d)) cfg::fail(path, "resolution outside the desk-scale limits (<= 300 x 300 grid)");
    return d;
}

GreenKernel kernel_from_json(const json& j, const std::string& path)
{
    const std::string t = cfg::get_string(j, "type", path, "");
    if (t == "disk") return DiskDirichlet{cfg::get_number(j, "radius", path, 1.0)};
    if (t == "rectangle")
        return RectangleDirichlet{cfg::get_number(j, "half_width", path, 1.0), cfg::get_number(j, "half_height", path, 1.0),
                                  cfg::get_int(j, "series_terms", path, 200)};
    if (t == "sphere") return SphereClosed{cfg::get_number(j, "radius", path, 1.0)};
    cfg::fail(path + ".type", "unknown kernel '" + t + "'");
}

void tolerances_from_json(const json& j, Tolerances& t, const std::string& path)
{
    if (!j.is_object()) cfg::fail(path, "expected an object");
    const std::pair<const char*, double*> fields[] = {
        {"residual", &t.residual},
        {"lambda_rel", &t.lambda_rel},
        {"eigenfunction_sup", &t.eigenfunction_sup},
        {"rayleigh", &t.rayleigh},
        {"maxprinciple", &t.maxprinciple},
        {"harmonic", &t.harmonic},
        {"symmetry", &t.symmetry},
        {"positivity", &t.positivity},
        {"boundary", &t.boundary},
        {"zero_mean", &t.zero_mean},
        {"identity", &t.identity},
        {"c2_stability", &t.c2_stability},
        {"fixed_point", &t.fixed_point},
        {"conformal_lambda", &t.conformal_lambda},
        {"conformal_stiffness", &t.conformal_stiffness},
    };
    for (const auto& [key, val] : j.items()) {
        bool found = false;
        for (const auto& [name, ptr] : fields)
            if (key == name) {
                *ptr = cfg::get_number(j, key, path);
                found = true;
            }
        if (!found) cfg::fail(path + "." + key, "unknown tolerance");
    }
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin)
{
    const json j = cfg::parse_text(text, origin);
    if (!j.is_object()) cfg::fail("", "expected an object at the top level");
    const int schema = cfg::get_int(j, "schema", "", kConfigSchemaVersion);
    if (schema != kConfigSchemaVersion)
        cfg::fail("schema", "unsupported schema version " + std::to_string(schema));

    static const std::set<std::string> top = {"schema", "name",  "domain",     "measure", "boundary", "stiffness",
                                              "eigen_count", "checks", "expect", "tolerances", "green", "dim",
                                              "rayleigh_trials", "maxprinciple_trials", "seed", "out"};
    for (const auto& [key, val] : j.items())
        if (!top.count(key)) cfg::fail(key, "unknown field");

    ExperimentConfig c;
    c.name = cfg::get_string(j, "name", "", "experiment");
    c.has_domain = j.contains("domain");
    if (c.has_domain) c.domain = domain_from_json(j.at("domain"), "domain");
    if (j.contains("measure")) {
        c.measure = cfg::measure_from_json(j.at("measure"), "measure");
        c.measure_label = cfg::get_string(j.at("measure"), "label", "measure", cfg::get_string(j.at("measure"), "type", "measure", "measure"));
    }
    const std::string bc = cfg::get_string(j, "boundary", "", c.domain.kind == DomainSpec::Kind::Sphere ? "closed" : "dirichlet");
    if (bc == "dirichlet") c.bc = BoundaryCondition::Dirichlet;
    else if (bc == "closed") c.bc = BoundaryCondition::Closed;
    else cfg::fail("boundary", "expected 'dirichlet' or 'closed'");
    const std::string st = cfg::get_string(j, "stiffness", "", "auto");
    if (st == "auto") c.stiffness = StiffnessMode::Auto;
    else if (st == "chart") c.stiffness = StiffnessMode::ChartMetric;
    else if (st == "flat") c.stiffness = StiffnessMode::EmbeddedFlat;
    else cfg::fail("stiffness", "expected 'auto', 'chart' or 'flat'");
    c.eigen_count = cfg::get_int(j, "eigen_count", "", 6);
    if (c.eigen_count < 1 || c.eigen_count > 200) cfg::fail("eigen_count", "must lie in [1, 200]");

    if (j.contains("checks")) {
        const auto& ch = j.at("checks");
        if (!ch.is_array()) cfg::fail("checks", "expected an array of names");
        const auto& known = known_checks();
        for (std::size_t i = 0; i < ch.size(); ++i) {
            const std::string p = "checks[" + std::to_string(i) + "]";
            if (!ch[i].is_string()) cfg::fail(p, "expected a string");
            const std::string name = ch[i].get<std::string>();
            if (std::find(known.begin(), known.end(), name) == known.end()) cfg::fail(p, "unknown check '" + name + "'");
            c.checks.push_back(name);
        }
    }
    bool needs_measure = false;
    for (const auto& n : c.checks) needs_measure = needs_measure || n != "dim";
    if (needs_measure && !c.measure) cfg::fail("measure", "required by the requested checks");
    if (needs_measure && !c.has_domain) cfg::fail("domain", "required by the requested checks");

    if (j.contains("expect")) {
        const auto& e = j.at("expect");
        if (e.contains("lambda")) {
            const auto& l = e.at("lambda");
            if (!l.is_array()) cfg::fail("expect.lambda", "expected an array");
            for (const auto& x : l) {
                if (!x.is_number()) cfg::fail("expect.lambda", "expected numbers");
                c.expected_lambdas.push_back(x.get<double>());
            }
        }
        c.reference_eigenfunction = cfg::get_string(e, "eigenfunction", "expect", "");
        if (!c.reference_eigenfunction.empty() && c.reference_eigenfunction != "tent")
            cfg::fail("expect.eigenfunction", "only 'tent' is known");
        if (c.reference_eigenfunction == "tent" && c.domain.kind != DomainSpec::Kind::Rectangle &&
            !(c.domain.kind == DomainSpec::Kind::Hemisphere && c.domain.base == DomainSpec::Kind::Rectangle))
            cfg::fail("expect.eigenfunction", "'tent' needs a rectangle domain");
    }
    if (j.contains("tolerances")) tolerances_from_json(j.at("tolerances"), c.tol, "tolerances");
    if (j.contains("green")) {
        const auto& g = j.at("green");
        if (g.contains("kernel")) c.green.kernel = kernel_from_json(g.at("kernel"), "green.kernel");
        c.green.samples = cfg::get_int(g, "samples", "green", c.green.samples);
        c.green.pairs = cfg::get_int(g, "pairs", "green", c.green.pairs);
        c.green.bumps = cfg::get_int(g, "bumps", "green", c.green.bumps);
        c.green.norm_trials = cfg::get_int(g, "norm_trials", "green", c.green.norm_trials);
        c.green.norm_resolution = cfg::get_int(g, "norm_resolution", "green", c.green.norm_resolution);
        c.green.fixed_point_index = cfg::get_int(g, "fixed_point_index", "green", c.green.fixed_point_index);
        if (g.contains("refinement_check")) {
            if (!g.at("refinement_check").is_boolean()) cfg::fail("green.refinement_check", "expected a boolean");
            c.green.refinement_check = g.at("refinement_check").get<bool>();
        }
        c.green.options.line_panels = cfg::get_int(g, "line_panels", "green", c.green.options.line_panels);
        c.green.options.area_resolution = cfg::get_int(g, "area_resolution", "green", c.green.options.area_resolution);
        c.green.options.sphere_level = cfg::get_int(g, "sphere_level", "green", c.green.options.sphere_level);
        if (c.green.samples < 2) cfg::fail("green.samples", "must be >= 2");
    }
    if (j.contains("dim")) {
        const auto& d = j.at("dim");
        if (d.contains("measure")) c.dim.measure = cfg::measure_from_json(d.at("measure"), "dim.measure");
        c.dim.kmin = cfg::get_int(d, "kmin", "dim", c.dim.kmin);
        c.dim.kmax = cfg::get_int(d, "kmax", "dim", c.dim.kmax);
        c.dim.base = cfg::get_number(d, "base", "dim", c.dim.base);
        c.dim.expected = cfg::get_number(d, "expected", "dim", c.dim.expected);
        c.dim.tolerance = cfg::get_number(d, "tolerance", "dim", c.dim.tolerance);
        if (c.dim.base <= 1.0) cfg::fail("dim.base", "must exceed 1");
        if (c.dim.kmax - c.dim.kmin + 1 < 5) cfg::fail("dim", "need at least five radii (kmax - kmin >= 4)");
    }
    if (std::find(c.checks.begin(), c.checks.end(), "dim") != c.checks.end() && !c.dim.measure && !c.measure)
        cfg::fail("dim.measure", "required by the 'dim' check");
    c.rayleigh_trials = cfg::get_int(j, "rayleigh_trials", "", c.rayleigh_trials);
    c.maxprinciple_trials = cfg::get_int(j, "maxprinciple_trials", "", c.maxprinciple_trials);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) cfg::fail("seed", "expected a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("out")) c.out_dir = cfg::get_string(j, "out", "", "");
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    return parse_experiment_config(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Runner

bool ExperimentReport::all_pass() const
{
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

int exit_code_for(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidInput:
    case ErrorKind::IO: return 2;
    default: return 3;
    }
}

namespace {

std::string fmt(double v, int digits = 12)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

struct Stage {
    DomainSpec domain;
    std::shared_ptr<const TriMesh> mesh;
    Pencil pencil;
    std::vector<EigenPair> pairs;
    std::vector<NodalDecomposition> decomps;
    SolveReport solve;
};

Stage solve_stage(const ExperimentConfig& c, const DomainSpec& d)
{
    Stage s;
    s.domain = d;
    s.mesh = std::make_shared<const TriMesh>(build_mesh(d));
    s.pencil = assemble_pencil(*s.mesh, *c.measure, c.bc, c.stiffness);
    SolveOptions so;
    so.residual_tol = c.tol.residual;
    s.pairs = solve_eigenpairs(s.pencil, c.eigen_count, so, &s.solve);
    for (const auto& p : s.pairs) s.decomps.push_back(nodal_components(*s.mesh, p.coeffs));
    return s;
}

bool has(const ExperimentConfig& c, const std::string& name)
{
    return std::find(c.checks.begin(), c.checks.end(), name) != c.checks.end();
}

GreenKernel default_kernel(const DomainSpec& d)
{
    switch (d.kind) {
    case DomainSpec::Kind::Rectangle: return RectangleDirichlet{d.half_width, d.half_height, 200};
    case DomainSpec::Kind::Disk: return DiskDirichlet{d.radius};
    case DomainSpec::Kind::Sphere: return SphereClosed{d.radius};
    case DomainSpec::Kind::Hemisphere: break;
    }
    throw Error(ErrorKind::Config, "green: no closed-form kernel for a hemisphere chart domain");
}

Vec3 random_point(const GreenKernel& k, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    return std::visit(
        [&](const auto& kk) -> Vec3 {
            using T = std::decay_t<decltype(kk)>;
            if constexpr (std::is_same_v<T, RectangleDirichlet>) {
                return Vec3(kk.half_width * U(rng), kk.half_height * U(rng), 0.0);
            } else if constexpr (std::is_same_v<T, DiskDirichlet>) {
                while (true) {
                    const Vec2 p(U(rng), U(rng));
                    if (p.squaredNorm() < 1.0) return Vec3(kk.radius * p.x(), kk.radius * p.y(), 0.0);
                }
            } else {
                std::normal_distribution<double> N;
                Vec3 v(N(rng), N(rng), N(rng));
                return v.normalized() * kk.radius;
            }
        },
        k);
}

std::vector<Vec3> boundary_points(const GreenKernel& k, int n)
{
    std::vector<Vec3> out;
    if (const auto* d = std::get_if<DiskDirichlet>(&k)) {
        for (int i = 0; i < n; ++i) {
            const double th = 2 * kPi * i / n;
            out.emplace_back(d->radius * std::cos(th), d->radius * std::sin(th), 0.0);
        }
    } else if (const auto* r = std::get_if<RectangleDirichlet>(&k)) {
        for (int i = 0; i < n / 4; ++i) {
            const double t = -1.0 + 2.0 * (i + 0.5) / (n / 4);
            out.emplace_back(t * r->half_width, -r->half_height, 0.0);
            out.emplace_back(t * r->half_width, r->half_height, 0.0);
            out.emplace_back(-r->half_width, t * r->half_height, 0.0);
            out.emplace_back(r->half_width, t * r->half_height, 0.0);
        }
    }
    return out;
}

// Random bump inside the domain with a y inside its support.
std::pair<Bump, Vec3> random_bump(const GreenKernel& k, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Bump b;
    Vec3 y;
    if (const auto* s = std::get_if<SphereClosed>(&k)) {
        b.center = random_point(k, rng);
        b.radius = s->radius * (0.3 + 0.5 * U(rng));
        b.offset = U(rng);
        // y at geodesic distance < 0.8 rho from the center.
        const Vec3 c = b.center.normalized();
        Vec3 t = random_point(k, rng).normalized();
        t = (t - t.dot(c) * c).normalized();
        const double ang = 0.8 * U(rng) * b.radius / s->radius;
        y = s->radius * (std::cos(ang) * c + std::sin(ang) * t);
        return {b, y};
    }
    const double L = std::visit(
        [](const auto& kk) -> double {
            using T = std::decay_t<decltype(kk)>;
            if constexpr (std::is_same_v<T, RectangleDirichlet>) return std::min(kk.half_width, kk.half_height);
            else if constexpr (std::is_same_v<T, DiskDirichlet>) return kk.radius;
            else return 1.0;
        },
        k);
    b.radius = L * (0.25 + 0.2 * U(rng));
    // Center anywhere the support still fits.
    while (true) {
        const Vec3 c = random_point(k, rng);
        bool fits;
        if (const auto* d = std::get_if<DiskDirichlet>(&k)) fits = c.head<2>().norm() + b.radius <= d->radius;
        else {
            const auto& r = std::get<RectangleDirichlet>(k);
            fits = std::abs(c.x()) + b.radius <= r.half_width && std::abs(c.y()) + b.radius <= r.half_height;
        }
        if (fits) {
            b.center = c;
            break;
        }
    }
    const double ang = 2 * kPi * U(rng), rr = 0.8 * b.radius * U(rng);
    y = b.center + Vec3(rr * std::cos(ang), rr * std::sin(ang), 0.0);
    return {b, y};
}

void add(ExperimentReport& rep, const std::string& name, bool pass, const std::string& detail)
{
    rep.checks.push_back({name, pass, detail});
}

void run_green(const ExperimentConfig& c, const Stage& st, ExperimentReport& rep)
{
    const GreenKernel k = c.green.kernel ? *c.green.kernel : default_kernel(c.domain);
    const std::string dom = describe(k);
    const std::string mlab = c.measure_label;
    std::mt19937_64 rng(c.seed);
    auto row = [&](const std::string& check, double value, double tol, bool pass) {
        rep.green.push_back({check, dom, mlab, value, tol, pass});
    };

    // Symmetry and positivity on random pairs.
    double asym = 0.0, minG = 1e300;
    for (int i = 0; i < c.green.pairs; ++i) {
        const Vec3 x = random_point(k, rng), y = random_point(k, rng);
        const double a = kernel_eval(k, x, y), b = kernel_eval(k, y, x);
        asym = std::max(asym, std::abs(a - b));
        minG = std::min(minG, a);
    }
    row("symmetry", asym, c.tol.symmetry, asym <= c.tol.symmetry);
    if (is_dirichlet(k)) {
        row("positivity", minG, c.tol.positivity, minG >= -c.tol.positivity);
        double worst = 0.0;
        for (const auto& xb : boundary_points(k, 200))
            for (int i = 0; i < 5; ++i) worst = std::max(worst, std::abs(kernel_eval(k, xb, random_point(k, rng))));
        const double btol = std::holds_alternative<DiskDirichlet>(k) ? c.tol.boundary : 1e-8;
        row("boundary", worst, btol, worst <= btol);
    } else {
        const auto& s = std::get<SphereClosed>(k);
        // Closed kernel is bounded below by -1/(4 pi) instead of positive.
        const double A = -1.0 / (4.0 * kPi);
        row("lower_bound", minG, A, minG >= A - c.tol.positivity);
        const GreenOperator one(k, make_sphere_surface(s.radius), [](const Vec3&) { return 1.0; }, c.green.options);
        double worst = 0.0;
        for (int i = 0; i < 5; ++i)
            worst = std::max(worst, std::abs(one(random_point(k, rng))) / (4 * kPi * s.radius * s.radius));
        row("zero_mean", worst, c.tol.zero_mean, worst <= c.tol.zero_mean);
    }
    double ident = 0.0;
    for (int i = 0; i < c.green.bumps; ++i) {
        const auto [b, y] = random_bump(k, rng);
        ident = std::max(ident, verify_distributional_identity(k, y, b));
    }
    row("identity", ident, c.tol.identity, ident <= c.tol.identity);

    const MeasureSpec& m = *c.measure;
    const auto S1 = sample_points(k, c.green.samples), S2 = sample_points(k, 2 * c.green.samples - 1);
    const double c2a = c2_constant(k, m, S1, Exec::Parallel, c.green.options);
    const double c2b = c2_constant(k, m, S2, Exec::Parallel, c.green.options);
    const double drift = std::abs(c2b - c2a) / std::max(c2b, 1e-300);
    row("c2", c2b, 0.0, std::isfinite(c2b));
    row("c2_stability", drift, c.tol.c2_stability, drift <= c.tol.c2_stability);

    const auto norm = operator_norm_estimate(k, m, c.green.norm_trials, c.seed + 1, c.green.norm_resolution,
                                             Exec::Parallel, c.green.options);
    row("operator_norm", norm.max_ratio, norm.schur_bound, norm.max_ratio <= norm.schur_bound * 1.02);

    // Fixed-point identity on the requested pair.
    const auto it = std::find_if(st.pairs.begin(), st.pairs.end(),
                                 [&](const EigenPair& p) { return p.index == c.green.fixed_point_index; });
    if (it == st.pairs.end()) throw Error(ErrorKind::Config, "green.fixed_point_index not among the computed pairs");
    const double fp = fixed_point_residual(k, m, *st.mesh, *it, S1, Exec::Parallel, c.green.options);
    row("fixed_point", fp, c.tol.fixed_point, fp <= c.tol.fixed_point);
    if (c.green.refinement_check) {
        // Coarser mesh for comparison: residual must not grow with resolution.
        DomainSpec coarse = st.domain;
        const auto kind = coarse.kind == DomainSpec::Kind::Hemisphere ? coarse.base : coarse.kind;
        if (kind == DomainSpec::Kind::Rectangle) coarse.n = std::max(1, coarse.n / 2);
        else coarse.level = std::max(1, coarse.level - 1);
        const Stage cs = solve_stage(c, coarse);
        const auto ci = std::find_if(cs.pairs.begin(), cs.pairs.end(),
                                     [&](const EigenPair& p) { return p.index == c.green.fixed_point_index; });
        const double fpc = fixed_point_residual(k, m, *cs.mesh, *ci, S1, Exec::Parallel, c.green.options);
        row("fixed_point_coarse", fpc, fp, fp <= fpc);
    }
    if (!is_dirichlet(k)) {
        bool rejected = false;
        try {
            fixed_point_residual(k, m, *st.mesh, st.pairs.front(), S1, Exec::Parallel, c.green.options);
        } catch (const Error& e) {
            rejected = e.kind() == ErrorKind::InvalidInput;
        }
        row("constant_mode_rejected", rejected ? 1.0 : 0.0, 1.0, rejected);
    }
    bool ok = true;
    for (const auto& r : rep.green) ok = ok && r.pass;
    add(rep, "green", ok, std::to_string(rep.green.size()) + " kernel/operator rows");
}

double tent(const DomainSpec& d, const Vec2& p)
{
    return (1.0 - std::abs(p.x()) / d.half_width) * (1.0 - std::abs(p.y()) / d.half_height);
}

} // namespace

ExperimentReport run_experiment(const ExperimentConfig& c)
{
    ExperimentReport rep;
    rep.name = c.name;
    rep.domain = c.has_domain ? c.domain.describe() : "none";
    rep.measure = c.measure_label;
    rep.boundary = to_string(c.bc);

    const bool need_pairs = has(c, "spectrum") || has(c, "nodal") || has(c, "courant") || has(c, "green") ||
                            has(c, "rayleigh") || has(c, "conformal-roundtrip");
    const bool need_pencil = need_pairs || has(c, "maxprinciple") || has(c, "harmonic");
    std::optional<Stage> st;
    if (need_pencil) {
        try {
            st = solve_stage(c, c.domain);
        } catch (const Error& e) {
            throw Error(e.kind(), "experiment '" + c.name + "': " + e.what());
        }
        rep.vertices = st->mesh->num_vertices();
        rep.dofs = st->pencil.num_dofs();
        for (const auto& w : st->solve.warnings) rep.notes.push_back(w);
    }

    // Courant first: a failure may replace the stage with a refined mesh.
    std::optional<CourantReport> courant;
    if (st && (has(c, "courant") || has(c, "nodal"))) {
        courant = courant_check(st->pairs, st->decomps, c.bc);
        if (!courant->all_pass) {
            if (const auto r = refine(st->domain)) {
                rep.notes.push_back("courant bound failed on " + st->domain.describe() + "; retried on " + r->describe());
                st = solve_stage(c, *r);
                rep.vertices = st->mesh->num_vertices();
                rep.dofs = st->pencil.num_dofs();
                courant = courant_check(st->pairs, st->decomps, c.bc);
            }
        }
        rep.nodal = courant->rows;
    }
    if (st) {
        for (std::size_t i = 0; i < st->pairs.size(); ++i) {
            const auto& p = st->pairs[i];
            rep.spectrum.push_back({p.index, p.lambda, st->decomps[i].count,
                                    courant_bound(p.cluster_first, p.multiplicity, c.bc), p.residual});
            rep.eigenfunctions.emplace_back(p.index, p.coeffs);
        }
        rep.mesh = st->mesh;
        // Discrete Poincare constant: max |u|^2_mu / |grad u|^2 over the FEM space.
        const std::size_t first = c.bc == BoundaryCondition::Closed ? 1 : 0;
        if (st->pairs.size() > first && st->pairs[first].lambda > 0.0)
            rep.notes.push_back("discrete Poincare constant 1/lambda_" + std::to_string(st->pairs[first].index) + " = " +
                                fmt(1.0 / st->pairs[first].lambda, 8));
    }

    if (has(c, "spectrum")) {
        bool ok = true;
        std::ostringstream d;
        double worst_res = 0.0;
        for (const auto& p : st->pairs) worst_res = std::max(worst_res, p.residual);
        ok = worst_res <= c.tol.residual;
        d << "max residual " << fmt(worst_res, 3);
        for (std::size_t i = 0; i < c.expected_lambdas.size(); ++i) {
            if (i >= st->pairs.size()) {
                ok = false;
                d << "; missing pair " << i;
                continue;
            }
            const double want = c.expected_lambdas[i], got = st->pairs[i].lambda;
            const double err = want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want);
            const bool pass = want == 0.0 ? err <= c.tol.residual : err <= c.tol.lambda_rel;
            ok = ok && pass;
            d << "; lambda[" << st->pairs[i].index << "]=" << fmt(got, 8) << " expected " << fmt(want, 8) << " err "
              << fmt(err, 3);
        }
        if (c.reference_eigenfunction == "tent") {
            const MeasureSpec& m = *c.measure;
            double nrm = 0.0;
            for (const auto& nd : global_nodes(m, 256)) nrm += nd.w * std::pow(tent(c.domain, nd.chart), 2);
            nrm = std::sqrt(nrm);
            const auto& u = st->pairs[c.bc == BoundaryCondition::Closed ? 1 : 0].coeffs;
            double dist = 0.0;
            for (int v = 0; v < st->mesh->num_vertices(); ++v)
                dist = std::max(dist, std::abs(u[v] - tent(c.domain, st->mesh->vertices()[v]) / nrm));
            ok = ok && dist <= c.tol.eigenfunction_sup;
            d << "; sup distance to normalized tent " << fmt(dist, 4);
        }
        add(rep, "spectrum", ok, d.str());
    }

    if (has(c, "nodal")) {
        bool ok = true;
        std::ostringstream d;
        for (std::size_t i = 0; i < st->pairs.size(); ++i) {
            const auto& p = st->pairs[i];
            const int n = st->decomps[i].count;
            if (c.bc == BoundaryCondition::Dirichlet && p.index == 1 && n != 1) {
                ok = false;
                d << "u1 has " << n << " domains; ";
            }
            if (c.bc == BoundaryCondition::Dirichlet && p.index == 2 && n != 2) {
                ok = false;
                d << "u2 has " << n << " domains; ";
            }
            if (p.index >= 2 && n < 2) {
                ok = false;
                d << "u" << p.index << " has a single domain; ";
            }
            if (c.bc == BoundaryCondition::Closed && p.index == 0 && n != 1) {
                ok = false;
                d << "constant mode split; ";
            }
        }
        add(rep, "nodal", ok, ok ? "ground state single-signed, higher modes change sign" : d.str());
    }
    if (has(c, "courant")) {
        int worst = -1000;
        for (const auto& r : courant->rows) worst = std::max(worst, r.nodal_count - r.bound);
        add(rep, "courant", courant->all_pass, "max(count - bound) = " + std::to_string(worst));
    }

    if (has(c, "rayleigh")) {
        double worst = 0.0;
        for (const auto& p : st->pairs) {
            const double R = rayleigh_quotient(st->pencil, p.coeffs);
            worst = std::max(worst, p.lambda == 0.0 ? std::abs(R) : std::abs(R - p.lambda) / p.lambda);
        }
        // Random trial vectors never undercut the bottom of the spectrum.
        const auto& P = st->pencil;
        const bool closed = c.bc == BoundaryCondition::Closed;
        const double l1 = st->pairs[closed ? 1 : 0].lambda;
        std::mt19937_64 rng(c.seed + 7);
        std::normal_distribution<double> N;
        const Vector one = Vector::Ones(P.num_dofs());
        const double mass = one.dot(P.M * one);
        double min_ratio = 1e300;
        for (int t = 0; t < c.rayleigh_trials; ++t) {
            Vector u(P.num_dofs());
            for (int i = 0; i < u.size(); ++i) u[i] = N(rng);
            if (closed) u -= (one.dot(P.M * u) / mass) * one;
            min_ratio = std::min(min_ratio, rayleigh_quotient(P, u));
        }
        const bool ok = worst <= c.tol.rayleigh && min_ratio >= l1 - 1e-8 * std::max(1.0, l1);
        add(rep, "rayleigh", ok,
            "max |R(u_n)-lambda_n|/lambda_n " + fmt(worst, 3) + "; min random R " + fmt(min_ratio, 8) + " vs lambda_1 " +
                fmt(l1, 8));
    }

    if (has(c, "maxprinciple")) {
        if (c.bc != BoundaryCondition::Dirichlet) {
            add(rep, "maxprinciple", true, "not applicable (no boundary)");
        } else {
            const DirichletSolver solver(st->pencil);
            std::mt19937_64 rng(c.seed + 11);
            std::uniform_real_distribution<double> U(0.0, 1.0);
            double worst = 0.0;
            const int nv = st->mesh->num_vertices();
            for (int t = 0; t < c.maxprinciple_trials; ++t)
                for (double sign : {-1.0, 1.0}) {
                    Vector f(nv);
                    for (int i = 0; i < nv; ++i) f[i] = sign * U(rng);
                    const Vector u = solver.solve(f);
                    const double un = u.cwiseAbs().maxCoeff();
                    // f <= 0 gives a subsolution: no positive interior values; mirrored for f >= 0.
                    const double bad = sign < 0 ? u.maxCoeff() : -u.minCoeff();
                    if (un > 0) worst = std::max(worst, bad / un);
                }
            add(rep, "maxprinciple", worst <= c.tol.maxprinciple,
                "worst wrong-signed interior extremum / ||u|| = " + fmt(worst, 3));
        }
    }

    if (has(c, "harmonic")) {
        if (c.bc == BoundaryCondition::Dirichlet) {
            const Vector u = DirichletSolver(st->pencil).solve(Vector::Zero(st->mesh->num_vertices()));
            const double n = u.cwiseAbs().maxCoeff();
            add(rep, "harmonic", n <= c.tol.harmonic, "||u|| for f = 0: " + fmt(n, 3));
        } else {
            const int dim = pencil_kernel_dimension(st->pencil);
            const Vector one = Vector::Ones(st->pencil.num_dofs());
            const double k1 = (st->pencil.K * one).cwiseAbs().maxCoeff();
            const double kmax = st->pencil.K.coeffs().cwiseAbs().maxCoeff();
            const bool ok = dim == 1 && k1 <= 1e-12 * kmax;
            add(rep, "harmonic", ok, "kernel dimension " + std::to_string(dim) + "; ||K 1|| " + fmt(k1, 3));
        }
    }

    if (has(c, "conformal-roundtrip")) {
        std::ostringstream d;
        bool ok = true;
        const double R = c.domain.kind == DomainSpec::Kind::Hemisphere ? c.domain.sphere_radius : 2.0;
        const StereoChart chart(R);
        double rt = 0.0;
        std::mt19937_64 rng(c.seed + 13);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        for (int i = 0; i < 1000; ++i) {
            Vec2 y(U(rng), U(rng));
            y *= R;
            if (y.norm() > R) continue;
            rt = std::max(rt, (chart.forward(chart.inverse(y)) - y).norm() / R);
        }
        ok = rt <= 1e-12;
        d << "roundtrip " << fmt(rt, 3);
        if (c.domain.kind == DomainSpec::Kind::Hemisphere) {
            const auto* pf = c.measure->as<Pushforward>();
            if (!pf || pf->direction != PushDirection::DiskToSphere)
                throw Error(ErrorKind::Config, "conformal-roundtrip on a hemisphere needs a disk_to_sphere measure");
            DomainSpec flat = c.domain;
            flat.kind = c.domain.base;
            const TriMesh fm = build_mesh(flat);
            const SparseMatrix Kf = assemble_stiffness(fm);
            const SparseMatrix Kc = assemble_stiffness(*st->mesh, StiffnessMode::ChartMetric);
            const SparseMatrix dK = Kf - Kc;
            const double dk = dK.coeffs().cwiseAbs().maxCoeff();
            const Pencil pf_flat = assemble_pencil(fm, *pf->base, c.bc);
            const Pencil pf_emb = assemble_pencil(*st->mesh, *c.measure, c.bc, StiffnessMode::EmbeddedFlat);
            const double lf = solve_eigenpairs(pf_flat, 1).front().lambda;
            const double le = solve_eigenpairs(pf_emb, 1).front().lambda;
            const double rel = std::abs(le - lf) / lf;
            ok = ok && dk <= c.tol.conformal_stiffness && rel <= c.tol.conformal_lambda;
            d << "; stiffness max entry diff " << fmt(dk, 3) << "; lambda_1 flat " << fmt(lf, 8) << " embedded "
              << fmt(le, 8) << " rel " << fmt(rel, 3);
        }
        add(rep, "conformal-roundtrip", ok, d.str());
    }

    if (has(c, "green")) run_green(c, *st, rep);

    if (has(c, "dim")) {
        const MeasureSpec& m = c.dim.measure ? *c.dim.measure : *c.measure;
        std::vector<double> grid;
        for (int k = c.dim.kmin; k <= c.dim.kmax; ++k) grid.push_back(std::pow(c.dim.base, -k));
        const auto est = estimate_dim_infinity(m, grid, default_centers(m));
        const bool ok = std::abs(est.slope - c.dim.expected) <= c.dim.tolerance;
        add(rep, "dim", ok, "slope " + fmt(est.slope, 6) + " expected " + fmt(c.dim.expected, 6) + " +- " + fmt(c.dim.tolerance, 3));
    }
    return rep;
}

void emit_report(const ExperimentReport& r, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IO, "emit_report: cannot create " + dir.string() + ": " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream os(dir / name, std::ios::binary);
        if (!os) throw Error(ErrorKind::IO, "emit_report: cannot write " + (dir / name).string());
        return os;
    };
    {
        auto os = open("spectrum.csv");
        os << "index,lambda,nodal_count,courant_bound,residual\n";
        for (const auto& s : r.spectrum)
            os << s.index << ',' << fmt(s.lambda) << ',' << s.nodal_count << ',' << s.courant_bound << ','
               << fmt(s.residual, 3) << '\n';
    }
    {
        auto os = open("nodal.csv");
        os << "index,lambda,multiplicity_cluster,nodal_count,bound,pass\n";
        for (const auto& n : r.nodal)
            os << n.index << ',' << fmt(n.lambda) << ',' << n.multiplicity << ',' << n.nodal_count << ',' << n.bound
               << ',' << (n.pass ? "pass" : "fail") << '\n';
    }
    {
        auto os = open("green.csv");
        write_green_csv(os, r.green);
    }
    if (r.mesh)
        for (const auto& [index, u] : r.eigenfunctions) {
            const std::string name = "eigenfunction_" + std::to_string(index) + ".csv";
            auto os = open(name.c_str());
            write_eigenfunction_csv(os, *r.mesh, u);
        }
    {
        auto os = open("summary.txt");
        os << "KREIN-LAB REPORT v1\n";
        os << "name: " << r.name << '\n';
        os << "domain: " << r.domain << '\n';
        os << "measure: " << r.measure << '\n';
        os << "boundary: " << r.boundary << '\n';
        os << "vertices: " << r.vertices << "\ndofs: " << r.dofs << '\n';
        os << "checks: " << r.checks.size() << '\n';
        for (const auto& c : r.checks) os << "check " << c.name << ": " << (c.pass ? "pass" : "FAIL") << " | " << c.detail << '\n';
        for (const auto& n : r.notes) os << "note: " << n << '\n';
        os << "result: " << (r.all_pass() ? "pass" : "FAIL") << '\n';
        if (!os) throw Error(ErrorKind::IO, "emit_report: write failed in " + dir.string());
    }
}

} // namespace krein
