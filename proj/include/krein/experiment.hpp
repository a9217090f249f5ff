#pragma once

#include "krein/assemble.hpp"
#include "krein/green.hpp"
#include "krein/measure.hpp"
#include "krein/mesh.hpp"
#include "krein/nodal.hpp"
#include "krein/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace krein {

inline constexpr int kConfigSchemaVersion = 1;

/// Measure from JSON text or a file (same schema as the "measure" block of an experiment).
MeasureSpec parse_measure_config(const std::string& text, const std::string& origin = "<string>");
MeasureSpec load_measure_config(const std::filesystem::path& path);

struct DomainSpec {
    enum class Kind { Rectangle, Disk, Sphere, Hemisphere };
    Kind kind = Kind::Rectangle;
    Kind base = Kind::Rectangle;   // planar base of a hemisphere chart
    double half_width = 1.0, half_height = 1.0;
    int n = 16;                    // rectangle: 2n cells per side
    double radius = 1.0;           // disk or sphere radius
    int level = 4;                 // disk rings 2^level / icosphere level
    double sphere_radius = 2.0;    // hemisphere chart

    std::string describe() const;
};

TriMesh build_mesh(const DomainSpec& d);
/// Same domain at twice the resolution, or nullopt past the desk-scale limit.
std::optional<DomainSpec> refine(const DomainSpec& d);

struct Tolerances {
    double residual = 1e-8;
    double lambda_rel = 0.02;
    double eigenfunction_sup = 0.03;
    double rayleigh = 1e-8;
    double maxprinciple = 1e-10;
    double harmonic = 1e-12;
    double symmetry = 1e-10;
    double positivity = 1e-10;
    double boundary = 1e-6;
    double zero_mean = 1e-6;
    double identity = 1e-4;
    double c2_stability = 0.02;
    double fixed_point = 0.05;
    double conformal_lambda = 0.01;
    double conformal_stiffness = 1e-8;
};

struct GreenCheckConfig {
    std::optional<GreenKernel> kernel;   // default: derived from the domain
    int samples = 9;                     // per-side sample count for C2 / fixed point
    int pairs = 500;
    int bumps = 10;
    int norm_trials = 20;
    int norm_resolution = 8;
    int fixed_point_index = 1;
    bool refinement_check = false;       // fixed point residual must drop under mesh doubling
    GreenOptions options;
};

struct DimCheckConfig {
    std::optional<MeasureSpec> measure;  // default: the experiment measure
    int kmin = 4, kmax = 9;
    double base = 2.0;                   // radii base^-k
    double expected = 0.0;
    double tolerance = 0.1;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DomainSpec domain;
    bool has_domain = true;              // dim-only experiments may omit it
    std::optional<MeasureSpec> measure;
    std::string measure_label = "measure";
    BoundaryCondition bc = BoundaryCondition::Dirichlet;
    StiffnessMode stiffness = StiffnessMode::Auto;
    int eigen_count = 6;
    std::vector<std::string> checks;
    std::vector<double> expected_lambdas;
    std::string reference_eigenfunction;   // "tent": (1-|x|/a)(1-|y|/b)
    Tolerances tol;
    GreenCheckConfig green;
    DimCheckConfig dim;
    int rayleigh_trials = 200;
    int maxprinciple_trials = 50;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;
};

/// Check names accepted in "checks".
const std::vector<std::string>& known_checks();

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin = "<string>");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SpectrumRow {
    int index = 0;
    double lambda = 0.0;
    int nodal_count = -1;
    int courant_bound = -1;
    double residual = 0.0;
};

struct ExperimentReport {
    std::string name;
    std::string domain, measure, boundary;
    int vertices = 0, dofs = 0;
    std::vector<SpectrumRow> spectrum;
    std::vector<CourantRow> nodal;
    std::vector<GreenCheckRow> green;
    std::vector<CheckResult> checks;
    std::vector<std::string> notes;
    std::shared_ptr<const TriMesh> mesh;   // final mesh of the eigen stage, if any
    std::vector<std::pair<int, Vector>> eigenfunctions;   // (index, per-vertex values)
    bool all_pass() const;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Writes spectrum.csv, nodal.csv, green.csv and summary.txt into dir.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// CLI exit status for an error kind: 2 configuration, 3 numerical.
int exit_code_for(ErrorKind kind);

} // namespace krein
