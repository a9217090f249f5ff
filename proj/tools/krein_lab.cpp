// krein-lab: batch runner for measure-Laplacian experiments.

#include "krein/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace krein;

namespace {

int cmd_run(const std::string& config, const std::string& out, const std::optional<std::uint64_t>& seed)
{
    ExperimentConfig cfg = load_experiment_config(config);
    if (seed) cfg.seed = *seed;
    std::filesystem::path dir = out.empty() ? cfg.out_dir : std::filesystem::path(out);
    if (dir.empty()) dir = cfg.name + "-report";
    const ExperimentReport rep = run_experiment(cfg);
    emit_report(rep, dir);
    for (const auto& c : rep.checks)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
    for (const auto& n : rep.notes) std::cout << "note: " << n << '\n';
    std::cout << "report written to " << dir.string() << '\n';
    return rep.all_pass() ? 0 : 1;
}

struct MeshArgs {
    std::string type = "rectangle";
    double half_width = 1.0, half_height = 1.0, radius = 1.0, sphere_radius = 2.0;
    int n = 8, level = 3;
    std::string base = "rectangle";
    std::string output;
};

int cmd_mesh(const MeshArgs& a)
{
    DomainSpec d;
    auto kind = [](const std::string& s) {
        if (s == "rectangle") return DomainSpec::Kind::Rectangle;
        if (s == "disk") return DomainSpec::Kind::Disk;
        if (s == "sphere") return DomainSpec::Kind::Sphere;
        if (s == "hemisphere") return DomainSpec::Kind::Hemisphere;
        throw Error(ErrorKind::Config, "mesh: unknown type '" + s + "'");
    };
    d.kind = kind(a.type);
    d.base = kind(a.base);
    d.half_width = a.half_width;
    d.half_height = a.half_height;
    d.radius = a.radius;
    d.sphere_radius = a.sphere_radius;
    d.n = a.n;
    d.level = a.level;
    const TriMesh m = build_mesh(d);
    std::cout << "domain: " << d.describe() << '\n'
              << "vertices: " << m.num_vertices() << '\n'
              << "triangles: " << m.num_triangles() << '\n'
              << "boundary vertices: " << m.num_boundary() << '\n'
              << "euler characteristic: " << m.euler_characteristic() << '\n'
              << "max edge: " << m.max_edge_length() << '\n'
              << "min angle (deg): " << m.min_angle_deg() << '\n';
    if (!a.output.empty()) {
        std::ofstream os(a.output);
        if (!os) throw Error(ErrorKind::IO, "mesh: cannot write " + a.output);
        write_mesh(os, m);
    }
    return 0;
}

int cmd_dim(const std::string& config, int kmin, int kmax, double base)
{
    const MeasureSpec m = load_measure_config(config);
    std::vector<double> grid;
    for (int k = kmin; k <= kmax; ++k) grid.push_back(std::pow(base, -k));
    const auto est = estimate_dim_infinity(m, grid, default_centers(m));
    std::printf("delta,sup_ball_mass\n");
    for (const auto& [d, v] : est.table) std::printf("%.10g,%.10g\n", d, v);
    std::printf("slope %.6f over delta in [%.4g, %.4g]\n", est.slope, est.delta_range.first, est.delta_range.second);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"krein-lab: spectra, nodal domains and Green operators of measure Laplacians"};
    app.require_subcommand(1);

    std::string config, out;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "run an experiment config and write CSV reports");
    run->add_option("config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory");
    run->add_option("--seed", seed, "seed for the randomized checks");

    MeshArgs ma;
    auto* mesh = app.add_subcommand("mesh", "generate a mesh and print its statistics");
    mesh->add_option("--type", ma.type, "rectangle | disk | sphere | hemisphere");
    mesh->add_option("--base", ma.base, "planar base of a hemisphere chart");
    mesh->add_option("--half-width", ma.half_width);
    mesh->add_option("--half-height", ma.half_height);
    mesh->add_option("--radius", ma.radius, "disk or sphere radius");
    mesh->add_option("--sphere-radius", ma.sphere_radius, "hemisphere chart radius");
    mesh->add_option("-n", ma.n, "rectangle: 2n cells per side");
    mesh->add_option("--level", ma.level, "disk: 2^level rings; sphere: icosphere level");
    mesh->add_option("-o,--output", ma.output, "write the mesh in KLMESH format");

    std::string mconfig;
    int kmin = 4, kmax = 9;
    double base = 2.0;
    auto* dim = app.add_subcommand("dim", "estimate the lower L-infinity dimension of a measure");
    dim->add_option("measure-config", mconfig, "measure config (JSON)")->required()->check(CLI::ExistingFile);
    dim->add_option("--kmin", kmin);
    dim->add_option("--kmax", kmax);
    dim->add_option("--base", base, "radii base^-k");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*run) return cmd_run(config, out, seed);
        if (*mesh) return cmd_mesh(ma);
        if (*dim) return cmd_dim(mconfig, kmin, kmax, base);
    } catch (const Error& e) {
        std::cerr << "krein-lab: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "krein-lab: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
