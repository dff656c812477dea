// Command-line workbench: high-fidelity solves, parametric registration,
// the adaptive training loop, ROM evaluation, the 2D metric pipeline, and
// report summaries.

#include "larom/config.hpp"
#include "larom/io.hpp"
#include "larom/larom.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace larom;

namespace {

fs::path output_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("LAROM_OUT")) return env;
    return "larom_out";
}

training::TrainingConfig load_config(const std::string& path) {
    if (path.empty()) return config::make_training_config(config::KeyValues{});
    return config::make_training_config(config::parse_config_file(path));
}

bool parse_mu(const std::string& text, Vector2d& mu) {
    std::string t = text;
    std::replace(t.begin(), t.end(), ',', ' ');
    std::istringstream is(t);
    return static_cast<bool>(is >> mu[0] >> mu[1]);
}

int cmd_hf_solve(const std::string& config_path, const std::string& mu_text,
                 const std::string& out_flag) {
    training::TrainingConfig cfg = load_config(config_path);
    Vector2d mu;
    if (!parse_mu(mu_text, mu)) {
        std::cerr << "hf-solve: cannot parse --mu '" << mu_text << "'\n";
        return 2;
    }
    if (mu[0] < cfg.box.lo[0] || mu[0] > cfg.box.hi[0] || mu[1] < cfg.box.lo[1] ||
        mu[1] > cfg.box.hi[1])
        std::cerr << "hf-solve: warning: mu outside the parameter box; solving anyway\n";

    euler1d::NozzleProblem prob = cfg.problem;
    prob.A0 = mu[0];
    prob.p0 = mu[1];
    auto mesh = mesh1d::build_uniform_mesh(prob.L, cfg.n_elements0, cfg.degree);
    auto init = euler1d::freestream_field(mesh, prob);

    fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);

    // Run the plain PTC once for the log, sequencing only if it fails.
    euler1d::PtcResult ptc = euler1d::ptc_solve(mesh, prob, init, cfg.ptc);
    {
        std::ofstream log(dir / "ptc_log.csv");
        io::write_ptc_log(ptc, log);
    }
    mesh1d::StateField sol(mesh, 3, ptc.coeffs);
    if (!ptc.converged) {
        auto rep = training::hf_solve(mesh, prob, cfg);
        if (!rep.converged) {
            std::cerr << "hf-solve: PTC did not converge (residual " << rep.residual_norm
                      << ")\n";
            return 1;
        }
        sol = rep.field;
    }
    {
        std::ofstream f(dir / "state.txt");
        mesh1d::dump_field(sol, f);
    }
    {
        std::ofstream f(dir / "mach.txt");
        mesh1d::dump_field(euler1d::mach_field(sol, prob), f);
    }
    std::cout << "hf-solve: converged; state in " << (dir / "state.txt").string() << "\n";
    return 0;
}

int cmd_register(const std::string& config_path, const std::string& out_flag) {
    training::TrainingConfig cfg = load_config(config_path);
    fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);

    // Snapshot set from a bootstrap ROM (identity map), as in the first
    // iteration of the training loop.
    auto mesh = mesh1d::build_uniform_mesh(cfg.problem.L, cfg.n_elements0, cfg.degree);
    auto M = mor::build_l2_gram(*mesh, 3);
    auto G = mor::build_h1br2_gram(*mesh, 3);
    auto basis = std::make_shared<registration::MapBasis>(10, cfg.problem.L);
    auto pmap = registration::ParametricMap::identity(basis);
    auto p_train = training::parameter_grid(cfg.box, cfg.train_grid);
    auto p_gr = training::parameter_grid(cfg.box, cfg.greedy_grid);
    auto seeds = training::parameter_grid(cfg.box, cfg.n0_grid);
    training::GreedyResult boot = training::weak_greedy(mesh, pmap, p_gr, seeds, cfg, M, G);

    std::vector<double> shocks(p_train.size());
    for (std::size_t i = 0; i < p_train.size(); ++i) {
        mor::LspgReport lr = mor::lspg_solve(p_train[i], boot.rom,
                                             boot.rom.nearest_init(p_train[i], cfg.box), cfg.gnm);
        euler1d::NozzleProblem p = cfg.problem;
        p.A0 = p_train[i][0];
        p.p0 = p_train[i][1];
        mesh1d::StateField field(mesh, 3, boot.rom.trial.Z * lr.alpha);
        shocks[i] = registration::shock_locator(euler1d::mach_field(field, p), cfg.reg.delta);
    }
    Vector2d center = 0.5 * (cfg.box.lo + cfg.box.hi);
    int ref = 0;
    double dbest = 1e300;
    for (std::size_t i = 0; i < p_train.size(); ++i) {
        double d = (p_train[i] - center).squaredNorm();
        if (d < dbest) {
            dbest = d;
            ref = static_cast<int>(i);
        }
    }
    registration::ParametricRegistrationInput rin{p_train, shocks, ref, cfg.box};
    registration::ParametricMap pm =
        registration::register_parametric(basis, rin, cfg.reg, nullptr, cfg.jobs);
    {
        std::ofstream f(dir / "map.txt");
        io::write_map(pm, f);
    }
    std::cout << "register: " << pm.W.cols() << " map modes over " << pm.train_mu.size()
              << " parameters; map in " << (dir / "map.txt").string() << "\n";
    return 0;
}

int cmd_adapt_loop(const std::string& config_path, const std::string& out_flag, int iterations,
                   bool accelerated, int jobs) {
    training::TrainingConfig cfg = load_config(config_path);
    if (iterations > 0) cfg.iterations = iterations;
    if (accelerated) cfg.accelerated = true;
    if (jobs > 0) cfg.jobs = jobs;
    fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);

    training::AdaptiveResult res = training::adaptive_loop(cfg);
    io::write_metrics_csv(res.report, dir / "metrics.csv");
    io::write_pod_eigs_csv(res.report, dir / "pod_eigs.csv");
    io::write_costs_csv(res.report, dir / "costs.csv");
    io::save_rom(res.rom, dir / "rom");
    {
        std::vector<Vector2d> mus = {{0.6, 0.72}, {0.9, 0.78}, {1.2, 0.74}, {1.45, 0.83}};
        io::write_shock_profiles(res.rom, mus, cfg, dir / "shock_profiles.dat");
    }
    std::cout << "adapt-loop: " << res.report.iterations.size() << " iterations in "
              << res.report.total_seconds << " s; artifacts in " << dir.string() << "\n";
    for (const auto& it : res.report.iterations) {
        double med = 0.0;
        std::vector<double> e;
        for (const auto& m : it.metrics) e.push_back(m.e_hf);
        std::sort(e.begin(), e.end());
        if (!e.empty()) med = e[e.size() / 2];
        std::cout << "  it " << it.iteration << ": Ne = " << it.mesh_elements
                  << ", n = " << it.rob_size << ", median E_hf = " << med << "\n";
    }
    return 0;
}

int cmd_rom_eval(const std::string& config_path, const std::string& rom_dir,
                 const std::string& out_flag) {
    training::TrainingConfig cfg = load_config(config_path);
    auto basis = std::make_shared<registration::MapBasis>(10, cfg.problem.L);
    mor::RomArtifact rom = io::load_rom(rom_dir, basis);
    auto test_mu = training::test_parameters(cfg.box, cfg.n_test, cfg.seed);
    auto metrics = training::evaluate(rom, test_mu, cfg);

    fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);
    training::RunReport rep;
    training::IterationReport it;
    it.iteration = 1;
    it.metrics = metrics;
    rep.iterations.push_back(it);
    io::write_metrics_csv(rep, dir / "metrics.csv");
    double worst = 0.0;
    for (const auto& m : metrics) worst = std::max(worst, m.e_hf);
    std::cout << "rom-eval: " << metrics.size() << " parameters, max E_hf = " << worst
              << "; table in " << (dir / "metrics.csv").string() << "\n";
    return 0;
}

int cmd_metric2d(const std::string& mesh_file, const std::vector<std::string>& field_files,
                 const std::string& quality_file, double complexity, const std::string& out_flag) {
    std::ifstream mf(mesh_file);
    if (!mf) {
        std::cerr << "metric2d: cannot open mesh file " << mesh_file << "\n";
        return 2;
    }
    metric2d::TriMesh mesh = metric2d::read_tri_mesh(mf);
    fs::path dir = output_dir(out_flag);
    fs::create_directories(dir);

    if (!quality_file.empty()) {
        std::ifstream qf(quality_file);
        if (!qf) {
            std::cerr << "metric2d: cannot open deformed mesh " << quality_file << "\n";
            return 2;
        }
        metric2d::TriMesh deformed = metric2d::read_tri_mesh(qf);
        auto rep = metric2d::mesh_quality(mesh, deformed.vertices);
        std::cout << "metric2d: f_msh = " << rep.f_msh << ", q ratios in [" << rep.q_min << ", "
                  << rep.q_max << "]" << (rep.inverted ? " (inverted elements)" : "") << "\n";
        return 0;
    }

    if (field_files.empty()) {
        std::cerr << "metric2d: need at least one field file\n";
        return 2;
    }
    std::vector<metric2d::MetricField2D> metrics;
    metric2d::MultiscaleConfig mcfg;
    mcfg.complexity = complexity;
    for (const auto& file : field_files) {
        std::ifstream ff(file);
        if (!ff) {
            std::cerr << "metric2d: cannot open field file " << file << "\n";
            return 2;
        }
        std::vector<double> vals = metric2d::read_vertex_scalar(ff, mesh.n_vertices());
        auto hess = metric2d::hessian_recovery(mesh, vals);
        metrics.push_back(metric2d::multiscale_metric(mesh, hess, mcfg));
    }
    metric2d::MetricField2D combined =
        metrics.size() == 1 ? metrics.front() : metric2d::parametric_intersection(metrics);
    {
        std::ofstream f(dir / "metric.txt");
        metric2d::write_metric(combined, f);
    }
    auto unit = metric2d::unit_mesh_check(combined);
    std::cout << "metric2d: wrote " << (dir / "metric.txt").string()
              << "; metric volume = " << metric2d::metric_volume(combined)
              << ", edge lengths in [" << unit.min_len << ", " << unit.max_len << "]\n";
    return 0;
}

int cmd_report(const std::string& run_dir) {
    fs::path dir = run_dir;
    std::ifstream f(dir / "metrics.csv");
    if (!f) {
        std::cerr << "report: no metrics.csv under " << dir.string() << "\n";
        return 2;
    }
    std::string line;
    std::getline(f, line);  // header
    std::map<int, std::vector<std::array<double, 3>>> by_it;
    while (std::getline(f, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        int it;
        double a, b, ehf, eta, einf, online;
        if (ls >> it >> a >> b >> ehf >> eta >> einf >> online)
            by_it[it].push_back({ehf, eta, einf});
    }
    std::cout << "iteration, n_test, median_E_hf, max_eta, median_E_inf\n";
    for (auto& [it, rows] : by_it) {
        std::vector<double> ehf, eta, einf;
        for (auto& r : rows) {
            ehf.push_back(r[0]);
            eta.push_back(r[1]);
            einf.push_back(r[2]);
        }
        std::sort(ehf.begin(), ehf.end());
        std::sort(einf.begin(), einf.end());
        double max_eta = 0.0;
        for (double e : eta)
            if (std::isfinite(e)) max_eta = std::max(max_eta, e);
        std::cout << it << ", " << rows.size() << ", " << ehf[ehf.size() / 2] << ", " << max_eta
                  << ", " << einf[einf.size() / 2] << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Registration-based model reduction workbench for the quasi-1D nozzle"};
    app.require_subcommand(1);

    std::string config_path, out_dir, mu_text, rom_dir, run_dir;
    std::string mesh_file, quality_file;
    std::vector<std::string> field_files;
    int iterations = -1, jobs = -1;
    bool accelerated = false;
    double complexity = 100.0;

    auto* hf = app.add_subcommand("hf-solve", "Solve the high-fidelity nozzle problem");
    hf->add_option("--config", config_path, "Configuration file");
    hf->add_option("--mu", mu_text, "Parameter pair A0,p0")->required();
    hf->add_option("--out", out_dir, "Output directory");

    auto* reg = app.add_subcommand("register", "Parametric registration over the training grid");
    reg->add_option("--config", config_path, "Configuration file");
    reg->add_option("--out", out_dir, "Output directory");

    auto* loop = app.add_subcommand("adapt-loop", "Run the adaptive training loop");
    loop->add_option("--config", config_path, "Configuration file");
    loop->add_option("--out", out_dir, "Output directory");
    loop->add_option("--iterations", iterations, "Override outer iteration count");
    loop->add_flag("--accelerated", accelerated, "Enable the accelerated training mode");
    loop->add_option("--jobs", jobs, "Worker pool size for parallel phases");

    auto* ev = app.add_subcommand("rom-eval", "Evaluate a stored ROM on the test set");
    ev->add_option("--config", config_path, "Configuration file");
    ev->add_option("--rom", rom_dir, "ROM artifact directory")->required();
    ev->add_option("--out", out_dir, "Output directory");

    auto* m2 = app.add_subcommand("metric2d", "2D metric pipeline: recovery -> multiscale -> intersection");
    m2->add_option("--mesh", mesh_file, "Triangle mesh file")->required();
    m2->add_option("--field,--intersect", field_files, "Vertex scalar field file(s)");
    m2->add_option("--quality", quality_file, "Deformed mesh file for an f_msh report");
    m2->add_option("--complexity", complexity, "Target continuous complexity N");
    m2->add_option("--out", out_dir, "Output directory");

    auto* rp = app.add_subcommand("report", "Summarize a run directory");
    rp->add_option("dir", run_dir, "Run directory with metrics.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (hf->parsed()) return cmd_hf_solve(config_path, mu_text, out_dir);
        if (reg->parsed()) return cmd_register(config_path, out_dir);
        if (loop->parsed())
            return cmd_adapt_loop(config_path, out_dir, iterations, accelerated, jobs);
        if (ev->parsed()) return cmd_rom_eval(config_path, rom_dir, out_dir);
        if (m2->parsed())
            return cmd_metric2d(mesh_file, field_files, quality_file, complexity, out_dir);
        if (rp->parsed()) return cmd_report(run_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
