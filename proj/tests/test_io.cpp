#include <catch2/catch_amalgamated.hpp>

#include "larom/config.hpp"
#include "larom/io.hpp"

#include <filesystem>
#include <sstream>

using namespace larom;

TEST_CASE("config parsing") {
    std::istringstream is(R"(
# comment line
[problem]
L = 10
p_tot = 0.95

[rom]
tol = 1e-3
n_max = 25

[loop]
accelerated = true
seed = 77
)");
    auto kv = config::parse_config(is);
    CHECK(kv.number("problem.L", 0.0) == 10.0);
    CHECK(kv.number("rom.tol", 0.0) == Catch::Approx(1e-3));
    CHECK(kv.integer("rom.n_max", 0) == 25);
    CHECK(kv.flag("loop.accelerated", false));
    auto cfg = config::make_training_config(kv);
    CHECK(cfg.n_max == 25);
    CHECK(cfg.accelerated);
    CHECK(cfg.seed == 77);

    SECTION("defaults carry the published values") {
        auto dflt = config::make_training_config(config::KeyValues{});
        CHECK(dflt.problem.L == 10.0);
        CHECK(dflt.problem.p_tot == 0.95);
        CHECK(dflt.problem.T_tot == 0.95);
        CHECK(dflt.problem.gamma == 1.4);
        CHECK(dflt.problem.c_nu == 0.1);
        CHECK(dflt.problem.gamma_ip_factor == 10.0);
        CHECK(dflt.n_elements0 == 60);
        CHECK(dflt.degree == 2);
        CHECK(dflt.train_grid == 15);
        CHECK(dflt.greedy_grid == 10);
        CHECK(dflt.n0_grid == 3);
        CHECK(dflt.tol == 1e-3);
        CHECK(dflt.iterations == 3);
        CHECK(dflt.mesh_growth == 1.5);
        CHECK(dflt.reg.xi == 1e-3);
        CHECK(dflt.reg.eps == 0.1);
        CHECK(dflt.reg.c_exp == Catch::Approx(0.0025));
        CHECK(dflt.reg.kappa_msh == 10.0);
        CHECK(dflt.reg.delta == 0.5);
        CHECK(dflt.ptc.cfl0 == 1.0);
        CHECK(dflt.warm_cfl0 == 100.0);
        CHECK(dflt.box.lo[0] == 0.5);
        CHECK(dflt.box.hi[0] == 1.5);
        CHECK(dflt.box.lo[1] == 0.7);
        CHECK(dflt.box.hi[1] == 0.85);
    }

    SECTION("malformed lines name their line number") {
        std::istringstream bad("[loop]\nnot a pair\n");
        try {
            config::parse_config(bad);
            FAIL("expected a parse error");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
}

TEST_CASE("binary matrix round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "larom_io_test";
    fs::create_directories(dir);
    Rng rng(5);
    MatrixXd m(7, 3);
    for (int i = 0; i < m.size(); ++i) m(i / 3, i % 3) = rng.uniform(-1, 1);
    io::write_matrix(m, dir / "m.bin");
    MatrixXd back = io::read_matrix(dir / "m.bin");
    CHECK((m - back).norm() == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("ROM artifact directory round trip") {
    namespace fs = std::filesystem;
    using namespace larom::training;

    TrainingConfig cfg;
    cfg.n_elements0 = 16;
    cfg.tol = 1e-2;
    cfg.n_max = 6;
    ParameterBox narrow;
    narrow.lo = {1.35, 0.78};
    narrow.hi = {1.5, 0.82};
    cfg.box = narrow;

    auto mesh = mesh1d::build_uniform_mesh(10.0, cfg.n_elements0, 2);
    auto M = mor::build_l2_gram(*mesh, 3);
    auto G = mor::build_h1br2_gram(*mesh, 3);
    auto basis = std::make_shared<registration::MapBasis>(10, 10.0);
    auto pmap = registration::ParametricMap::identity(basis);
    GreedyResult g = weak_greedy(mesh, pmap, parameter_grid(narrow, 3), parameter_grid(narrow, 2),
                                 cfg, M, G);

    fs::path dir = fs::temp_directory_path() / "larom_rom_test";
    fs::remove_all(dir);
    io::save_rom(g.rom, dir);
    mor::RomArtifact back = io::load_rom(dir, basis);

    CHECK(back.trial.Z.rows() == g.rom.trial.Z.rows());
    CHECK(back.trial.Z.cols() == g.rom.trial.Z.cols());
    CHECK((back.trial.Z - g.rom.trial.Z).norm() < 1e-15);
    CHECK((back.eq.rho_e - g.rom.eq.rho_e).norm() < 1e-15);
    CHECK(back.eq.elems == g.rom.eq.elems);

    // identical online predictions
    Vector2d mu(1.42, 0.8);
    mor::LspgReport a = mor::lspg_solve(mu, g.rom, g.rom.nearest_init(mu, cfg.box), cfg.gnm);
    mor::LspgReport b = mor::lspg_solve(mu, back, back.nearest_init(mu, cfg.box), cfg.gnm);
    CHECK((a.alpha - b.alpha).norm() < 1e-12 * (1.0 + a.alpha.norm()));
    fs::remove_all(dir);
}

TEST_CASE("report CSVs") {
    namespace fs = std::filesystem;
    training::RunReport rep;
    training::IterationReport it;
    it.iteration = 1;
    it.rob_size = 5;
    it.mesh_elements = 60;
    it.phase_seconds["greedy_hf"] = 1.5;
    training::TestMetrics m;
    m.mu = {1.0, 0.8};
    m.e_hf = 1e-3;
    m.eta = 2.0;
    m.e_inf = 5e-4;
    it.metrics.push_back(m);
    it.pod_eigs_registered = VectorXd::Constant(2, 1.0);
    it.pod_eigs_unregistered = VectorXd::Constant(3, 2.0);
    rep.iterations.push_back(it);

    fs::path dir = fs::temp_directory_path() / "larom_csv_test";
    fs::create_directories(dir);
    io::write_metrics_csv(rep, dir / "metrics.csv");
    io::write_pod_eigs_csv(rep, dir / "pod_eigs.csv");
    io::write_costs_csv(rep, dir / "costs.csv");

    std::ifstream f(dir / "metrics.csv");
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    CHECK(header == "iteration, A0, p0, E_hf, eta, E_inf, online_seconds");
    CHECK(row.find("0.001") != std::string::npos);
    fs::remove_all(dir);
}
