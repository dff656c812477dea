#include <catch2/catch_amalgamated.hpp>

#include "larom/training.hpp"

using namespace larom;
using namespace larom::training;

TEST_CASE("parameter grids and test draws") {
    ParameterBox box;
    auto grid = parameter_grid(box, 3);
    REQUIRE(grid.size() == 9);
    CHECK(grid.front()[0] == Catch::Approx(0.5));
    CHECK(grid.back()[0] == Catch::Approx(1.5));
    CHECK(grid.back()[1] == Catch::Approx(0.85));

    auto t1 = test_parameters(box, 20, 2024);
    auto t2 = test_parameters(box, 20, 2024);
    REQUIRE(t1.size() == 20);
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i] == t2[i]);  // deterministic
        CHECK(t1[i][0] >= 0.5);
        CHECK(t1[i][0] <= 1.5);
        CHECK(t1[i][1] >= 0.7);
        CHECK(t1[i][1] <= 0.85);
    }
}

TEST_CASE("strong greedy") {
    SECTION("enumerated picks on a 3-vector example") {
        MatrixXd coords(2, 3);
        coords << 1, 0, 2,
                  0, 1, 0;
        auto picks = strong_greedy(coords, 2);
        REQUIRE(picks.size() == 2);
        CHECK(picks[0] == 2);  // largest norm
        CHECK(picks[1] == 1);  // only remaining direction off the span
    }

    SECTION("identical coordinates: deterministic first pick, no second gain") {
        MatrixXd coords(2, 3);
        coords << 1, 1, 1,
                  2, 2, 2;
        auto picks = strong_greedy(coords, 3);
        REQUIRE(!picks.empty());
        CHECK(picks[0] == 0);  // lowest index on ties
        CHECK(picks.size() == 1);  // zero-gain directions are not added
    }

    SECTION("n0 = all returns a permutation") {
        Rng rng(3);
        MatrixXd coords(5, 5);
        for (int i = 0; i < 25; ++i) coords(i / 5, i % 5) = rng.uniform(-1, 1);
        auto picks = strong_greedy(coords, 5);
        std::vector<int> sorted = picks;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
    }

    SECTION("max-min gains are non-increasing") {
        Rng rng(5);
        MatrixXd coords(6, 10);
        for (int i = 0; i < coords.size(); ++i) coords(i / 10, i % 10) = rng.uniform(-1, 1);
        auto picks = strong_greedy(coords, 6);
        // recompute the gain sequence
        MatrixXd Q(6, 0);
        double prev_gain = 1e300;
        for (int idx : picks) {
            VectorXd v = coords.col(idx);
            if (Q.cols() > 0) v -= Q * (Q.transpose() * coords.col(idx));
            double gain = v.norm();
            CHECK(gain <= prev_gain + 1e-12);
            prev_gain = gain;
            if (v.norm() > 1e-12) {
                Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
                Q.col(Q.cols() - 1) = v / v.norm();
            }
        }
    }
}

TEST_CASE("error indicator tracks the true error") {
    TrainingConfig cfg;
    cfg.n_elements0 = 24;
    auto mesh = mesh1d::build_uniform_mesh(10.0, cfg.n_elements0, 2);
    auto M = mor::build_l2_gram(*mesh, 3);
    auto G = mor::build_h1br2_gram(*mesh, 3);
    auto basis = std::make_shared<registration::MapBasis>(10, 10.0);
    auto pmap = registration::ParametricMap::identity(basis);

    // two snapshots, ROM from them
    std::vector<Vector2d> mus = {{1.3, 0.72}, {1.5, 0.8}};
    MatrixXd snaps(3 * mesh->n_local() * mesh->n_elements(), 2);
    for (int i = 0; i < 2; ++i) {
        euler1d::NozzleProblem p = cfg.problem;
        p.A0 = mus[i][0];
        p.p0 = mus[i][1];
        auto r = euler1d::ptc_solve(mesh, p, euler1d::freestream_field(mesh, p), cfg.ptc);
        REQUIRE(r.converged);
        snaps.col(i) = r.coeffs;
    }
    auto rom = training::detail::build_rom(mesh, pmap, mus, snaps, cfg.problem, cfg, M, G);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(G);

    SECTION("indicator at a training snapshot is tiny") {
        double d = error_indicator(snaps.col(0), mus[0], rom, ldlt, cfg.problem);
        CHECK(d < 1e-7);
    }

    SECTION("indicator grows monotonically along a perturbation ray") {
        Rng rng(1);
        VectorXd dir(snaps.rows());
        for (int i = 0; i < dir.size(); ++i) dir[i] = rng.uniform(-1, 1);
        dir *= snaps.col(0).norm() / dir.norm();
        double prev = 0.0;
        for (double amp : {1e-4, 1e-3, 1e-2}) {
            double d = error_indicator(snaps.col(0) + amp * dir, mus[0], rom, ldlt, cfg.problem);
            CHECK(d > prev);
            prev = d;
        }
    }
}

TEST_CASE("weak greedy on a coarse setup") {
    TrainingConfig cfg;
    cfg.n_elements0 = 24;
    cfg.tol = 1e-3;
    cfg.n_max = 12;
    auto mesh = mesh1d::build_uniform_mesh(10.0, cfg.n_elements0, 2);
    auto M = mor::build_l2_gram(*mesh, 3);
    auto G = mor::build_h1br2_gram(*mesh, 3);
    auto basis = std::make_shared<registration::MapBasis>(10, 10.0);
    auto pmap = registration::ParametricMap::identity(basis);

    // restrict to a narrow parameter band so the unregistered manifold is easy
    ParameterBox narrow;
    narrow.lo = {1.30, 0.78};
    narrow.hi = {1.50, 0.82};
    cfg.box = narrow;
    auto p_gr = parameter_grid(narrow, 4);
    auto seeds = parameter_grid(narrow, 2);

    GreedyResult g = weak_greedy(mesh, pmap, p_gr, seeds, cfg, M, G);
    CHECK(g.rom.n() >= 4);
    CHECK(g.converged);

    SECTION("no parameter is selected twice") {
        for (std::size_t i = 0; i < g.p_star.size(); ++i)
            for (std::size_t j = i + 1; j < g.p_star.size(); ++j)
                CHECK((g.p_star[i] - g.p_star[j]).norm() > 1e-12);
    }

    SECTION("trial basis is orthonormal and eigenvalues are sorted") {
        MatrixXd I = g.rom.trial.Z.transpose() * (M * g.rom.trial.Z);
        CHECK((I - MatrixXd::Identity(g.rom.n(), g.rom.n())).norm() < 1e-10);
        for (int i = 1; i < g.rom.trial.eigenvalues.size(); ++i)
            CHECK(g.rom.trial.eigenvalues[i - 1] >= g.rom.trial.eigenvalues[i] - 1e-12);
    }

    SECTION("huge tolerance exits after the first check") {
        TrainingConfig loose = cfg;
        loose.tol = 1e9;
        GreedyResult g2 = weak_greedy(mesh, pmap, p_gr, seeds, loose, M, G);
        CHECK(g2.converged);
        CHECK(g2.steps.size() == 1);  // one indicator sweep + one HF check
    }

    SECTION("LSPG at a training parameter reproduces its snapshot") {
        mor::LspgReport rep =
            mor::lspg_solve(g.p_star[0], g.rom, g.rom.train_coords.col(0), cfg.gnm);
        VectorXd diff = g.rom.trial.Z * rep.alpha - g.snapshots.col(0);
        double rel = std::sqrt(diff.dot(M * diff) /
                               g.snapshots.col(0).dot(M * g.snapshots.col(0)));
        CHECK(rel < 5e-6);
    }

    SECTION("full-space LSPG with unit weights reproduces the PTC solution") {
        // trial = orthonormalized full coefficient space on a tiny mesh
        auto tiny = mesh1d::build_uniform_mesh(10.0, 4, 2);
        auto Mt = mor::build_l2_gram(*tiny, 3);
        auto Gt = mor::build_h1br2_gram(*tiny, 3);
        euler1d::NozzleProblem p = cfg.problem;
        p.A0 = 1.4;
        p.p0 = 0.8;
        auto hf = euler1d::ptc_solve(tiny, p, euler1d::freestream_field(tiny, p), cfg.ptc);
        REQUIRE(hf.converged);

        int n = static_cast<int>(hf.coeffs.size());
        // M-orthonormal full basis via Cholesky of the Gram
        Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(Mt);
        MatrixXd Z = llt.matrixU().solve(MatrixXd::Identity(n, n));
        mor::RomArtifact rom;
        rom.mesh = tiny;
        rom.problem = cfg.problem;
        rom.map = registration::ParametricMap::identity(basis);
        rom.trial.Z = Z;
        rom.trial.mesh = tiny;
        rom.trial.eigenvalues = VectorXd::Ones(n);
        std::vector<registration::Map1D> maps{registration::Map1D::identity(basis)};
        std::vector<VectorXd> vecs{hf.coeffs};
        rom.test = mor::build_test_space(rom.trial, vecs, maps, p, Gt, 2);
        rom.eq = hyperreduction::all_ones_weights(tiny->n_elements(), tiny->n_facets());
        rom.build_blocks();
        rom.train_mu = {{1.4, 0.8}};
        rom.train_coords = mor::best_fit_coords(hf.coeffs, rom.trial, Mt);

        mor::GnmConfig gnm;
        gnm.tol = 1e-9;
        gnm.max_iters = 60;
        VectorXd a0 = rom.train_coords.col(0);
        // perturb the start so the solve does real work
        a0 *= 1.01;
        mor::LspgReport rep = mor::lspg_solve(Vector2d(1.4, 0.8), rom, a0, gnm);
        VectorXd diff = Z * rep.alpha - hf.coeffs;
        CHECK(std::sqrt(diff.dot(Mt * diff)) < 1e-6);
    }
}
