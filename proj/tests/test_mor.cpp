#include <catch2/catch_amalgamated.hpp>

#include "larom/mor.hpp"
#include "larom/pod.hpp"

#include <cmath>

using namespace larom;
using namespace larom::mor;
using larom::mesh1d::StateField;
using larom::mesh1d::build_uniform_mesh;

TEST_CASE("POD basics") {
    SECTION("single snapshot gives its normalized mode") {
        MatrixXd S(4, 1);
        S << 3.0, 0.0, 4.0, 0.0;
        PodResult p = pod_euclidean(S, 1e-12);
        REQUIRE(p.count == 1);
        CHECK(p.modes.col(0).norm() == Catch::Approx(1.0));
        CHECK(p.coords(0, 0) == Catch::Approx(5.0));
    }

    SECTION("energy criterion on eigenvalues (9, 1, 0)") {
        // three orthogonal snapshots with norms 3, 1, 0
        MatrixXd S = MatrixXd::Zero(3, 3);
        S(0, 0) = 3.0;
        S(1, 1) = 1.0;
        PodResult p = pod_euclidean(S, 0.1);
        CHECK(p.count == 1);  // 9 >= 0.9 * 10
        PodResult p2 = pod_euclidean(S, 0.01);
        CHECK(p2.count == 2);
    }

    SECTION("modes are orthonormal in the supplied product") {
        Rng rng(9);
        MatrixXd S(20, 6);
        for (int i = 0; i < S.size(); ++i) S(i / 6, i % 6) = rng.uniform(-1, 1);
        VectorXd w(20);
        for (int i = 0; i < 20; ++i) w[i] = rng.uniform(0.5, 2.0);
        auto gram = [&](const VectorXd& v) -> VectorXd { return w.asDiagonal() * v; };
        PodResult p = pod(S, 0.0, gram);
        MatrixXd I = p.modes.transpose() * (w.asDiagonal() * p.modes);
        CHECK((I - MatrixXd::Identity(p.count, p.count)).norm() < 1e-10);
        // reconstruction from coords
        MatrixXd recon = p.modes * p.coords;
        CHECK((recon - S).norm() < 1e-10 * S.norm());
    }
}

TEST_CASE("discrete Gram matrices") {
    auto mesh = build_uniform_mesh(10.0, 9, 2);
    auto M = build_l2_gram(*mesh, 1);
    auto G = build_h1br2_gram(*mesh, 1);

    SECTION("L2 Gram integrates polynomials exactly") {
        StateField f(mesh, 1);
        for (int k = 0; k < mesh->n_elements(); ++k)
            for (int i = 0; i < mesh->n_local(); ++i) {
                double x = mesh->lagrange_node(k, i);
                f.coeff(i, k, 0) = x;
            }
        double v = f.coeffs().dot(M * f.coeffs());
        CHECK(v == Catch::Approx(1000.0 / 3.0).epsilon(1e-12));  // int_0^10 x^2
    }

    SECTION("continuous function vanishing at the boundary: ((q,q)) = |q|_H1^2") {
        // q = x (10 - x): jumps vanish at interior facets and the boundary
        // values are zero, so only the element terms survive.
        StateField f(mesh, 1);
        for (int k = 0; k < mesh->n_elements(); ++k)
            for (int i = 0; i < mesh->n_local(); ++i) {
                double x = mesh->lagrange_node(k, i);
                f.coeff(i, k, 0) = x * (10.0 - x);
            }
        double v = f.coeffs().dot(G * f.coeffs());
        // int (10 - 2x)^2 + int x^2 (10-x)^2 over (0, 10)
        double grad = 1000.0 / 3.0;
        double mass = 100000.0 / 30.0;
        CHECK(v == Catch::Approx(grad + mass).epsilon(1e-10));
    }

    SECTION("H1-BR2 Gram is SPD on random meshes") {
        Rng rng(21);
        for (int trial = 0; trial < 3; ++trial) {
            std::vector<double> nodes{0.0};
            for (int k = 0; k < 12; ++k) nodes.push_back(nodes.back() + rng.uniform(0.05, 1.0));
            auto rm = std::make_shared<mesh1d::Mesh1D>(nodes, 2);
            auto Gr = build_h1br2_gram(*rm, 1);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(MatrixXd(Gr));
            CHECK(es.eigenvalues().minCoeff() > 0.0);
        }
    }
}

TEST_CASE("best-fit coordinates") {
    auto mesh = build_uniform_mesh(10.0, 6, 2);
    auto M = build_l2_gram(*mesh, 3);
    Rng rng(2);
    MatrixXd snaps(3 * mesh->n_local() * mesh->n_elements(), 4);
    for (int i = 0; i < snaps.rows(); ++i)
        for (int j = 0; j < snaps.cols(); ++j) snaps(i, j) = rng.uniform(-1, 1);
    ReducedBasis rb = pod_trial(snaps, mesh, M, 0.0);

    SECTION("members of the span are recovered exactly") {
        VectorXd alpha = VectorXd::LinSpaced(rb.size(), -1.0, 1.0);
        VectorXd q = rb.Z * alpha;
        VectorXd back = best_fit_coords(q, rb, M);
        CHECK((back - alpha).norm() < 1e-10);
    }

    SECTION("residual is Galerkin-orthogonal to the basis") {
        VectorXd q(snaps.rows());
        for (int i = 0; i < q.size(); ++i) q[i] = rng.uniform(-1, 1);
        VectorXd alpha = best_fit_coords(q, rb, M);
        VectorXd resid = q - rb.Z * alpha;
        VectorXd inner = rb.Z.transpose() * (M * resid);
        CHECK(inner.lpNorm<Eigen::Infinity>() < 1e-10);
    }

    SECTION("orthogonal complement maps to zero coordinates") {
        VectorXd q(snaps.rows());
        for (int i = 0; i < q.size(); ++i) q[i] = rng.uniform(-1, 1);
        // project out the span
        q -= rb.Z * best_fit_coords(q, rb, M);
        CHECK(best_fit_coords(q, rb, M).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("trial/test orthonormality on a trained ROM piece") {
    // small snapshot set from actual solves
    euler1d::NozzleProblem prob;
    auto mesh = build_uniform_mesh(10.0, 20, 2);
    auto M = build_l2_gram(*mesh, 3);
    auto G = build_h1br2_gram(*mesh, 3);
    auto basis = std::make_shared<registration::MapBasis>(10, 10.0);

    MatrixXd snaps(3 * mesh->n_local() * mesh->n_elements(), 2);
    std::vector<registration::Map1D> maps;
    std::vector<VectorXd> vecs;
    int c = 0;
    for (double A0 : {1.3, 1.5}) {
        euler1d::NozzleProblem p = prob;
        p.A0 = A0;
        p.p0 = 0.75;
        auto r = euler1d::ptc_solve(mesh, p, euler1d::freestream_field(mesh, p), {});
        REQUIRE(r.converged);
        snaps.col(c++) = r.coeffs;
        maps.push_back(registration::Map1D::identity(basis));
        vecs.push_back(r.coeffs);
    }
    ReducedBasis rb = pod_trial(snaps, mesh, M, 0.0);
    CHECK((rb.Z.transpose() * (M * rb.Z) - MatrixXd::Identity(rb.size(), rb.size())).norm() <
          1e-10);
    CHECK(rb.eigenvalues[0] >= rb.eigenvalues[1]);

    euler1d::NozzleProblem p = prob;
    p.p0 = 0.75;
    p.A0 = 1.4;
    TestSpace ts = build_test_space(rb, vecs, maps, p, G, 2);
    CHECK(ts.size() == 2 * rb.size());
    MatrixXd I = ts.Psi.transpose() * (G * ts.Psi);
    CHECK((I - MatrixXd::Identity(ts.size(), ts.size())).norm() < 1e-10);
}
