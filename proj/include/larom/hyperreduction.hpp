#pragma once

// Empirical-quadrature hyper-reduction: assembly of the constraint system
// (constant-function rows plus manifold-accuracy rows at the training
// coordinates) and its sparse non-negative least-squares solution.

#include "larom/core.hpp"
#include "larom/euler1d.hpp"
#include "larom/mesh1d.hpp"
#include "larom/mor.hpp"
#include "larom/registration.hpp"

#include <stdexcept>
#include <vector>

namespace larom::hyperreduction {

using euler1d::NozzleProblem;
using mesh1d::Mesh1D;

struct EqSystem {
    MatrixXd G;  // rows x (N_e + N_f); columns ordered elements then facets
    VectorXd b;  // exact all-ones image, row by row
    int n_elements = 0, n_facets = 0;
};

// One accuracy row per (training parameter, test function): entry k is the
// elemental residual of the best-fit reduced state against that test
// function, entry N_e + j the facet residual; b is the full-weight row sum,
// so rho = 1 reproduces b exactly. Two extra rows carry the
// constant-function constraint, scaled to O(1) by the total measures.
inline EqSystem assemble_eq_system(const mor::RomArtifact& rom,
                                   const std::vector<Vector2d>& train_mu,
                                   const MatrixXd& train_coords) {
    const Mesh1D& m = *rom.mesh;
    const int Ne = m.n_elements(), Nf = m.n_facets(), nl = m.n_local();
    const int jes = rom.test.size();
    const int ntrain = static_cast<int>(train_mu.size());
    const int cols = Ne + Nf;

    EqSystem sys;
    sys.n_elements = Ne;
    sys.n_facets = Nf;
    sys.G = MatrixXd::Zero(2 + ntrain * jes, cols);
    sys.b = VectorXd::Zero(2 + ntrain * jes);

    // Constant-function rows (reference geometry, Phi = id).
    double omega = m.length(), fsum = Nf;  // unit facet measure in 1D
    for (int k = 0; k < Ne; ++k) sys.G(0, k) = m.elem_size(k) / omega;
    for (int j = 0; j < Nf; ++j) sys.G(1, Ne + j) = 1.0 / fsum;
    sys.b[0] = 1.0;
    sys.b[1] = 1.0;

    std::array<double, euler1d::kMaxLocal> dofsL{}, dofsR{}, rL{}, rR{};
    for (int t = 0; t < ntrain; ++t) {
        NozzleProblem prob = rom.problem;
        prob.A0 = train_mu[t][0];
        prob.p0 = train_mu[t][1];
        registration::Map1D map = rom.map.map_at(train_mu[t]);
        mesh1d::MeshPtr dmesh = mesh1d::deform_mesh(m, map);
        VectorXd state = rom.trial.Z * train_coords.col(t);
        std::vector<double> nu = euler1d::artificial_viscosity(*dmesh, prob, state);

        auto test_dot = [&](int k, const std::array<double, euler1d::kMaxLocal>& r, int i) {
            double acc = 0.0;
            for (int c = 0; c < 3; ++c)
                for (int a = 0; a < nl; ++a)
                    acc += rom.test.Psi(a + k * nl + c * nl * Ne, i) * r[a + c * nl];
            return acc;
        };

        const int row0 = 2 + t * jes;
        for (int k = 0; k < Ne; ++k) {
            euler1d::detail::load_local<double>(state, *dmesh, k, 0, false, dofsL);
            rL.fill(0.0);
            euler1d::detail::element_kernel(*dmesh, prob, dmesh->elem_lo(k), dmesh->elem_size(k),
                                            dofsL, nu[k], rL, k);
            for (int i = 0; i < jes; ++i) sys.G(row0 + i, k) = test_dot(k, rL, i);
        }
        for (int j = 0; j < Nf; ++j) {
            const bool has_left = j > 0, has_right = j < Ne;
            if (has_left) euler1d::detail::load_local<double>(state, *dmesh, j - 1, 0, false, dofsL);
            if (has_right) euler1d::detail::load_local<double>(state, *dmesh, j, 0, false, dofsR);
            rL.fill(0.0);
            rR.fill(0.0);
            euler1d::detail::facet_kernel<double>(
                *dmesh, prob, dmesh->nodes()[j], has_left ? dmesh->elem_size(j - 1) : 0.0,
                has_right ? dmesh->elem_size(j) : 0.0, has_left ? &dofsL : nullptr,
                has_right ? &dofsR : nullptr, has_left ? nu[j - 1] : 0.0,
                has_right ? nu[j] : 0.0, &rL, &rR, j - 1, j);
            for (int i = 0; i < jes; ++i) {
                double acc = 0.0;
                if (has_left) acc += test_dot(j - 1, rL, i);
                if (has_right) acc += test_dot(j, rR, i);
                sys.G(row0 + i, Ne + j) = acc;
            }
        }
    }
    for (int r = 0; r < sys.G.rows(); ++r)
        if (r >= 2) sys.b[r] = sys.G.row(r).sum();
    return sys;
}

struct NnlsResult {
    VectorXd rho;
    double residual = 0.0;
    bool converged = false;
    int support = 0;
};

// Lawson-Hanson active-set NNLS, terminated when || G rho - b || drops to
// tol_rel * || b ||. Normal equations are precomputed once; the passive
// least-squares subproblems use LDLT on the corresponding subblocks.
inline NnlsResult nnls(const MatrixXd& G, const VectorXd& b, double tol_rel) {
    if (!(tol_rel > 0.0)) throw std::invalid_argument("nnls: tolerance must be positive");
    const int ncols = static_cast<int>(G.cols());
    const double bnorm = b.norm();
    const double delta = tol_rel * bnorm;

    MatrixXd GtG = G.transpose() * G;
    VectorXd Gtb = G.transpose() * b;

    VectorXd rho = VectorXd::Zero(ncols);
    std::vector<bool> passive(ncols, false);
    std::vector<int> pset;
    NnlsResult out;

    const int max_outer = 10 * ncols;
    double resid = bnorm;
    int outer = 0;
    for (; outer < max_outer; ++outer) {
        if (resid <= delta) {
            out.converged = true;
            break;
        }
        // Most violated dual among the active columns.
        VectorXd w = Gtb - GtG * rho;
        int best = -1;
        double wmax = 0.0;
        for (int c = 0; c < ncols; ++c) {
            if (passive[c]) continue;
            if (w[c] > wmax) {
                wmax = w[c];
                best = c;
            }
        }
        if (best < 0 || wmax <= 1e-14 * (1.0 + Gtb.cwiseAbs().maxCoeff())) break;  // KKT point
        passive[best] = true;
        pset.push_back(best);

        for (int inner = 0; inner < ncols + 1; ++inner) {
            const int np = static_cast<int>(pset.size());
            MatrixXd A(np, np);
            VectorXd rhs(np);
            for (int a = 0; a < np; ++a) {
                rhs[a] = Gtb[pset[a]];
                for (int bcol = 0; bcol < np; ++bcol) A(a, bcol) = GtG(pset[a], pset[bcol]);
            }
            VectorXd z = A.ldlt().solve(rhs);
            bool feasible = true;
            for (int a = 0; a < np; ++a)
                if (z[a] <= 0.0) feasible = false;
            if (feasible) {
                for (int a = 0; a < np; ++a) rho[pset[a]] = z[a];
                break;
            }
            // Step to the feasibility boundary and drop zeroed columns.
            double alpha = 1.0;
            for (int a = 0; a < np; ++a)
                if (z[a] <= 0.0) {
                    double r0 = rho[pset[a]];
                    if (r0 - z[a] > 0.0) alpha = std::min(alpha, r0 / (r0 - z[a]));
                }
            for (int a = 0; a < np; ++a)
                rho[pset[a]] += alpha * (z[a] - rho[pset[a]]);
            std::vector<int> keep;
            for (int a = 0; a < np; ++a) {
                if (rho[pset[a]] > 1e-14) {
                    keep.push_back(pset[a]);
                } else {
                    rho[pset[a]] = 0.0;
                    passive[pset[a]] = false;
                }
            }
            pset = keep;
            if (pset.empty()) break;
        }
        resid = (G * rho - b).norm();
    }
    out.rho = rho;
    out.residual = (G * rho - b).norm();
    if (out.residual <= delta) out.converged = true;
    for (int c = 0; c < ncols; ++c)
        if (rho[c] != 0.0) ++out.support;
    return out;
}

// Split the stacked weight vector and extract the reduced-mesh index sets.
inline mor::EqWeights extract_weights(const VectorXd& rho, int n_elements, int n_facets,
                                      bool converged, double residual) {
    mor::EqWeights w;
    w.rho_e = rho.head(n_elements);
    w.rho_f = rho.tail(n_facets);
    w.converged = converged;
    w.residual = residual;
    w.extract_sets(n_elements);
    return w;
}

inline mor::EqWeights all_ones_weights(int n_elements, int n_facets) {
    mor::EqWeights w;
    w.rho_e = VectorXd::Ones(n_elements);
    w.rho_f = VectorXd::Ones(n_facets);
    w.extract_sets(n_elements);
    return w;
}

}  // namespace larom::hyperreduction
