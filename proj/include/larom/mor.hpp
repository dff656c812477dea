#pragma once

// Projection-based model reduction: discrete L2 and H1-BR2 inner products,
// POD trial spaces, empirical test spaces from Riesz representers of
// Jacobian actions, best-fit coordinates, and the online LSPG Gauss-Newton
// solver operating on the reduced mesh with discretize-then-map geometry.

#include "larom/core.hpp"
#include "larom/euler1d.hpp"
#include "larom/mesh1d.hpp"
#include "larom/pod.hpp"
#include "larom/registration.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace larom::mor {

using euler1d::NozzleProblem;
using mesh1d::Mesh1D;
using mesh1d::MeshPtr;
using mesh1d::StateField;

// Block-diagonal DG mass matrix (the discrete L2 product).
inline Eigen::SparseMatrix<double> build_l2_gram(const Mesh1D& mesh, int n_comp) {
    const int Ne = mesh.n_elements(), nl = mesh.n_local();
    const int n = n_comp * nl * Ne;
    MatrixXd mass_ref = MatrixXd::Zero(nl, nl);
    for (int q = 0; q < mesh.n_quad(); ++q)
        for (int i = 0; i < nl; ++i)
            for (int l = 0; l < nl; ++l)
                mass_ref(i, l) += mesh.ref_quad_weight(q) * mesh.basis_val(q, i) *
                                  mesh.basis_val(q, l);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(std::size_t(Ne) * nl * nl * n_comp);
    for (int k = 0; k < Ne; ++k)
        for (int c = 0; c < n_comp; ++c)
            for (int i = 0; i < nl; ++i)
                for (int l = 0; l < nl; ++l)
                    trips.emplace_back(i + k * nl + c * nl * Ne, l + k * nl + c * nl * Ne,
                                       mesh.elem_size(k) * mass_ref(i, l));
    Eigen::SparseMatrix<double> M(n, n);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

// H1-type test-space Gram with facet consistency/symmetry terms and the
// BR2 lifting penalty, eta (r_j(Jq), r_j(Jv)); eta defaults to d+1 = 2.
inline Eigen::SparseMatrix<double> build_h1br2_gram(const Mesh1D& mesh, int n_comp,
                                                    double eta = 2.0) {
    const int Ne = mesh.n_elements(), nl = mesh.n_local();
    const int n = n_comp * nl * Ne;
    std::vector<Eigen::Triplet<double>> trips;

    MatrixXd mass_ref = MatrixXd::Zero(nl, nl), stiff_ref = MatrixXd::Zero(nl, nl);
    for (int q = 0; q < mesh.n_quad(); ++q)
        for (int i = 0; i < nl; ++i)
            for (int l = 0; l < nl; ++l) {
                mass_ref(i, l) += mesh.ref_quad_weight(q) * mesh.basis_val(q, i) *
                                  mesh.basis_val(q, l);
                stiff_ref(i, l) += mesh.ref_quad_weight(q) * mesh.basis_der(q, i) *
                                   mesh.basis_der(q, l);
            }
    auto gi = [&](int k, int i, int c) { return i + k * nl + c * nl * Ne; };
    for (int k = 0; k < Ne; ++k) {
        double h = mesh.elem_size(k);
        for (int c = 0; c < n_comp; ++c)
            for (int i = 0; i < nl; ++i)
                for (int l = 0; l < nl; ++l)
                    trips.emplace_back(gi(k, i, c), gi(k, l, c),
                                       h * mass_ref(i, l) + stiff_ref(i, l) / h);
    }

    const auto& basis = mesh.basis();
    VectorXd tL(nl), tR(nl), dL(nl), dR(nl);
    for (int i = 0; i < nl; ++i) {
        tL[i] = basis.eval(i, 1.0);
        tR[i] = basis.eval(i, 0.0);
        dL[i] = basis.eval_deriv(i, 1.0);
        dR[i] = basis.eval_deriv(i, 0.0);
    }
    Eigen::LLT<MatrixXd> mass_llt(mass_ref);

    for (int j = 0; j <= Ne; ++j) {
        const bool has_left = j > 0, has_right = j < Ne;
        double hL = has_left ? mesh.elem_size(j - 1) : 0.0;
        double hR = has_right ? mesh.elem_size(j) : 0.0;
        int ndof = (has_left && has_right) ? 2 * nl : nl;
        // Local rows over [left dofs, right dofs] for one component; the
        // positive normal is +1 at interior and right-boundary facets, -1
        // at the left boundary.
        VectorXd jump = VectorXd::Zero(ndof), avg_grad_n = VectorXd::Zero(ndof);
        if (has_left && has_right) {
            jump.head(nl) = tL;
            jump.tail(nl) = -tR;
            avg_grad_n.head(nl) = 0.5 * dL / hL;
            avg_grad_n.tail(nl) = 0.5 * dR / hR;
        } else if (has_right) {  // left boundary: J(v) = {v} = v, n = -1
            jump = tR;
            avg_grad_n = -dR / hR;
        } else {  // right boundary, n = +1
            jump = tL;
            avg_grad_n = dL / hL;
        }
        // BR2 lifting of a facet jump is supported on the adjacent
        // elements; its pairing reduces to the scalar
        //   kappa_j = sum_sides s^2 t^T (h M_ref)^{-1} t,
        // with s the trace-average weight (1/2 interior, 1 boundary),
        // entering as eta * kappa * jump jump^T.
        double kappa = 0.0;
        double avg_w = (has_left && has_right) ? 0.25 : 1.0;
        if (has_left) kappa += avg_w * tL.dot(mass_llt.solve(tL)) / hL;
        if (has_right) kappa += avg_w * tR.dot(mass_llt.solve(tR)) / hR;
        MatrixXd local = -(jump * avg_grad_n.transpose() + avg_grad_n * jump.transpose()) +
                         eta * kappa * (jump * jump.transpose());
        for (int c = 0; c < n_comp; ++c)
            for (int a = 0; a < ndof; ++a)
                for (int b = 0; b < ndof; ++b) {
                    int ka = (has_left && a < nl) ? j - 1 : j;
                    int ia = (has_left && a < nl) ? a : a - (has_left ? nl : 0);
                    int kb = (has_left && b < nl) ? j - 1 : j;
                    int ib = (has_left && b < nl) ? b : b - (has_left ? nl : 0);
                    if (local(a, b) != 0.0)
                        trips.emplace_back(gi(ka, ia, c), gi(kb, ib, c), local(a, b));
                }
    }
    Eigen::SparseMatrix<double> G(n, n);
    G.setFromTriplets(trips.begin(), trips.end());
    return G;
}

struct ReducedBasis {
    MatrixXd Z;             // N_hf x n, orthonormal in the L2 Gram
    VectorXd eigenvalues;   // POD energies (all)
    MeshPtr mesh;

    int size() const { return static_cast<int>(Z.cols()); }
};

// POD of mapped snapshots in the discrete L2 product.
inline ReducedBasis pod_trial(const MatrixXd& snapshots, MeshPtr mesh,
                              const Eigen::SparseMatrix<double>& l2_gram, double tol) {
    PodResult p = pod(snapshots, tol, [&](const VectorXd& v) { return l2_gram * v; });
    return ReducedBasis{p.modes, p.eigenvalues, std::move(mesh)};
}

inline VectorXd best_fit_coords(const VectorXd& q, const ReducedBasis& trial,
                                const Eigen::SparseMatrix<double>& l2_gram) {
    return trial.Z.transpose() * (l2_gram * q);
}

struct TestSpace {
    MatrixXd Psi;  // N_hf x j_es, orthonormal in the H1-BR2 Gram
    int size() const { return static_cast<int>(Psi.cols()); }
};

// Riesz representers of the residual-Jacobian actions on the trial modes,
// compressed by POD in the test Gram to j_es = jes_factor * n modes (an
// energy criterion is available behind use_energy_criterion).
inline TestSpace build_test_space(const ReducedBasis& trial,
                                  const std::vector<VectorXd>& snapshots,
                                  const std::vector<registration::Map1D>& snapshot_maps,
                                  const NozzleProblem& prob,
                                  const Eigen::SparseMatrix<double>& h1_gram, int jes_factor = 2,
                                  bool use_energy_criterion = false, double energy_tol = 1e-10) {
    const Mesh1D& ref_mesh = *trial.mesh;
    const int n = trial.size();
    const int ns = static_cast<int>(snapshots.size());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h1_gram);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("build_test_space: test Gram is not SPD");

    MatrixXd reps(trial.Z.rows(), std::size_t(n) * ns);
    for (int k = 0; k < ns; ++k) {
        MeshPtr dmesh = mesh1d::deform_mesh(ref_mesh, snapshot_maps[k]);
        Eigen::SparseMatrix<double> J = euler1d::assemble_jacobian(*dmesh, prob, snapshots[k]);
        for (int i = 0; i < n; ++i)
            reps.col(std::size_t(k) * n + i) = ldlt.solve(J * trial.Z.col(i));
    }
    PodResult p = pod(reps, 0.0, [&](const VectorXd& v) { return h1_gram * v; });
    int keep;
    if (use_energy_criterion) {
        double total = p.eigenvalues.sum();
        double acc = 0.0;
        keep = 0;
        for (int i = 0; i < p.eigenvalues.size() && i < p.count; ++i) {
            acc += p.eigenvalues[i];
            ++keep;
            if (acc >= (1.0 - energy_tol) * total) break;
        }
    } else {
        keep = std::min(jes_factor * n, p.count);
    }
    return TestSpace{p.modes.leftCols(keep)};
}

// Weights and index sets of the empirical quadrature.
struct EqWeights {
    VectorXd rho_e, rho_f;
    std::vector<int> elems, facets;     // nonzero-weight indices
    std::vector<int> omega_elems;       // sampled elements plus facet neighbors
    bool converged = true;
    double residual = 0.0;

    void extract_sets(int n_elements) {
        elems.clear();
        facets.clear();
        omega_elems.clear();
        std::vector<bool> in_omega(n_elements, false);
        for (int k = 0; k < rho_e.size(); ++k)
            if (rho_e[k] != 0.0) {
                elems.push_back(k);
                in_omega[k] = true;
            }
        for (int j = 0; j < rho_f.size(); ++j)
            if (rho_f[j] != 0.0) {
                facets.push_back(j);
                if (j > 0) in_omega[j - 1] = true;
                if (j < n_elements) in_omega[j] = true;
            }
        for (int k = 0; k < n_elements; ++k)
            if (in_omega[k]) omega_elems.push_back(k);
        if (elems.empty() && facets.empty())
            throw std::runtime_error("EqWeights: empty quadrature support");
    }
};

// Everything the online solver needs for one ROM.
struct RomArtifact {
    MeshPtr mesh;  // reference mesh
    NozzleProblem problem;  // A0/p0 overwritten per query
    ReducedBasis trial;
    TestSpace test;
    EqWeights eq;
    registration::ParametricMap map;
    std::vector<Vector2d> train_mu;
    MatrixXd train_coords;               // best-fit coordinates per training snapshot
    std::vector<MatrixXd> trial_blocks;  // per omega element: (3 nl) x n
    std::vector<MatrixXd> test_blocks;   // per omega element: (3 nl) x j_es
    std::vector<int> omega_index;        // mesh element -> position in blocks (-1 outside)
    // Optional extra initial-guess dataset (accelerated mode).
    std::vector<Vector2d> init_mu;
    MatrixXd init_coords;

    int n() const { return trial.size(); }

    void build_blocks() {
        const Mesh1D& m = *mesh;
        const int nl = m.n_local(), Ne = m.n_elements();
        omega_index.assign(Ne, -1);
        trial_blocks.clear();
        test_blocks.clear();
        for (std::size_t pos = 0; pos < eq.omega_elems.size(); ++pos) {
            int k = eq.omega_elems[pos];
            omega_index[k] = static_cast<int>(pos);
            MatrixXd zb(3 * nl, trial.Z.cols()), pb(3 * nl, test.Psi.cols());
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < nl; ++i) {
                    zb.row(i + c * nl) = trial.Z.row(i + k * nl + c * nl * Ne);
                    pb.row(i + c * nl) = test.Psi.row(i + k * nl + c * nl * Ne);
                }
            trial_blocks.push_back(std::move(zb));
            test_blocks.push_back(std::move(pb));
        }
    }

    VectorXd nearest_init(const Vector2d& mu, const registration::ParameterBox& box) const {
        double dbest = std::numeric_limits<double>::max();
        VectorXd best = VectorXd::Zero(trial.Z.cols());
        Vector2d q = box.normalize(mu);
        for (std::size_t i = 0; i < train_mu.size(); ++i) {
            double d = (box.normalize(train_mu[i]) - q).squaredNorm();
            if (d < dbest) {
                dbest = d;
                best = train_coords.col(i);
            }
        }
        for (std::size_t i = 0; i < init_mu.size(); ++i) {
            double d = (box.normalize(init_mu[i]) - q).squaredNorm();
            if (d < dbest) {
                dbest = d;
                best = init_coords.col(i);
            }
        }
        return best;
    }
};

namespace detail {

// Deformed geometry of the sampled elements only (discretize-then-map).
struct ReducedGeometry {
    std::vector<double> lo, size;  // indexed like omega_elems
};

inline ReducedGeometry deform_reduced(const RomArtifact& rom, const registration::Map1D& map) {
    ReducedGeometry g;
    const Mesh1D& m = *rom.mesh;
    g.lo.resize(rom.eq.omega_elems.size());
    g.size.resize(rom.eq.omega_elems.size());
    for (std::size_t pos = 0; pos < rom.eq.omega_elems.size(); ++pos) {
        int k = rom.eq.omega_elems[pos];
        double a = map(m.elem_lo(k)), b = map(m.elem_hi(k));
        if (!(b > a)) throw std::runtime_error("lspg: map inverted a sampled element");
        g.lo[pos] = a;
        g.size[pos] = b - a;
    }
    return g;
}

}  // namespace detail

struct LspgReport {
    VectorXd alpha;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
};

struct GnmConfig {
    double tol = 1e-10;
    int max_iters = 50;
    double fd_step = 1e-7;
    int max_stalled_searches = 20;
};

// Weighted reduced residual on the sampled elements/facets, nodes deformed
// by the supplied map. Throws InvalidState on inadmissible local states.
inline VectorXd reduced_residual(const RomArtifact& rom, const NozzleProblem& prob,
                                 const detail::ReducedGeometry& geom, const VectorXd& alpha) {
    const Mesh1D& m = *rom.mesh;
    const int nl = m.n_local();
    const int jes = rom.test.size();
    VectorXd out = VectorXd::Zero(jes);

    const auto& omega = rom.eq.omega_elems;
    // Local states and viscosities on all omega elements.
    std::vector<std::array<double, euler1d::kMaxLocal>> dofs(omega.size());
    std::vector<double> nu(omega.size());
    for (std::size_t pos = 0; pos < omega.size(); ++pos) {
        VectorXd local = rom.trial_blocks[pos] * alpha;
        auto& d = dofs[pos];
        d.fill(0.0);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < nl; ++i) d[i + c * nl] = local[i + c * nl];
        nu[pos] = euler1d::detail::element_viscosity(m, prob, geom.size[pos], d,
                                                     omega[pos]);
    }

    std::array<double, euler1d::kMaxLocal> rL{}, rR{};
    // Elemental contributions.
    for (int k : rom.eq.elems) {
        int pos = rom.omega_index[k];
        rL.fill(0.0);
        euler1d::detail::element_kernel(m, prob, geom.lo[pos], geom.size[pos], dofs[pos],
                                        nu[pos], rL, k);
        double w = rom.eq.rho_e[k];
        for (int t = 0; t < jes; ++t) {
            double acc = 0.0;
            for (int a = 0; a < 3 * nl; ++a) acc += rom.test_blocks[pos](a, t) * rL[a];
            out[t] += w * acc;
        }
    }
    // Facet contributions; both neighbors are inside omega by construction.
    for (int j : rom.eq.facets) {
        const bool has_left = j > 0, has_right = j < m.n_elements();
        int posL = has_left ? rom.omega_index[j - 1] : -1;
        int posR = has_right ? rom.omega_index[j] : -1;
        rL.fill(0.0);
        rR.fill(0.0);
        double x = has_left ? geom.lo[posL] + geom.size[posL]
                            : geom.lo[posR];  // deformed facet position
        euler1d::detail::facet_kernel<double>(
            m, prob, x, has_left ? geom.size[posL] : 0.0, has_right ? geom.size[posR] : 0.0,
            has_left ? &dofs[posL] : nullptr, has_right ? &dofs[posR] : nullptr,
            has_left ? nu[posL] : 0.0, has_right ? nu[posR] : 0.0, &rL, &rR, j - 1, j);
        double w = rom.eq.rho_f[j];
        for (int t = 0; t < jes; ++t) {
            double acc = 0.0;
            if (has_left)
                for (int a = 0; a < 3 * nl; ++a) acc += rom.test_blocks[posL](a, t) * rL[a];
            if (has_right)
                for (int a = 0; a < 3 * nl; ++a) acc += rom.test_blocks[posR](a, t) * rR[a];
            out[t] += w * acc;
        }
    }
    return out;
}

// Gauss-Newton with backtracking on the weighted reduced residual; the
// reduced Jacobian columns come from directional finite differences.
inline LspgReport lspg_solve(const Vector2d& mu, const RomArtifact& rom, const VectorXd& alpha0,
                             const GnmConfig& cfg = {}) {
    NozzleProblem prob = rom.problem;
    prob.A0 = mu[0];
    prob.p0 = mu[1];
    registration::Map1D map = rom.map.map_at(mu);
    detail::ReducedGeometry geom = detail::deform_reduced(rom, map);

    auto eval = [&](const VectorXd& a, VectorXd& r) {
        try {
            r = reduced_residual(rom, prob, geom, a);
            return r.allFinite();
        } catch (const euler1d::InvalidState&) {
            return false;
        }
    };

    LspgReport rep;
    rep.alpha = alpha0;
    VectorXd r;
    if (!eval(rep.alpha, r)) {
        rep.stalled = true;
        return rep;
    }
    double rnorm = r.norm();
    const int n = rom.n();

    for (int it = 0; it < cfg.max_iters; ++it) {
        rep.iterations = it;
        if (rnorm <= cfg.tol) {
            rep.converged = true;
            break;
        }
        MatrixXd J(r.size(), n);
        bool jac_ok = true;
        for (int c = 0; c < n && jac_ok; ++c) {
            double h = cfg.fd_step * (1.0 + std::abs(rep.alpha[c]));
            VectorXd ap = rep.alpha, am = rep.alpha;
            ap[c] += h;
            am[c] -= h;
            VectorXd rp, rm;
            if (eval(ap, rp) && eval(am, rm)) {
                J.col(c) = (rp - rm) / (2.0 * h);
            } else if (eval(ap, rp)) {
                J.col(c) = (rp - r) / h;
            } else if (eval(am, rm)) {
                J.col(c) = (r - rm) / h;
            } else {
                jac_ok = false;
            }
        }
        if (!jac_ok) {
            rep.stalled = true;
            break;
        }
        VectorXd delta = J.colPivHouseholderQr().solve(-r);

        // Backtracking (factor 0.5, Armijo constant 1e-4); a line search
        // that fails max_stalled_searches consecutive trials stalls out
        // with the best iterate kept.
        double s = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < cfg.max_stalled_searches + 10; ++bt, s *= 0.5) {
            VectorXd at = rep.alpha + s * delta;
            VectorXd rt;
            if (!eval(at, rt)) continue;
            if (rt.norm() <= (1.0 - 1e-4 * s) * rnorm) {
                rep.alpha = at;
                r = rt;
                rnorm = rt.norm();
                accepted = true;
                break;
            }
            if (bt + 1 >= cfg.max_stalled_searches) break;
        }
        if (!accepted) {
            rep.stalled = true;
            break;
        }
    }
    if (rnorm <= cfg.tol) rep.converged = true;
    rep.residual_norm = rnorm;
    return rep;
}

}  // namespace larom::mor
