#pragma once

// Offline training: residual-based error indicator, weak-greedy ROM
// construction, strong-greedy parameter selection, the adaptive outer loop
// (snapshots -> mesh adaptation -> registration -> greedy MOR), the
// acceleration strategies, and the evaluation metrics.

#include "larom/core.hpp"
#include "larom/euler1d.hpp"
#include "larom/hyperreduction.hpp"
#include "larom/mesh1d.hpp"
#include "larom/mor.hpp"
#include "larom/registration.hpp"

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace larom::training {

using euler1d::NozzleProblem;
using euler1d::PtcConfig;
using mesh1d::Mesh1D;
using mesh1d::MeshPtr;
using mesh1d::StateField;
using registration::ParameterBox;
using registration::ParametricMap;

struct TrainingConfig {
    int train_grid = 15;   // registration training grid (train_grid^2 points)
    int greedy_grid = 10;  // weak-greedy search grid
    int n0_grid = 3;       // initial sample grid for the greedy
    double tol = 1e-3;     // weak-greedy relative-error tolerance
    int n_max = 30;        // basis cap
    int iterations = 3;    // outer-loop iterations N_it
    double mesh_growth = 1.5;
    bool accelerated = false;
    bool hf_first_iteration = false;  // pure-HF snapshots at k = 1
    double tol_eq = 1e-10;
    int jes_factor = 2;
    bool test_space_energy_criterion = false;
    int n_test = 20;
    std::uint64_t seed = 2024;
    int jobs = 1;
    int n_elements0 = 60;
    int degree = 2;
    double warm_cfl0 = 100.0;
    int coarse_elements = 20;  // cold-start sequencing stage
    int init_dataset_points = 1000;
    NozzleProblem problem;
    PtcConfig ptc;
    registration::RegistrationConfig reg;
    mor::GnmConfig gnm;
    ParameterBox box;
};

inline std::vector<Vector2d> parameter_grid(const ParameterBox& box, int n_per_dim) {
    std::vector<Vector2d> out;
    for (int i = 0; i < n_per_dim; ++i)
        for (int j = 0; j < n_per_dim; ++j) {
            double s = (n_per_dim == 1) ? 0.5 : double(i) / (n_per_dim - 1);
            double t = (n_per_dim == 1) ? 0.5 : double(j) / (n_per_dim - 1);
            out.emplace_back(box.lo[0] + s * (box.hi[0] - box.lo[0]),
                             box.lo[1] + t * (box.hi[1] - box.lo[1]));
        }
    return out;
}

inline std::vector<Vector2d> test_parameters(const ParameterBox& box, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vector2d> out;
    for (int i = 0; i < n; ++i)
        out.emplace_back(rng.uniform(box.lo[0], box.hi[0]), rng.uniform(box.lo[1], box.hi[1]));
    return out;
}

struct HfSolveReport {
    StateField field;
    int iterations = 0;
    bool converged = false;
    double residual_norm = 0.0;
};

// Production high-fidelity solve. Warm starts run PTC directly at the
// requested CFL; cold starts bootstrap on a coarse uniform mesh first
// (free-stream transients on shock-adapted meshes are expensive), then
// continue on the target mesh.
inline HfSolveReport hf_solve(MeshPtr mesh, const NozzleProblem& prob, const TrainingConfig& cfg,
                              const std::optional<StateField>& init = std::nullopt,
                              double cfl0_override = -1.0) {
    PtcConfig ptc = cfg.ptc;
    if (cfl0_override > 0.0) ptc.cfl0 = cfl0_override;
    if (init) {
        auto r = euler1d::ptc_solve(mesh, prob, *init, ptc);
        if (r.converged)
            return {StateField(mesh, 3, r.coeffs), r.iterations, true, r.residual_norm};
        // Fall through to the cold path, counting the effort already spent.
        auto cold = hf_solve(mesh, prob, cfg, std::nullopt);
        cold.iterations += r.iterations;
        return cold;
    }
    int total = 0;
    StateField start = euler1d::freestream_field(mesh, prob);
    if (mesh->n_elements() > cfg.coarse_elements + cfg.coarse_elements / 2) {
        auto coarse = mesh1d::build_uniform_mesh(prob.L, cfg.coarse_elements, mesh->degree());
        auto rc = euler1d::ptc_solve(coarse, prob, euler1d::freestream_field(coarse, prob), ptc);
        total += rc.iterations;
        if (rc.converged)
            start = mesh1d::interpolate_field(StateField(coarse, 3, rc.coeffs), mesh);
    }
    auto r = euler1d::ptc_solve(mesh, prob, start, ptc);
    total += r.iterations;
    if (!r.converged) {
        // Direct free-stream attempt as a last resort.
        auto r2 = euler1d::ptc_solve(mesh, prob, euler1d::freestream_field(mesh, prob), ptc);
        total += r2.iterations;
        if (r2.converged || r2.residual_norm < r.residual_norm) r = std::move(r2);
    }
    return {StateField(mesh, 3, r.coeffs), total, r.converged, r.residual_norm};
}

// Dual norm of the full residual at the reduced state, on the deformed
// geometry of mu: solve G r = R and return sqrt(R^T r).
inline double error_indicator(const VectorXd& reduced_state, const Vector2d& mu,
                              const mor::RomArtifact& rom,
                              const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& gram_ldlt,
                              const NozzleProblem& prob_base) {
    NozzleProblem prob = prob_base;
    prob.A0 = mu[0];
    prob.p0 = mu[1];
    registration::Map1D map = rom.map.map_at(mu);
    MeshPtr dmesh = mesh1d::deform_mesh(*rom.mesh, map);
    VectorXd R;
    try {
        R = euler1d::assemble_residual(*dmesh, prob, reduced_state);
    } catch (const euler1d::InvalidState&) {
        return std::numeric_limits<double>::infinity();
    }
    VectorXd r = gram_ldlt.solve(R);
    double v = R.dot(r);
    return std::sqrt(std::max(v, 0.0));
}

// Strong greedy on coordinate vectors: repeatedly pick the snapshot
// farthest (in Euclidean distance) from the span of the picks so far.
inline std::vector<int> strong_greedy(const MatrixXd& coords, int n0) {
    const int ns = static_cast<int>(coords.cols());
    n0 = std::min(n0, ns);
    std::vector<int> picks;
    MatrixXd Q(coords.rows(), 0);
    for (int step = 0; step < n0; ++step) {
        int best = -1;
        double dbest = -1.0;
        for (int c = 0; c < ns; ++c) {
            VectorXd v = coords.col(c);
            if (Q.cols() > 0) v -= Q * (Q.transpose() * coords.col(c));
            double d = v.norm();
            if (d > dbest + 1e-15) {
                dbest = d;
                best = c;
            }
        }
        if (best < 0) break;
        picks.push_back(best);
        VectorXd v = coords.col(best);
        if (Q.cols() > 0) v -= Q * (Q.transpose() * v);
        if (v.norm() > 1e-12) {
            Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
            Q.col(Q.cols() - 1) = v / v.norm();
        }
    }
    return picks;
}

// Physical-field predictions used for warm starts and initial-guess data.
using Predictor = std::function<std::optional<StateField>(const Vector2d&, MeshPtr)>;

struct GreedyStep {
    Vector2d selected;
    double indicator = 0.0;
    double true_error = 0.0;
    int n = 0;
};

struct GreedyResult {
    mor::RomArtifact rom;
    std::vector<Vector2d> p_star;
    MatrixXd snapshots;  // mapped snapshot coefficients, one column each
    std::vector<GreedyStep> steps;
    bool converged = false;
    int hf_iterations = 0;
    int hf_solves = 0;
    double hf_seconds = 0.0;
    double overhead_seconds = 0.0;
};

namespace detail {

inline double l2_norm(const Eigen::SparseMatrix<double>& M, const VectorXd& v) {
    return std::sqrt(std::max(v.dot(M * v), 0.0));
}

// Algorithm "construction of the ROM": trial POD, empirical test space,
// EQ weights, reduced-mesh blocks, best-fit training coordinates.
inline mor::RomArtifact build_rom(MeshPtr mesh, const ParametricMap& pmap,
                                  const std::vector<Vector2d>& p_star, const MatrixXd& snaps,
                                  const NozzleProblem& prob_base, const TrainingConfig& cfg,
                                  const Eigen::SparseMatrix<double>& M,
                                  const Eigen::SparseMatrix<double>& G) {
    mor::RomArtifact rom;
    rom.mesh = mesh;
    rom.problem = prob_base;
    rom.map = pmap;
    rom.trial = mor::pod_trial(snaps, mesh, M, 0.0);
    rom.train_mu = p_star;
    rom.train_coords.resize(rom.trial.size(), snaps.cols());
    for (int c = 0; c < snaps.cols(); ++c)
        rom.train_coords.col(c) = mor::best_fit_coords(snaps.col(c), rom.trial, M);

    std::vector<VectorXd> snap_vecs;
    std::vector<registration::Map1D> maps;
    for (int c = 0; c < snaps.cols(); ++c) {
        snap_vecs.push_back(snaps.col(c));
        maps.push_back(pmap.map_at(p_star[c]));
    }
    {
        NozzleProblem pk = prob_base;
        std::vector<NozzleProblem> probs;
        for (const auto& mu : p_star) {
            pk.A0 = mu[0];
            pk.p0 = mu[1];
            probs.push_back(pk);
        }
        // Jacobians are taken at each snapshot on its own deformed mesh.
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(G);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("build_rom: H1-BR2 Gram is not SPD");
        const int n = rom.trial.size();
        MatrixXd reps(snaps.rows(), std::size_t(n) * p_star.size());
        for (std::size_t k = 0; k < p_star.size(); ++k) {
            MeshPtr dmesh = mesh1d::deform_mesh(*mesh, maps[k]);
            Eigen::SparseMatrix<double> J =
                euler1d::assemble_jacobian(*dmesh, probs[k], snap_vecs[k]);
            for (int i = 0; i < n; ++i)
                reps.col(k * n + i) = ldlt.solve(J * rom.trial.Z.col(i));
        }
        PodResult p = pod(reps, 0.0, [&](const VectorXd& v) { return G * v; });
        int keep = std::min(cfg.jes_factor * n, p.count);
        if (cfg.test_space_energy_criterion) {
            double total = p.eigenvalues.sum(), acc = 0.0;
            keep = 0;
            for (int i = 0; i < p.count; ++i) {
                acc += p.eigenvalues[i];
                ++keep;
                if (acc >= (1.0 - 1e-10) * total) break;
            }
        }
        rom.test.Psi = p.modes.leftCols(keep);
    }

    hyperreduction::EqSystem sys = hyperreduction::assemble_eq_system(rom, p_star,
                                                                      rom.train_coords);
    hyperreduction::NnlsResult nn = hyperreduction::nnls(sys.G, sys.b, cfg.tol_eq);
    rom.eq = hyperreduction::extract_weights(nn.rho, sys.n_elements, sys.n_facets, nn.converged,
                                             nn.residual);
    rom.build_blocks();
    return rom;
}

// Initial-guess dataset of Eq-style best fits: sample the predicted
// physical field composed with the current map at random points and fit
// the trial coordinates by least squares.
inline void attach_init_dataset(mor::RomArtifact& rom, const std::vector<Vector2d>& p_train,
                                const Predictor& predictor, const TrainingConfig& cfg) {
    const Mesh1D& m = *rom.mesh;
    const int npts = cfg.init_dataset_points;
    Rng rng(cfg.seed ^ 0x9E37uLL);
    std::vector<double> xs(npts);
    for (int s = 0; s < npts; ++s) xs[s] = rng.uniform(m.lo(), m.hi());

    const int n = rom.trial.size();
    const int Ne = m.n_elements(), nl = m.n_local();
    MatrixXd Zeval(3 * npts, n);
    for (int s = 0; s < npts; ++s) {
        int k = m.locate(xs[s]);
        double t = (xs[s] - m.elem_lo(k)) / m.elem_size(k);
        for (int col = 0; col < n; ++col)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = 0; i < nl; ++i)
                    acc += rom.trial.Z(i + k * nl + c * nl * Ne, col) * m.basis().eval(i, t);
                Zeval(s + c * npts, col) = acc;
            }
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Zeval);

    rom.init_mu.clear();
    rom.init_coords.resize(n, p_train.size());
    int kept = 0;
    for (const auto& mu : p_train) {
        auto fieldopt = predictor(mu, nullptr);
        if (!fieldopt) continue;
        registration::Map1D map = rom.map.map_at(mu);
        VectorXd rhs(3 * npts);
        for (int s = 0; s < npts; ++s) {
            double y = map(xs[s]);
            for (int c = 0; c < 3; ++c) rhs[s + c * npts] = fieldopt->eval(y, c);
        }
        rom.init_coords.col(kept) = qr.solve(rhs);
        rom.init_mu.push_back(mu);
        ++kept;
    }
    rom.init_coords.conservativeResize(Eigen::NoChange, kept);
}

}  // namespace detail

// Weak-greedy construction of the ROM over the greedy training grid.
// Seeds are solved first (warm-started via the predictor when supplied);
// each pass rebuilds the ROM, sweeps the indicator, solves the argmax
// parameter, and exits once the relative error at the argmax passes tol.
inline GreedyResult weak_greedy(MeshPtr mesh, const ParametricMap& pmap,
                                const std::vector<Vector2d>& p_gr,
                                const std::vector<Vector2d>& seeds, const TrainingConfig& cfg,
                                const Eigen::SparseMatrix<double>& M,
                                const Eigen::SparseMatrix<double>& G,
                                const Predictor& predictor = nullptr,
                                const std::vector<Vector2d>* init_dataset_mu = nullptr) {
    GreedyResult out;
    NozzleProblem prob = cfg.problem;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram_ldlt(G);
    if (gram_ldlt.info() != Eigen::Success)
        throw std::runtime_error("weak_greedy: H1-BR2 Gram is not SPD");

    auto solve_snapshot = [&](const Vector2d& mu) {
        NozzleProblem p = prob;
        p.A0 = mu[0];
        p.p0 = mu[1];
        registration::Map1D map = pmap.map_at(mu);
        MeshPtr dmesh = mesh1d::deform_mesh(*mesh, map);
        std::optional<StateField> warm;
        double cfl0 = -1.0;
        if (predictor) {
            warm = predictor(mu, dmesh);
            if (warm) cfl0 = cfg.warm_cfl0;
        }
        auto t0 = std::chrono::steady_clock::now();
        HfSolveReport rep = hf_solve(dmesh, p, cfg, warm, cfl0);
        out.hf_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
        out.hf_iterations += rep.iterations;
        ++out.hf_solves;
        if (!rep.converged)
            throw std::runtime_error("weak_greedy: high-fidelity solve failed at mu = (" +
                                     std::to_string(mu[0]) + ", " + std::to_string(mu[1]) + ")");
        // Mapped snapshot: the same coefficients read on the reference mesh.
        return rep.field.coeffs();
    };

    for (const auto& mu : seeds) {
        VectorXd snap = solve_snapshot(mu);
        out.p_star.push_back(mu);
        out.snapshots.conservativeResize(snap.size(), out.snapshots.cols() + 1);
        out.snapshots.col(out.snapshots.cols() - 1) = snap;
    }

    while (true) {
        auto t0 = std::chrono::steady_clock::now();
        out.rom = detail::build_rom(mesh, pmap, out.p_star, out.snapshots, prob, cfg, M, G);
        if (cfg.accelerated && predictor && init_dataset_mu)
            detail::attach_init_dataset(out.rom, *init_dataset_mu, predictor, cfg);

        // Indicator sweep over unexplored parameters.
        int best = -1;
        double dbest = -1.0;
        std::vector<VectorXd> sweep_alpha(p_gr.size());
        std::vector<double> sweep_delta(p_gr.size(), -1.0);
        parallel_for(p_gr.size(), cfg.jobs, [&](std::size_t i) {
            const Vector2d& mu = p_gr[i];
            for (const auto& sel : out.p_star)
                if ((sel - mu).norm() < 1e-12) return;  // already selected
            VectorXd a0 = out.rom.nearest_init(mu, cfg.box);
            mor::LspgReport rep = mor::lspg_solve(mu, out.rom, a0, cfg.gnm);
            sweep_alpha[i] = rep.alpha;
            sweep_delta[i] = error_indicator(out.rom.trial.Z * rep.alpha, mu, out.rom, gram_ldlt,
                                             prob);
        });
        for (std::size_t i = 0; i < p_gr.size(); ++i)
            if (sweep_delta[i] > dbest) {
                dbest = sweep_delta[i];
                best = static_cast<int>(i);
            }
        out.overhead_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (best < 0) break;  // grid exhausted

        const Vector2d mu_star = p_gr[best];
        VectorXd snap = solve_snapshot(mu_star);
        VectorXd diff = snap - out.rom.trial.Z * sweep_alpha[best];
        double relerr = detail::l2_norm(M, diff) / detail::l2_norm(M, snap);
        out.p_star.push_back(mu_star);
        out.snapshots.conservativeResize(Eigen::NoChange, out.snapshots.cols() + 1);
        out.snapshots.col(out.snapshots.cols() - 1) = snap;
        out.steps.push_back({mu_star, dbest, relerr, static_cast<int>(out.p_star.size())});

        if (relerr < cfg.tol || static_cast<int>(out.p_star.size()) >= cfg.n_max) {
            auto t1 = std::chrono::steady_clock::now();
            out.rom = detail::build_rom(mesh, pmap, out.p_star, out.snapshots, prob, cfg, M, G);
            if (cfg.accelerated && predictor && init_dataset_mu)
                detail::attach_init_dataset(out.rom, *init_dataset_mu, predictor, cfg);
            out.overhead_seconds +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
            out.converged = relerr < cfg.tol;
            break;
        }
    }
    return out;
}

struct TestMetrics {
    Vector2d mu;
    double e_hf = 0.0;      // relative L2 error vs the HF reference
    double eta = 0.0;       // LSPG suboptimality index (>= 1); NaN if flagged
    double e_inf = 0.0;     // total-enthalpy error
    double online_seconds = 0.0;
    bool denominator_zero = false;
};

// Out-of-sample evaluation: HF reference on the deformed mesh, ROM
// prediction, and the three error metrics of the run report.
inline std::vector<TestMetrics> evaluate(const mor::RomArtifact& rom,
                                         const std::vector<Vector2d>& test_mu,
                                         const TrainingConfig& cfg) {
    std::vector<TestMetrics> out(test_mu.size());
    parallel_for(test_mu.size(), cfg.jobs, [&](std::size_t t) {
        const Vector2d& mu = test_mu[t];
        TestMetrics& rec = out[t];
        rec.mu = mu;
        NozzleProblem prob = cfg.problem;
        prob.A0 = mu[0];
        prob.p0 = mu[1];
        registration::Map1D map = rom.map.map_at(mu);
        MeshPtr dmesh = mesh1d::deform_mesh(*rom.mesh, map);

        HfSolveReport hf = hf_solve(dmesh, prob, cfg);
        Eigen::SparseMatrix<double> Md = mor::build_l2_gram(*dmesh, 3);

        auto t0 = std::chrono::steady_clock::now();
        mor::LspgReport rep = mor::lspg_solve(mu, rom, rom.nearest_init(mu, cfg.box), cfg.gnm);
        rec.online_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        VectorXd q_rom = rom.trial.Z * rep.alpha;  // physical on the deformed mesh
        VectorXd diff = hf.field.coeffs() - q_rom;
        double qn = detail::l2_norm(Md, hf.field.coeffs());
        rec.e_hf = detail::l2_norm(Md, diff) / qn;

        // Best-fit denominator in the same (deformed) L2 geometry.
        MatrixXd Zd = rom.trial.Z;
        MatrixXd ZtMZ = Zd.transpose() * (Md * Zd);
        VectorXd rhs = Zd.transpose() * (Md * hf.field.coeffs());
        VectorXd alpha_bf = ZtMZ.ldlt().solve(rhs);
        double den = detail::l2_norm(Md, hf.field.coeffs() - Zd * alpha_bf);
        if (den <= 1e-14 * qn) {
            rec.denominator_zero = true;
            rec.eta = std::numeric_limits<double>::quiet_NaN();
        } else {
            rec.eta = detail::l2_norm(Md, diff) / den;
        }

        // Total-enthalpy error against the exact constant.
        StateField rom_field(dmesh, 3, q_rom);
        VectorXd eta_k = euler1d::enthalpy_error_indicator(rom_field, prob);
        double err2 = 0.0;
        for (int k = 0; k < dmesh->n_elements(); ++k) err2 += eta_k[k] * dmesh->elem_size(k);
        double htrue = euler1d::exact_total_enthalpy(prob);
        rec.e_inf = std::sqrt(err2) / (htrue * std::sqrt(dmesh->length()));
    });
    return out;
}

struct IterationReport {
    int iteration = 0;
    int rob_size = 0;
    int mesh_elements = 0;
    std::map<std::string, double> phase_seconds;
    std::vector<TestMetrics> metrics;
    VectorXd pod_eigs_registered, pod_eigs_unregistered;
    std::vector<GreedyStep> greedy_steps;
    int hf_solves = 0, hf_iterations = 0;
};

struct RunReport {
    std::vector<IterationReport> iterations;
    double total_seconds = 0.0;
};

struct AdaptiveResult {
    RunReport report;
    mor::RomArtifact rom;                  // final-iteration ROM
    std::vector<mor::RomArtifact> roms;    // one per iteration
};

// The adaptive outer loop. Per iteration: snapshot generation (bootstrap
// weak-greedy ROM at k = 1 unless hf_first_iteration, previous ROM after),
// de Boor mesh adaptation for k > 1, parametric registration (warm-started
// in accelerated mode), and the weak-greedy ROM build. Accelerated mode
// additionally seeds the greedy by strong-greedy selection, warm-starts the
// PTC solves from ROM predictions, and carries the GNM initial-guess
// dataset.
inline AdaptiveResult adaptive_loop(const TrainingConfig& cfg) {
    using clock = std::chrono::steady_clock;
    auto now = []() { return clock::now(); };
    auto secs = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double>(b - a).count();
    };
    auto t_begin = now();

    AdaptiveResult out;
    const NozzleProblem prob = cfg.problem;
    const std::vector<Vector2d> p_train = parameter_grid(cfg.box, cfg.train_grid);
    const std::vector<Vector2d> p_gr = parameter_grid(cfg.box, cfg.greedy_grid);
    const std::vector<Vector2d> test_mu = test_parameters(cfg.box, cfg.n_test, cfg.seed);

    // Reference parameter: the training point closest to the box center.
    Vector2d center = 0.5 * (cfg.box.lo + cfg.box.hi);
    int ref_index = 0;
    double dref = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < p_train.size(); ++i) {
        double d = (cfg.box.normalize(p_train[i]) - cfg.box.normalize(center)).squaredNorm();
        if (d < dref) {
            dref = d;
            ref_index = static_cast<int>(i);
        }
    }

    MeshPtr mesh = mesh1d::build_uniform_mesh(prob.L, cfg.n_elements0, cfg.degree);
    auto map_basis = std::make_shared<registration::MapBasis>(10, prob.L);
    ParametricMap pmap = ParametricMap::identity(map_basis);
    std::optional<MatrixXd> prev_reg_coeffs;  // registration warm starts

    // Physical predictions of the previous iteration's ROM, evaluable on
    // any requested mesh (used for snapshots and warm starts).
    struct SnapshotSet {
        std::vector<Vector2d> mu;
        std::vector<StateField> physical;  // fields on deformed meshes
        MatrixXd rom_coords;               // generalized coordinates (if ROM-generated)
    };
    SnapshotSet snapshots;

    for (int it = 1; it <= cfg.iterations; ++it) {
        IterationReport rep;
        rep.iteration = it;
        Eigen::SparseMatrix<double> M = mor::build_l2_gram(*mesh, 3);
        Eigen::SparseMatrix<double> G = mor::build_h1br2_gram(*mesh, 3);

        // ---- snapshot generation -----------------------------------------
        auto t0 = now();
        if (it == 1) {
            if (cfg.hf_first_iteration) {
                snapshots.mu = p_train;
                snapshots.physical.clear();
                for (const auto& mu : p_train) {
                    NozzleProblem p = prob;
                    p.A0 = mu[0];
                    p.p0 = mu[1];
                    HfSolveReport r = hf_solve(mesh, p, cfg);
                    snapshots.physical.push_back(r.field);
                    rep.hf_solves += 1;
                    rep.hf_iterations += r.iterations;
                }
            } else {
                // Bootstrap ROM on the identity map, then predict the grid.
                std::vector<Vector2d> seeds = parameter_grid(cfg.box, cfg.n0_grid);
                GreedyResult boot = weak_greedy(mesh, pmap, p_gr, seeds, cfg, M, G);
                rep.hf_solves += boot.hf_solves;
                rep.hf_iterations += boot.hf_iterations;
                snapshots.mu = p_train;
                snapshots.physical.clear();
                snapshots.rom_coords.resize(boot.rom.n(), p_train.size());
                for (std::size_t i = 0; i < p_train.size(); ++i) {
                    mor::LspgReport lr = mor::lspg_solve(
                        p_train[i], boot.rom, boot.rom.nearest_init(p_train[i], cfg.box),
                        cfg.gnm);
                    snapshots.rom_coords.col(i) = lr.alpha;
                    snapshots.physical.emplace_back(mesh, 3, boot.rom.trial.Z * lr.alpha);
                }
            }
        } else {
            // Predictions of the previous ROM on its own deformed meshes.
            const mor::RomArtifact& prev = out.roms.back();
            snapshots.mu = p_train;
            snapshots.physical.clear();
            snapshots.rom_coords.resize(prev.n(), p_train.size());
            for (std::size_t i = 0; i < p_train.size(); ++i) {
                mor::LspgReport lr = mor::lspg_solve(
                    p_train[i], prev, prev.nearest_init(p_train[i], cfg.box), cfg.gnm);
                snapshots.rom_coords.col(i) = lr.alpha;
                registration::Map1D mp = prev.map.map_at(p_train[i]);
                MeshPtr dm = mesh1d::deform_mesh(*prev.mesh, mp);
                snapshots.physical.emplace_back(dm, 3, prev.trial.Z * lr.alpha);
            }
        }
        rep.phase_seconds["snapshot_generation"] = secs(t0, now());

        // ---- mesh adaptation (k > 1) ---------------------------------------
        t0 = now();
        if (it > 1) {
            const mor::RomArtifact& prev = out.roms.back();
            int target_elems = static_cast<int>(std::lround(
                cfg.n_elements0 * std::pow(cfg.mesh_growth, it - 1)));
            // Mapped sensors live on the previous reference mesh.
            std::vector<StateField> sensors;
            for (std::size_t i = 0; i < p_train.size(); ++i) {
                NozzleProblem p = prob;
                p.A0 = p_train[i][0];
                p.p0 = p_train[i][1];
                StateField mapped(prev.mesh, 3, snapshots.physical[i].coeffs());
                sensors.push_back(euler1d::mach_field(mapped, p));
            }
            MeshPtr work = prev.mesh;
            for (int sweep = 0; sweep < 3; ++sweep) {
                mesh1d::DensityFunction d =
                    mesh1d::mach_curvature_density(sensors, target_elems + 1, work.get());
                work = std::make_shared<Mesh1D>(mesh1d::de_boor_adapt(d), cfg.degree);
            }
            mesh = work;
            M = mor::build_l2_gram(*mesh, 3);
            G = mor::build_h1br2_gram(*mesh, 3);
        }
        rep.phase_seconds["mesh_adaptation"] = secs(t0, now());
        rep.mesh_elements = mesh->n_elements();

        // ---- registration ---------------------------------------------------
        t0 = now();
        std::vector<double> shock_locs(p_train.size());
        {
            for (std::size_t i = 0; i < p_train.size(); ++i) {
                NozzleProblem p = prob;
                p.A0 = p_train[i][0];
                p.p0 = p_train[i][1];
                StateField mach = euler1d::mach_field(snapshots.physical[i], p);
                shock_locs[i] = registration::shock_locator(mach, cfg.reg.delta);
            }
        }
        rep.phase_seconds["registration_sensor"] = secs(t0, now());

        t0 = now();
        registration::ParametricRegistrationInput rin;
        rin.train_mu = p_train;
        rin.shock_locations = shock_locs;
        rin.ref_index = ref_index;
        rin.box = cfg.box;
        std::vector<VectorXd> warm;
        const std::vector<VectorXd>* warm_ptr = nullptr;
        if (cfg.accelerated && prev_reg_coeffs) {
            for (int c = 0; c < prev_reg_coeffs->cols(); ++c) warm.push_back(prev_reg_coeffs->col(c));
            warm_ptr = &warm;
        }
        pmap = registration::register_parametric(map_basis, rin, cfg.reg, warm_ptr, cfg.jobs);
        {
            MatrixXd full(map_basis->dim(), pmap.train_coords.cols());
            for (int c = 0; c < pmap.train_coords.cols(); ++c)
                full.col(c) = pmap.W * pmap.train_coords.col(c);
            prev_reg_coeffs = full;
        }
        rep.phase_seconds["registration_optimization"] = secs(t0, now());

        // ---- weak greedy ---------------------------------------------------
        t0 = now();
        std::vector<Vector2d> seeds;
        if (cfg.accelerated && snapshots.rom_coords.size() > 0) {
            std::vector<int> picks = strong_greedy(snapshots.rom_coords,
                                                   cfg.n0_grid * cfg.n0_grid);
            for (int idx : picks) seeds.push_back(snapshots.mu[idx]);
        } else {
            seeds = parameter_grid(cfg.box, cfg.n0_grid);
        }

        Predictor predictor = nullptr;
        if (cfg.accelerated) {
            const SnapshotSet* snaps = &snapshots;
            predictor = [snaps, &cfg](const Vector2d& mu, MeshPtr target) {
                // Nearest snapshot in the normalized parameter box.
                int best = -1;
                double dbest = std::numeric_limits<double>::max();
                for (std::size_t i = 0; i < snaps->mu.size(); ++i) {
                    double d = (cfg.box.normalize(snaps->mu[i]) - cfg.box.normalize(mu))
                                   .squaredNorm();
                    if (d < dbest) {
                        dbest = d;
                        best = static_cast<int>(i);
                    }
                }
                if (best < 0) return std::optional<StateField>();
                const StateField& src = snaps->physical[best];
                if (!target) return std::optional<StateField>(src);
                StateField onto(target, 3);
                for (int k = 0; k < target->n_elements(); ++k)
                    for (int i = 0; i < target->n_local(); ++i) {
                        double x = target->lagrange_node(k, i);
                        x = std::min(std::max(x, src.mesh().lo()), src.mesh().hi());
                        for (int c = 0; c < 3; ++c) onto.coeff(i, k, c) = src.eval(x, c);
                    }
                return std::optional<StateField>(std::move(onto));
            };
        }

        GreedyResult greedy = weak_greedy(mesh, pmap, p_gr, seeds, cfg, M, G, predictor,
                                          cfg.accelerated ? &p_train : nullptr);
        rep.hf_solves += greedy.hf_solves;
        rep.hf_iterations += greedy.hf_iterations;
        rep.greedy_steps = greedy.steps;
        rep.phase_seconds["greedy_hf"] = greedy.hf_seconds;
        rep.phase_seconds["greedy_overhead"] = greedy.overhead_seconds;
        rep.phase_seconds["greedy_total"] = secs(t0, now());
        rep.rob_size = greedy.rom.n();

        // ---- POD decay bookkeeping (registered vs unregistered) ------------
        {
            MatrixXd unreg(greedy.snapshots.rows(), snapshots.physical.size());
            MatrixXd reg(greedy.snapshots.rows(), snapshots.physical.size());
            for (std::size_t i = 0; i < snapshots.physical.size(); ++i) {
                const StateField& phys = snapshots.physical[i];
                StateField u = mesh1d::interpolate_field(phys, mesh);
                unreg.col(i) = u.coeffs();
                registration::Map1D mp = pmap.map_at(snapshots.mu[i]);
                StateField r = mesh1d::compose_with_map(phys, mp, mesh1d::MapDirection::forward,
                                                        mesh);
                reg.col(i) = r.coeffs();
            }
            auto eigs = [&](const MatrixXd& S) {
                PodResult p = pod(S, 0.0, [&](const VectorXd& v) { return M * v; });
                return p.eigenvalues;
            };
            rep.pod_eigs_registered = eigs(reg);
            rep.pod_eigs_unregistered = eigs(unreg);
        }

        // ---- evaluation -----------------------------------------------------
        t0 = now();
        rep.metrics = evaluate(greedy.rom, test_mu, cfg);
        rep.phase_seconds["evaluation"] = secs(t0, now());

        out.roms.push_back(greedy.rom);
        out.report.iterations.push_back(std::move(rep));
    }
    out.rom = out.roms.back();
    out.report.total_seconds = secs(t_begin, now());
    return out;
}

}  // namespace larom::training
