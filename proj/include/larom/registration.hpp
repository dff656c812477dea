#pragma once

// Optimization-based registration: shock-tracking and template targets,
// the Jacobian and mesh-quality penalties, quasi-Newton minimization,
// parametric registration with warm-start chaining and map compression,
// and the parameter-to-coefficients regressor.

#include "larom/core.hpp"
#include "larom/maps.hpp"
#include "larom/mesh1d.hpp"
#include "larom/metric2d.hpp"
#include "larom/pod.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace larom::registration {

using mesh1d::Mesh1D;
using mesh1d::StateField;

struct RegistrationConfig {
    double xi = 1e-3;          // regularization weight
    double eps = 0.1;          // Jacobian floor
    double c_exp = 0.025 * 0.1;
    double kappa_msh = 10.0;
    double delta = 0.5;        // shock threshold
    double tol_pod = 1e-8;     // map compression tolerance
    double tol_greedy = 1e-4;  // template greedy tolerance
    int max_opt_iters = 500;
    double grad_tol = 1e-8;
    int quad_cells = 20, quad_pts = 5;  // composite rule for penalties
};

// (1/|Omega|) int exp((eps - det grad Phi)/C_exp) dx on the composite
// Gauss grid; the exponent is clamped at 50 to keep line searches finite.
inline double f_jac(const Map1D& map, const RegistrationConfig& cfg) {
    const double L = map.length();
    static thread_local GaussRule rule;
    if (static_cast<int>(rule.points.size()) != cfg.quad_pts) rule = gauss_legendre(cfg.quad_pts);
    double acc = 0.0;
    for (int c = 0; c < cfg.quad_cells; ++c) {
        double a = L * c / cfg.quad_cells, b = L * (c + 1) / cfg.quad_cells;
        for (std::size_t q = 0; q < rule.points.size(); ++q) {
            double x = 0.5 * (a + b) + 0.5 * (b - a) * rule.points[q];
            double w = 0.5 * (b - a) * rule.weights[q];
            double arg = std::min((cfg.eps - map.deriv(x)) / cfg.c_exp, 50.0);
            acc += w * std::exp(arg);
        }
    }
    return acc / L;
}

// Mesh-quality penalty; for 1D meshes with straight elements the shape
// ratio is identically one, so this reduces to the constant |Dhat|
// exp(1 - kappa). Triangle meshes share the metric2d implementation.
inline double f_msh_1d(const RegistrationConfig& cfg) { return std::exp(1.0 - cfg.kappa_msh); }

inline double f_msh(const metric2d::TriMesh& reference,
                    const std::vector<Vector2d>& deformed_vertices,
                    const RegistrationConfig& cfg) {
    return metric2d::mesh_quality(reference, deformed_vertices, cfg.kappa_msh).f_msh;
}

// Mean of the quadrature points whose |d Ma / dx| exceeds delta times the
// maximum; a single-discontinuity locator.
inline double shock_locator(const StateField& mach, double delta) {
    const Mesh1D& m = mach.mesh();
    double max_grad = 0.0;
    std::vector<double> xs, gs;
    for (int k = 0; k < m.n_elements(); ++k) {
        double h = m.elem_size(k);
        for (int q = 0; q < m.n_quad(); ++q) {
            double g = 0.0;
            for (int i = 0; i < m.n_local(); ++i)
                g += mach.coeff(i, k, 0) * m.basis_der(q, i) / h;
            xs.push_back(m.quad_point(k, q));
            gs.push_back(std::abs(g));
            max_grad = std::max(max_grad, std::abs(g));
        }
    }
    if (max_grad <= 0.0)
        throw std::runtime_error("shock_locator: field has no gradient anywhere");
    double acc = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (gs[i] > delta * max_grad) {
            acc += xs[i];
            ++count;
        }
    return acc / count;
}

inline double target_shock(const Map1D& map, double xstar_ref, double xstar_mu) {
    double d = map(xstar_ref) - xstar_mu;
    return d * d;
}

struct RegistrationResult {
    VectorXd a;            // minimizer, full-basis coefficients
    double f_target = 0.0;
    double f_obj = 0.0;
    int iterations = 0;
    bool bijective = true;
};

// Quasi-Newton (BFGS) minimization of
//   f(a) = target(a) + xi (a^T S a + f_jac(a))
// with S the H^2-seminorm Gram. The regularizer gradient is analytic;
// target and penalty gradients use central differences (step 1e-6).
inline RegistrationResult register_single(
    std::shared_ptr<const MapBasis> basis, const std::function<double(const Map1D&)>& target,
    const RegistrationConfig& cfg, const VectorXd& a0) {
    const int m = basis->dim();
    const MatrixXd& S = basis->seminorm_gram();

    auto fval = [&](const VectorXd& a) {
        Map1D map(basis, a);
        return target(map) + cfg.xi * (a.dot(S * a) + f_jac(map, cfg));
    };
    auto grad = [&](const VectorXd& a) {
        VectorXd g = 2.0 * cfg.xi * (S * a);
        const double h = 1e-6;
        for (int i = 0; i < m; ++i) {
            VectorXd ap = a, am = a;
            ap[i] += h;
            am[i] -= h;
            Map1D mp(basis, ap), mm(basis, am);
            double fp = target(mp) + cfg.xi * f_jac(mp, cfg);
            double fm = target(mm) + cfg.xi * f_jac(mm, cfg);
            g[i] += (fp - fm) / (2.0 * h);
        }
        return g;
    };

    VectorXd a = a0;
    double f = fval(a);
    VectorXd g = grad(a);
    MatrixXd H = MatrixXd::Identity(m, m);  // inverse Hessian approximation
    RegistrationResult out;

    for (int it = 0; it < cfg.max_opt_iters; ++it) {
        out.iterations = it;
        if (g.norm() < cfg.grad_tol) break;
        VectorXd d = -(H * g);
        if (d.dot(g) >= 0.0) {  // stale curvature; restart on steepest descent
            H = MatrixXd::Identity(m, m);
            d = -g;
        }
        // Backtracking with cubic interpolation on the Armijo condition.
        double step = 1.0;
        const double slope = g.dot(d);
        double fnew = f;
        VectorXd anew = a;
        bool accepted = false;
        double prev_step = 0.0, prev_f = f;
        for (int ls = 0; ls < 40; ++ls) {
            anew = a + step * d;
            fnew = fval(anew);
            if (fnew <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            double next;
            if (ls == 0) {
                next = -0.5 * slope * step * step / (fnew - f - slope * step);  // quadratic
            } else {
                // Cubic through (0, f), slope, (step, fnew), (prev_step, prev_f).
                double d1 = fnew - f - slope * step;
                double d2 = prev_f - f - slope * prev_step;
                double det = step * step * prev_step * prev_step * (step - prev_step);
                double ca = (prev_step * prev_step * d1 - step * step * d2) / det;
                double cb = (-prev_step * prev_step * prev_step * d1 + step * step * step * d2) /
                            det;
                double disc = cb * cb - 3.0 * ca * slope;
                next = (std::abs(ca) > 1e-300 && disc > 0.0) ? (-cb + std::sqrt(disc)) / (3.0 * ca)
                                                             : 0.5 * step;
            }
            prev_step = step;
            prev_f = fnew;
            step = std::min(std::max(next, 0.1 * step), 0.5 * step);
            if (step < 1e-14) break;
        }
        if (!accepted) break;
        VectorXd gnew = grad(anew);
        VectorXd s = anew - a, y = gnew - g;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            MatrixXd I = MatrixXd::Identity(m, m);
            MatrixXd V = I - (s * y.transpose()) / sy;
            H = V * H * V.transpose() + (s * s.transpose()) / sy;
        }
        a = anew;
        f = fnew;
        g = gnew;
    }

    Map1D final_map(basis, a);
    out.a = a;
    out.f_obj = f;
    out.f_target = target(final_map);
    out.bijective = final_map.bijective(cfg.quad_cells, cfg.quad_pts);
    return out;
}

// -- parameter-space helpers -------------------------------------------------

struct ParameterBox {
    Vector2d lo{0.5, 0.7}, hi{1.5, 0.85};

    Vector2d normalize(const Vector2d& mu) const {
        return Vector2d((mu[0] - lo[0]) / (hi[0] - lo[0]), (mu[1] - lo[1]) / (hi[1] - lo[1]));
    }
};

// Componentwise polynomial regressor on the normalized parameter box:
// tensor-product degree 5 when at least 36 pairs are available, nearest
// neighbor otherwise.
class MapRegressor {
public:
    MapRegressor() = default;

    MapRegressor(const std::vector<Vector2d>& mus, const MatrixXd& targets,
                 const ParameterBox& box)
        : box_(box), train_mu_(mus), train_val_(targets) {
        const int n = static_cast<int>(mus.size());
        const int dim = static_cast<int>(targets.rows());
        degree_ = (n >= 36) ? 5 : -1;  // -1: nearest neighbor
        if (degree_ < 0) return;
        const int nb = (degree_ + 1) * (degree_ + 1);
        MatrixXd A(n, nb);
        for (int r = 0; r < n; ++r) A.row(r) = features(box_.normalize(mus[r])).transpose();
        coeffs_.resize(nb, dim);
        Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
        for (int c = 0; c < dim; ++c) coeffs_.col(c) = qr.solve(targets.row(c).transpose());
    }

    VectorXd operator()(const Vector2d& mu) const {
        if (degree_ < 0) {
            int best = 0;
            double dmin = std::numeric_limits<double>::max();
            Vector2d q = box_.normalize(mu);
            for (std::size_t i = 0; i < train_mu_.size(); ++i) {
                double d = (box_.normalize(train_mu_[i]) - q).squaredNorm();
                if (d < dmin) {
                    dmin = d;
                    best = static_cast<int>(i);
                }
            }
            return train_val_.col(best);
        }
        return coeffs_.transpose() * features(box_.normalize(mu));
    }

    int degree() const { return degree_; }

private:
    VectorXd features(const Vector2d& t) const {
        const int nb = (degree_ + 1) * (degree_ + 1);
        VectorXd phi(nb);
        int idx = 0;
        double xi = 1.0;
        for (int i = 0; i <= degree_; ++i) {
            double yj = 1.0;
            for (int j = 0; j <= degree_; ++j) {
                phi[idx++] = xi * yj;
                yj *= t[1];
            }
            xi *= t[0];
        }
        return phi;
    }

    ParameterBox box_;
    int degree_ = -1;
    std::vector<Vector2d> train_mu_;
    MatrixXd train_val_;  // dim x n
    MatrixXd coeffs_;     // nb x dim
};

inline MapRegressor map_regress(const std::vector<Vector2d>& mus, const MatrixXd& coeff_table,
                                const ParameterBox& box) {
    if (mus.empty()) throw std::invalid_argument("map_regress: need at least one pair");
    return MapRegressor(mus, coeff_table, box);
}

// Parametric map artifact: POD-compressed mapping space W and the
// regressor for the compressed coordinates.
struct ParametricMap {
    std::shared_ptr<const MapBasis> basis;
    MatrixXd W;  // m_hf x m compressed mapping basis
    MapRegressor regressor;
    std::vector<Vector2d> train_mu;
    MatrixXd train_coords;   // m x n_train (compressed, refit)
    std::vector<double> f_target;
    std::vector<bool> registered_ok;

    Map1D map_at(const Vector2d& mu) const {
        if (W.cols() == 0) return Map1D::identity(basis);
        return Map1D(basis, W * regressor(mu));
    }

    Map1D training_map(int idx) const {
        if (W.cols() == 0) return Map1D::identity(basis);
        return Map1D(basis, W * train_coords.col(idx));
    }

    bool is_identity() const { return W.cols() == 0; }

    static ParametricMap identity(std::shared_ptr<const MapBasis> basis) {
        ParametricMap pm;
        pm.basis = std::move(basis);
        pm.W.resize(pm.basis->dim(), 0);
        return pm;
    }
};

struct ParametricRegistrationInput {
    std::vector<Vector2d> train_mu;
    std::vector<double> shock_locations;  // x*_mu per training parameter
    int ref_index = 0;                    // index of the reference parameter
    ParameterBox box;
};

// Registration over the training set for the single-shock target. Basic
// mode processes parameters in nearest-unprocessed order with
// nearest-neighbor warm starts; when warm starts are supplied, parameters
// are processed independently. Maps are POD-compressed and refit.
inline ParametricMap register_parametric(std::shared_ptr<const MapBasis> basis,
                                         const ParametricRegistrationInput& in,
                                         const RegistrationConfig& cfg,
                                         const std::vector<VectorXd>* warm_starts = nullptr,
                                         int jobs = 1) {
    const int n = static_cast<int>(in.train_mu.size());
    if (n == 0) throw std::invalid_argument("register_parametric: empty training set");
    const int mh = basis->dim();
    const double xref = in.shock_locations[in.ref_index];

    std::vector<VectorXd> a_hat(n);
    std::vector<double> ftg(n, 0.0);
    std::vector<bool> ok(n, true);

    auto solve_one = [&](int idx, const VectorXd& a0) {
        auto tgt = [&, idx](const Map1D& map) {
            return target_shock(map, xref, in.shock_locations[idx]);
        };
        RegistrationResult r = register_single(basis, tgt, cfg, a0);
        a_hat[idx] = r.a;
        ftg[idx] = r.f_target;
        ok[idx] = r.bijective;
    };

    if (warm_starts) {
        parallel_for(n, jobs, [&](std::size_t i) { solve_one(static_cast<int>(i), (*warm_starts)[i]); });
    } else {
        // Nearest-unprocessed ordering seeded at the parameter closest to
        // the reference, each warm-started from its nearest processed one.
        std::vector<Vector2d> norm(n);
        for (int i = 0; i < n; ++i) norm[i] = in.box.normalize(in.train_mu[i]);
        std::vector<int> order;
        std::vector<bool> used(n, false);
        Vector2d ref = norm[in.ref_index];
        int first = 0;
        double dmin = std::numeric_limits<double>::max();
        for (int i = 0; i < n; ++i) {
            double d = (norm[i] - ref).squaredNorm();
            if (d < dmin) {
                dmin = d;
                first = i;
            }
        }
        order.push_back(first);
        used[first] = true;
        while (static_cast<int>(order.size()) < n) {
            int best = -1;
            double dbest = std::numeric_limits<double>::max();
            for (int i = 0; i < n; ++i) {
                if (used[i]) continue;
                for (int j : order) {
                    double d = (norm[i] - norm[j]).squaredNorm();
                    if (d < dbest) {
                        dbest = d;
                        best = i;
                    }
                }
            }
            order.push_back(best);
            used[best] = true;
        }
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            int idx = order[pos];
            VectorXd a0 = VectorXd::Zero(mh);
            if (pos > 0) {
                double dbest = std::numeric_limits<double>::max();
                for (std::size_t p2 = 0; p2 < pos; ++p2) {
                    int j = order[p2];
                    if (!ok[j]) continue;
                    double d = (norm[idx] - norm[j]).squaredNorm();
                    if (d < dbest) {
                        dbest = d;
                        a0 = a_hat[j];
                    }
                }
            }
            solve_one(idx, a0);
        }
    }

    int failures = 0;
    for (int i = 0; i < n; ++i)
        if (!ok[i]) ++failures;
    if (failures > 0 && failures * 5 > n)
        throw std::runtime_error("register_parametric: more than 20% of registrations failed");

    // POD-compress the accepted maps and refit coefficients.
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
        if (ok[i]) keep.push_back(i);
    MatrixXd snaps(mh, keep.size());
    for (std::size_t c = 0; c < keep.size(); ++c) snaps.col(c) = a_hat[keep[c]];

    ParametricMap pm;
    pm.basis = basis;
    pm.train_mu.reserve(keep.size());
    pm.f_target.reserve(keep.size());
    pm.registered_ok.assign(n, true);
    for (int i = 0; i < n; ++i) pm.registered_ok[i] = ok[i];

    if (snaps.norm() < 1e-14) {
        pm.W.resize(mh, 0);
        pm.train_coords.resize(0, static_cast<int>(keep.size()));
        for (int idx : keep) {
            pm.train_mu.push_back(in.train_mu[idx]);
            pm.f_target.push_back(ftg[idx]);
        }
        return pm;
    }

    PodResult p = pod_euclidean(snaps, cfg.tol_pod);
    pm.W = p.modes;
    pm.train_coords = p.coords;
    for (int idx : keep) {
        pm.train_mu.push_back(in.train_mu[idx]);
        pm.f_target.push_back(ftg[idx]);
    }
    pm.regressor = map_regress(pm.train_mu, pm.train_coords, in.box);
    return pm;
}

// -- template-space registration (Algorithm-style greedy) --------------------

// Sensors are scalar DG fields on a shared mesh; the template space is kept
// as orthonormal sample vectors on that mesh's quadrature grid.
class TemplateSpace {
public:
    TemplateSpace(mesh1d::MeshPtr mesh) : mesh_(std::move(mesh)) {
        const Mesh1D& m = *mesh_;
        for (int k = 0; k < m.n_elements(); ++k)
            for (int q = 0; q < m.n_quad(); ++q) {
                points_.push_back(m.quad_point(k, q));
                weights_.push_back(m.quad_weight(k, q));
            }
    }

    int size() const { return static_cast<int>(members_.size()); }
    const std::vector<double>& points() const { return points_; }

    double inner(const VectorXd& u, const VectorXd& v) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) acc += weights_[i] * u[i] * v[i];
        return acc;
    }

    VectorXd sample(const std::function<double(double)>& f) const {
        VectorXd v(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i) v[i] = f(points_[i]);
        return v;
    }

    // Gram-Schmidt append; near-dependent members are dropped.
    bool add(const VectorXd& v) {
        VectorXd w = v;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : members_) w -= inner(w, b) * b;
        double nrm = std::sqrt(inner(w, w));
        if (nrm < 1e-10 * std::sqrt(inner(v, v))) return false;
        members_.push_back(w / nrm);
        return true;
    }

    // Squared distance (1/|Omega|) || v - proj v ||^2 in the quadrature L2.
    double misfit(const VectorXd& v) const {
        VectorXd w = v;
        for (const auto& b : members_) w -= inner(w, b) * b;
        double L = mesh_->length();
        return inner(w, w) / L;
    }

private:
    mesh1d::MeshPtr mesh_;
    std::vector<double> points_, weights_;
    std::vector<VectorXd> members_;
};

// Template-space target: L2 misfit of the mapped sensor after projection
// onto the template space plus the shock-anchor term (unit weights).
inline double target_template(const Map1D& map, const StateField& sensor,
                              const TemplateSpace& space, double xstar_ref, double xstar_mu) {
    if (space.size() == 0) throw std::invalid_argument("target_template: empty template space");
    VectorXd mapped = space.sample([&](double x) { return sensor.eval(map(x), 0); });
    return space.misfit(mapped) + target_shock(map, xstar_ref, xstar_mu);
}

struct TemplateGreedyResult {
    TemplateSpace space;
    std::vector<VectorXd> maps;     // per training parameter, full basis
    std::vector<double> f_target;
    std::vector<int> selected;      // template member parameter indices
    bool converged = false;
    int passes = 0;
};

// Greedy enrichment of the template space: register everything, check the
// worst target value, and append the worst parameter's mapped sensor.
inline TemplateGreedyResult greedy_template_registration(
    std::shared_ptr<const MapBasis> basis, const std::vector<Vector2d>& train_mu,
    const std::vector<StateField>& sensors, const std::vector<double>& shock_locations,
    int ref_index, const RegistrationConfig& cfg, const ParameterBox& box, int n_max = 5) {
    const int n = static_cast<int>(train_mu.size());
    TemplateGreedyResult out{TemplateSpace(sensors[ref_index].mesh_ptr()), {}, {}, {}, false, 0};
    out.space.add(out.space.sample([&](double x) { return sensors[ref_index].eval(x, 0); }));
    out.selected.push_back(ref_index);
    out.maps.assign(n, VectorXd::Zero(basis->dim()));
    out.f_target.assign(n, 0.0);
    const double xref = shock_locations[ref_index];
    (void)box;

    for (int pass = 0; pass < n_max; ++pass) {
        out.passes = pass + 1;
        for (int i = 0; i < n; ++i) {
            auto tgt = [&](const Map1D& map) {
                return target_template(map, sensors[i], out.space, xref, shock_locations[i]);
            };
            RegistrationResult r = register_single(basis, tgt, cfg, out.maps[i]);
            out.maps[i] = r.a;
            out.f_target[i] = r.f_target;
        }
        // Compress the map set so later passes start from projected data.
        MatrixXd snaps(basis->dim(), n);
        for (int i = 0; i < n; ++i) snaps.col(i) = out.maps[i];
        if (snaps.norm() > 1e-14) {
            PodResult p = pod_euclidean(snaps, cfg.tol_pod);
            for (int i = 0; i < n; ++i) out.maps[i] = p.modes * p.coords.col(i);
        }
        int worst = 0;
        for (int i = 1; i < n; ++i)
            if (out.f_target[i] > out.f_target[worst]) worst = i;
        if (out.f_target[worst] < cfg.tol_greedy) {
            out.converged = true;
            break;
        }
        Map1D wmap(basis, out.maps[worst]);
        out.space.add(out.space.sample([&](double x) { return sensors[worst].eval(wmap(x), 0); }));
        out.selected.push_back(worst);
    }
    return out;
}

}  // namespace larom::registration
