#pragma once

// Spectral mapping space for 1D registration: polynomial displacements on
// (0, L) vanishing at both endpoints, orthonormal in the full H^2 inner
// product (second-derivative term plus L^2 term).
//
// Every basis function is stored in factored form  phi(x) = b(x) q(x)  with
// bubble b(x) = (x/L)(1 - x/L), so endpoint values are exactly zero for any
// linear combination.

#include "larom/core.hpp"

#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

namespace larom::registration {

class MapBasis {
public:
    MapBasis(int J, double L) : J_(J), L_(L) {
        if (J < 2) throw std::invalid_argument("MapBasis: J must be >= 2");
        const int m = J - 1;
        quad_ = gauss_legendre(J + 3);
        // Seeds b(x) P_i(2x/L - 1), i = 0..J-2, expressed through their q-part.
        for (int i = 0; i < m; ++i) {
            VectorXd ci = VectorXd::Zero(i + 1);
            ci[i] = 1.0;
            q_.emplace_back(ci, 0.0, L);
        }
        orthonormalize();
        dq_.clear();
        d2q_.clear();
        for (const auto& q : q_) {
            dq_.push_back(q.derivative());
            d2q_.push_back(q.derivative().derivative());
        }
        semi_gram_ = MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            for (int j = i; j < m; ++j) {
                double s = integrate([&](double x) { return phi_d2(i, x) * phi_d2(j, x); });
                semi_gram_(i, j) = semi_gram_(j, i) = s;
            }
        }
    }

    int dim() const { return static_cast<int>(q_.size()); }
    int degree() const { return J_; }
    double length() const { return L_; }
    const MatrixXd& seminorm_gram() const { return semi_gram_; }

    double bubble(double x) const {
        double t = x / L_;
        return t * (1.0 - t);
    }
    double dbubble(double x) const { return (1.0 - 2.0 * x / L_) / L_; }
    double d2bubble() const { return -2.0 / (L_ * L_); }

    double phi(int i, double x) const { return bubble(x) * q_[i](x); }
    double phi_d(int i, double x) const {
        return dbubble(x) * q_[i](x) + bubble(x) * dq_[i](x);
    }
    double phi_d2(int i, double x) const {
        return d2bubble() * q_[i](x) + 2.0 * dbubble(x) * dq_[i](x) + bubble(x) * d2q_[i](x);
    }

    const LegendreSeries& q_at(int i) const { return q_[i]; }

    // Full H^2 inner product of basis members i and j (diagnostic).
    double h2_product(int i, int j) const {
        return integrate([&](double x) {
            return phi_d2(i, x) * phi_d2(j, x) + phi(i, x) * phi(j, x);
        });
    }

    // Quadrature over (0, L), exact for the polynomial degrees in play.
    double integrate(const std::function<double(double)>& g) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < quad_.points.size(); ++k) {
            double x = 0.5 * L_ * (quad_.points[k] + 1.0);
            acc += 0.5 * L_ * quad_.weights[k] * g(x);
        }
        return acc;
    }

private:
    void orthonormalize() {
        const int m = static_cast<int>(q_.size());
        auto h2 = [&](const LegendreSeries& qa, const LegendreSeries& qb) {
            LegendreSeries da = qa.derivative(), d2a = da.derivative();
            LegendreSeries db = qb.derivative(), d2b = db.derivative();
            return integrate([&](double x) {
                double b = bubble(x), b1 = dbubble(x), b2 = d2bubble();
                double fa = b * qa(x);
                double fb = b * qb(x);
                double fa2 = b2 * qa(x) + 2.0 * b1 * da(x) + b * d2a(x);
                double fb2 = b2 * qb(x) + 2.0 * b1 * db(x) + b * d2b(x);
                return fa2 * fb2 + fa * fb;
            });
        };
        // Modified Gram-Schmidt with one reorthogonalization sweep.
        for (int pass = 0; pass < 2; ++pass) {
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < i; ++j) {
                    double r = h2(q_[i], q_[j]);
                    q_[i] += q_[j].scaled(-r);
                }
                double nrm = std::sqrt(h2(q_[i], q_[i]));
                if (nrm < 1e-13) throw std::runtime_error("MapBasis: degenerate basis in Gram-Schmidt");
                q_[i] = q_[i].scaled(1.0 / nrm);
            }
        }
    }

    int J_;
    double L_;
    GaussRule quad_;
    std::vector<LegendreSeries> q_, dq_, d2q_;
    MatrixXd semi_gram_;
};

// A concrete map Phi = id + sum_i a_i phi_i, with a given in the full
// basis. Combines the q-parts into a single series for cheap evaluation.
class Map1D {
public:
    Map1D(std::shared_ptr<const MapBasis> basis, const VectorXd& full_coeffs)
        : basis_(std::move(basis)), a_(full_coeffs) {
        if (a_.size() != basis_->dim())
            throw std::invalid_argument("Map1D: coefficient size mismatch");
        VectorXd zero = VectorXd::Zero(1);
        qsum_ = LegendreSeries(zero, 0.0, basis_->length());
        for (int i = 0; i < a_.size(); ++i) {
            if (a_[i] != 0.0) {
                // accumulate a_i * q_i
                qsum_ += series_of(i).scaled(a_[i]);
            }
        }
        dqsum_ = qsum_.derivative();
    }

    static Map1D identity(std::shared_ptr<const MapBasis> basis) {
        VectorXd zero = VectorXd::Zero(basis->dim());
        return Map1D(std::move(basis), zero);
    }

    const VectorXd& coeffs() const { return a_; }
    const MapBasis& basis() const { return *basis_; }
    double length() const { return basis_->length(); }

    double operator()(double x) const { return x + basis_->bubble(x) * qsum_(x); }

    double deriv(double x) const {
        return 1.0 + basis_->dbubble(x) * qsum_(x) + basis_->bubble(x) * dqsum_(x);
    }

    bool is_identity() const { return a_.isZero(0.0); }

    // Positivity of det(grad Phi) on a quadrature-point grid; the same
    // grid backs the Jacobian penalty.
    bool bijective(int cells = 20, int pts_per_cell = 5) const {
        double L = basis_->length();
        GaussRule g = gauss_legendre(pts_per_cell);
        for (int c = 0; c < cells; ++c) {
            double a = L * c / cells, b = L * (c + 1) / cells;
            for (std::size_t k = 0; k < g.points.size(); ++k) {
                double x = 0.5 * (a + b) + 0.5 * (b - a) * g.points[k];
                if (deriv(x) <= 0.0) return false;
            }
        }
        return true;
    }

    // Monotone inverse by safeguarded Newton on [0, L].
    double inverse(double y) const {
        double L = basis_->length();
        if (y <= 0.0) return 0.0;
        if (y >= L) return L;
        double lo = 0.0, hi = L, x = y;
        for (int it = 0; it < 100; ++it) {
            double f = (*this)(x) - y;
            if (std::abs(f) < 1e-14 * L) return x;
            if (f > 0.0) hi = x; else lo = x;
            double d = deriv(x);
            double step = (d > 1e-12) ? f / d : 0.0;
            double xn = x - step;
            if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
            x = xn;
        }
        return x;
    }

private:
    const LegendreSeries& series_of(int i) const { return basis_->q_at(i); }

    std::shared_ptr<const MapBasis> basis_;
    VectorXd a_;
    LegendreSeries qsum_, dqsum_;
};

}  // namespace larom::registration
