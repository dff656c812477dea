#pragma once

// Shared numerical kernels: Gauss-Legendre rules, Legendre series,
// nodal Lagrange reference bases, and a small forward-mode dual type
// used for elemental Jacobian assembly.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace larom {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::Vector2d;

struct GaussRule {
    std::vector<double> points;   // on (-1, 1)
    std::vector<double> weights;  // sum to 2
};

// Nodes of the n-point rule are the roots of P_n, found with Newton's
// method on the three-term recurrence; exact for degree 2n-1.
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    GaussRule rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            if (n == 1) { p1 = x; }
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.points[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

// Polynomial stored as coefficients of Legendre polynomials P_k(s),
// s in [-1,1], affinely identified with a physical interval [a,b].
class LegendreSeries {
public:
    LegendreSeries() : a_(0.0), b_(1.0) {}
    LegendreSeries(VectorXd coeffs, double a, double b)
        : c_(std::move(coeffs)), a_(a), b_(b) {}

    int degree() const { return static_cast<int>(c_.size()) - 1; }
    double lo() const { return a_; }
    double hi() const { return b_; }
    const VectorXd& coeffs() const { return c_; }

    double operator()(double x) const {
        if (c_.size() == 0) return 0.0;
        double s = to_ref(x);
        double p0 = 1.0, p1 = s;
        double acc = c_[0];
        if (c_.size() > 1) acc += c_[1] * s;
        for (int k = 2; k < c_.size(); ++k) {
            double p2 = ((2.0 * k - 1.0) * s * p1 - (k - 1.0) * p0) / k;
            acc += c_[k] * p2;
            p0 = p1;
            p1 = p2;
        }
        return acc;
    }

    // d/ds: P'_j = (2j-1) P_{j-1} + P'_{j-2}, so the derivative coefficient
    // is d_k = (2k+1) * sum of c_j over j > k with j-k odd; then chain rule.
    LegendreSeries derivative() const {
        int n = degree();
        if (n <= 0) return LegendreSeries(VectorXd::Zero(1), a_, b_);
        VectorXd e = VectorXd::Zero(n + 2);
        for (int k = n - 1; k >= 0; --k) e[k] = c_[k + 1] + e[k + 2];
        VectorXd d(n);
        for (int k = 0; k < n; ++k) d[k] = (2.0 * k + 1.0) * e[k];
        double scale = 2.0 / (b_ - a_);
        return LegendreSeries(d * scale, a_, b_);
    }

    LegendreSeries& operator+=(const LegendreSeries& other) {
        if (other.c_.size() > c_.size()) {
            VectorXd grown = VectorXd::Zero(other.c_.size());
            grown.head(c_.size()) = c_;
            c_ = grown;
        }
        c_.head(other.c_.size()) += other.c_;
        return *this;
    }

    LegendreSeries scaled(double s) const { return LegendreSeries(c_ * s, a_, b_); }

private:
    double to_ref(double x) const { return 2.0 * (x - a_) / (b_ - a_) - 1.0; }

    VectorXd c_;
    double a_, b_;
};

// Equispaced nodal Lagrange basis on the unit reference element [0,1].
class LagrangeBasis {
public:
    explicit LagrangeBasis(int degree) : p_(degree) {
        if (degree < 1) throw std::invalid_argument("LagrangeBasis: degree must be >= 1");
        nodes_.resize(p_ + 1);
        for (int i = 0; i <= p_; ++i) nodes_[i] = double(i) / double(p_);
    }

    int degree() const { return p_; }
    int size() const { return p_ + 1; }
    const std::vector<double>& nodes() const { return nodes_; }

    double eval(int i, double t) const {
        double v = 1.0;
        for (int j = 0; j <= p_; ++j) {
            if (j == i) continue;
            v *= (t - nodes_[j]) / (nodes_[i] - nodes_[j]);
        }
        return v;
    }

    double eval_deriv(int i, double t) const {
        double acc = 0.0;
        for (int k = 0; k <= p_; ++k) {
            if (k == i) continue;
            double term = 1.0 / (nodes_[i] - nodes_[k]);
            for (int j = 0; j <= p_; ++j) {
                if (j == i || j == k) continue;
                term *= (t - nodes_[j]) / (nodes_[i] - nodes_[j]);
            }
            acc += term;
        }
        return acc;
    }

    double eval_deriv2(int i, double t) const {
        double acc = 0.0;
        for (int k = 0; k <= p_; ++k) {
            if (k == i) continue;
            for (int m = 0; m <= p_; ++m) {
                if (m == i || m == k) continue;
                double term = 1.0 / ((nodes_[i] - nodes_[k]) * (nodes_[i] - nodes_[m]));
                for (int j = 0; j <= p_; ++j) {
                    if (j == i || j == k || j == m) continue;
                    term *= (t - nodes_[j]) / (nodes_[i] - nodes_[j]);
                }
                acc += term;
            }
        }
        return acc;
    }

private:
    int p_;
    std::vector<double> nodes_;
};

namespace ad {

// Value plus a fixed number of partial derivatives; enough for the
// local element (n_lp*D) and facet (2*n_lp*D) residual kernels.
template <int N>
struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) { d.fill(0.0); }  // NOLINT: implicit by design

    static Dual seed(double value, int slot) {
        Dual r(value);
        r.d[slot] = 1.0;
        return r;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
};

template <int N>
inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { a += b; return a; }
template <int N>
inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { a -= b; return a; }
template <int N>
inline Dual<N> operator-(const Dual<N>& a) {
    Dual<N> r(-a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
}
template <int N>
inline Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
    Dual<N> r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
}
template <int N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
    Dual<N> r(a.v / b.v);
    double inv2 = 1.0 / (b.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
    return r;
}
template <int N> inline Dual<N> operator+(double a, Dual<N> b) { return Dual<N>(a) + b; }
template <int N> inline Dual<N> operator+(Dual<N> a, double b) { return a + Dual<N>(b); }
template <int N> inline Dual<N> operator-(double a, const Dual<N>& b) { return Dual<N>(a) - b; }
template <int N> inline Dual<N> operator-(Dual<N> a, double b) { return a - Dual<N>(b); }
template <int N> inline Dual<N> operator*(double a, const Dual<N>& b) { return Dual<N>(a) * b; }
template <int N> inline Dual<N> operator*(const Dual<N>& a, double b) { return a * Dual<N>(b); }
template <int N> inline Dual<N> operator/(double a, const Dual<N>& b) { return Dual<N>(a) / b; }
template <int N> inline Dual<N> operator/(const Dual<N>& a, double b) { return a / Dual<N>(b); }

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
    Dual<N> r(std::sqrt(a.v));
    double s = 0.5 / r.v;
    for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
    return r;
}
template <int N>
inline Dual<N> abs(const Dual<N>& a) {
    double s = (a.v < 0.0) ? -1.0 : 1.0;
    Dual<N> r(std::abs(a.v));
    for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
    return r;
}
template <int N>
inline Dual<N> pow(const Dual<N>& a, double e) {
    Dual<N> r(std::pow(a.v, e));
    double s = e * std::pow(a.v, e - 1.0);
    for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
    return r;
}
template <int N>
inline Dual<N> max(const Dual<N>& a, const Dual<N>& b) { return (a.v >= b.v) ? a : b; }

inline double value(double x) { return x; }
template <int N>
inline double value(const Dual<N>& x) { return x.v; }

// Double overloads so numeric kernels can be written once against ad::.
inline double sqrt(double x) { return std::sqrt(x); }
inline double abs(double x) { return std::abs(x); }
inline double pow(double x, double e) { return std::pow(x, e); }
inline double max(double a, double b) { return std::max(a, b); }

}  // namespace ad

// Chunked parallel loop; jobs <= 1 runs inline for reproducible timing.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    int workers = std::min<std::size_t>(jobs, count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body]() {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

// Deterministic uniform draws (xorshift-based splitmix64 stream).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed + 0x9E3779B97F4A7C15ULL) {}

    double uniform() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z = z ^ (z >> 31);
        return double(z >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

private:
    std::uint64_t state_;
};

}  // namespace larom
