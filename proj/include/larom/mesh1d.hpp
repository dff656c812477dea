#pragma once

// One-dimensional DG meshes, reference-element data, field interpolation
// between meshes, and r-adaptation by equidistribution (de Boor).

#include "larom/core.hpp"
#include "larom/maps.hpp"

#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace larom::mesh1d {

// Straight elements between consecutive nodes; element k spans nodes
// k..k+1. Reference-basis values at the quadrature points are tabulated
// once. Immutable after construction.
class Mesh1D {
public:
    Mesh1D(std::vector<double> nodes, int degree, int quad_points = -1)
        : nodes_(std::move(nodes)), basis_(degree) {
        if (nodes_.size() < 2) throw std::invalid_argument("Mesh1D: need at least 2 nodes");
        for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
            if (!(nodes_[i] < nodes_[i + 1]))
                throw std::invalid_argument("Mesh1D: nodes must be strictly increasing");
        nq_ = (quad_points > 0) ? quad_points : 2 * degree + 1;
        rule_ = gauss_legendre(nq_);
        ref_points_.resize(nq_);
        ref_weights_.resize(nq_);
        for (int q = 0; q < nq_; ++q) {
            ref_points_[q] = 0.5 * (rule_.points[q] + 1.0);
            ref_weights_[q] = 0.5 * rule_.weights[q];
        }
        const int nl = basis_.size();
        val_.resize(nq_, nl);
        der_.resize(nq_, nl);
        der2_.resize(nq_, nl);
        for (int q = 0; q < nq_; ++q)
            for (int i = 0; i < nl; ++i) {
                val_(q, i) = basis_.eval(i, ref_points_[q]);
                der_(q, i) = basis_.eval_deriv(i, ref_points_[q]);
                der2_(q, i) = basis_.eval_deriv2(i, ref_points_[q]);
            }
    }

    int degree() const { return basis_.degree(); }
    int n_local() const { return basis_.size(); }
    int n_elements() const { return static_cast<int>(nodes_.size()) - 1; }
    int n_facets() const { return n_elements() + 1; }
    int n_quad() const { return nq_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const LagrangeBasis& basis() const { return basis_; }
    double length() const { return nodes_.back() - nodes_.front(); }
    double lo() const { return nodes_.front(); }
    double hi() const { return nodes_.back(); }

    double elem_lo(int k) const { return nodes_[k]; }
    double elem_hi(int k) const { return nodes_[k + 1]; }
    double elem_size(int k) const { return nodes_[k + 1] - nodes_[k]; }

    double quad_point(int k, int q) const { return nodes_[k] + elem_size(k) * ref_points_[q]; }
    double quad_weight(int k, int q) const { return elem_size(k) * ref_weights_[q]; }
    double ref_quad_point(int q) const { return ref_points_[q]; }
    double ref_quad_weight(int q) const { return ref_weights_[q]; }

    // Lagrange node i of element k in physical coordinates.
    double lagrange_node(int k, int i) const {
        return nodes_[k] + elem_size(k) * basis_.nodes()[i];
    }

    double basis_val(int q, int i) const { return val_(q, i); }
    double basis_der(int q, int i) const { return der_(q, i); }    // d/dt, reference
    double basis_der2(int q, int i) const { return der2_(q, i); }  // d2/dt2, reference

    // Element containing x with the left-element convention at interior
    // nodes: element k owns (x_k, x_{k+1}].
    int locate(double x) const {
        double L = length();
        if (x < lo() - 1e-12 * L || x > hi() + 1e-12 * L)
            throw std::invalid_argument("Mesh1D::locate: point outside domain");
        if (x <= nodes_[1]) return 0;
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), x);
        int k = static_cast<int>(it - nodes_.begin()) - 1;
        return std::min(std::max(k, 0), n_elements() - 1);
    }

private:
    std::vector<double> nodes_;
    LagrangeBasis basis_;
    int nq_;
    GaussRule rule_;
    std::vector<double> ref_points_, ref_weights_;
    MatrixXd val_, der_, der2_;
};

using MeshPtr = std::shared_ptr<const Mesh1D>;

inline MeshPtr build_uniform_mesh(double L, int n_elements, int degree, int quad_points = -1) {
    if (L <= 0.0) throw std::invalid_argument("build_uniform_mesh: L must be positive");
    if (n_elements < 1) throw std::invalid_argument("build_uniform_mesh: need >= 1 element");
    if (degree < 1) throw std::invalid_argument("build_uniform_mesh: degree must be >= 1");
    std::vector<double> nodes(n_elements + 1);
    for (int i = 0; i <= n_elements; ++i) nodes[i] = L * double(i) / double(n_elements);
    nodes.back() = L;
    return std::make_shared<Mesh1D>(std::move(nodes), degree, quad_points);
}

// Vector-valued DG field; coefficient layout follows
// idx = i + k*n_lp + comp*n_lp*Ne (0-based).
class StateField {
public:
    StateField(MeshPtr mesh, int n_comp)
        : mesh_(std::move(mesh)), ncomp_(n_comp),
          coeffs_(VectorXd::Zero(std::size_t(n_comp) * mesh_->n_local() * mesh_->n_elements())) {}

    StateField(MeshPtr mesh, int n_comp, VectorXd coeffs)
        : mesh_(std::move(mesh)), ncomp_(n_comp), coeffs_(std::move(coeffs)) {
        if (coeffs_.size() != std::size_t(ncomp_) * mesh_->n_local() * mesh_->n_elements())
            throw std::invalid_argument("StateField: coefficient size mismatch");
    }

    const Mesh1D& mesh() const { return *mesh_; }
    MeshPtr mesh_ptr() const { return mesh_; }
    int n_comp() const { return ncomp_; }
    const VectorXd& coeffs() const { return coeffs_; }
    VectorXd& coeffs() { return coeffs_; }

    int index(int i, int k, int comp) const {
        return i + k * mesh_->n_local() + comp * mesh_->n_local() * mesh_->n_elements();
    }
    double coeff(int i, int k, int comp) const { return coeffs_[index(i, k, comp)]; }
    double& coeff(int i, int k, int comp) { return coeffs_[index(i, k, comp)]; }

    // Value of one component inside element k at reference coordinate t.
    double eval_ref(int k, double t, int comp) const {
        const auto& b = mesh_->basis();
        double acc = 0.0;
        for (int i = 0; i < b.size(); ++i) acc += coeff(i, k, comp) * b.eval(i, t);
        return acc;
    }

    double eval(double x, int comp) const {
        int k = mesh_->locate(x);
        double t = (x - mesh_->elem_lo(k)) / mesh_->elem_size(k);
        return eval_ref(k, t, comp);
    }

    double eval_deriv(double x, int comp) const {
        int k = mesh_->locate(x);
        double t = (x - mesh_->elem_lo(k)) / mesh_->elem_size(k);
        const auto& b = mesh_->basis();
        double acc = 0.0;
        for (int i = 0; i < b.size(); ++i) acc += coeff(i, k, comp) * b.eval_deriv(i, t);
        return acc / mesh_->elem_size(k);
    }

private:
    MeshPtr mesh_;
    int ncomp_;
    VectorXd coeffs_;
};

// Piecewise-constant mesh density.
struct DensityFunction {
    std::vector<double> breakpoints;  // size n_cells + 1, strictly increasing
    std::vector<double> values;       // size n_cells, nonnegative
    int target_n = 2;                 // node count of the mesh to build

    double integral() const {
        double acc = 0.0;
        for (std::size_t c = 0; c < values.size(); ++c)
            acc += values[c] * (breakpoints[c + 1] - breakpoints[c]);
        return acc;
    }
};

// Equidistributing nodes for the piecewise-constant density: closed-form
// inversion of the cumulative integral. Re-inversion sweeps stop once the
// node movement drops below 1e-10 * L (immediately after the inversion is
// exact, which the first pass already is for a fixed density).
inline std::vector<double> de_boor_adapt(const DensityFunction& d) {
    const int N = d.target_n;
    if (N < 2) throw std::invalid_argument("de_boor_adapt: target_N must be >= 2");
    for (double v : d.values)
        if (v < 0.0) throw std::invalid_argument("de_boor_adapt: density must be nonnegative");
    const double total = d.integral();
    const double L = d.breakpoints.back() - d.breakpoints.front();
    if (total <= 0.0) throw std::runtime_error("de_boor_adapt: degenerate (zero) density");

    const std::size_t nc = d.values.size();
    std::vector<double> cum(nc + 1, 0.0);
    for (std::size_t c = 0; c < nc; ++c)
        cum[c + 1] = cum[c] + d.values[c] * (d.breakpoints[c + 1] - d.breakpoints[c]);

    auto invert = [&](double target) {
        auto it = std::upper_bound(cum.begin(), cum.end(), target);
        std::size_t c = std::min<std::size_t>(it - cum.begin(), nc) - 1;
        while (c > 0 && d.values[c] <= 0.0 && cum[c] >= target) --c;
        double rem = target - cum[c];
        double v = d.values[c];
        double x = d.breakpoints[c] + (v > 0.0 ? rem / v : 0.0);
        return std::min(std::max(x, d.breakpoints.front()), d.breakpoints.back());
    };

    std::vector<double> nodes(N), prev(N, 0.0);
    for (int sweep = 0; sweep < 10; ++sweep) {
        nodes.front() = d.breakpoints.front();
        nodes.back() = d.breakpoints.back();
        for (int i = 1; i < N - 1; ++i) nodes[i] = invert(total * double(i) / double(N - 1));
        double move = 0.0;
        for (int i = 0; i < N; ++i) move = std::max(move, std::abs(nodes[i] - prev[i]));
        if (move < 1e-10 * L) break;
        prev = nodes;
    }
    return nodes;
}

// Elementwise-analytic second derivative of a scalar DG field at a point;
// no inter-element averaging.
inline double field_second_derivative(const StateField& f, double x) {
    const Mesh1D& m = f.mesh();
    int k = m.locate(x);
    double t = (x - m.elem_lo(k)) / m.elem_size(k);
    double acc = 0.0;
    for (int i = 0; i < m.n_local(); ++i)
        acc += f.coeff(i, k, 0) * m.basis().eval_deriv2(i, t);
    return acc / (m.elem_size(k) * m.elem_size(k));
}

// Normalized density from the second derivative of the Mach number across
// the snapshot set, sampled at the quadrature points of eval_mesh (the
// snapshots' own mesh by default). Cells are the midpoint intervals
// between consecutive quadrature points.
inline DensityFunction mach_curvature_density(const std::vector<StateField>& mach_fields,
                                              int target_n,
                                              const Mesh1D* eval_mesh = nullptr) {
    if (mach_fields.empty()) throw std::invalid_argument("mach_curvature_density: no snapshots");
    if (target_n < 2) throw std::invalid_argument("mach_curvature_density: N must be >= 2");
    const Mesh1D& fmesh = mach_fields.front().mesh();
    for (const auto& f : mach_fields)
        if (f.mesh().nodes() != fmesh.nodes() || f.mesh().degree() != fmesh.degree())
            throw std::invalid_argument("mach_curvature_density: snapshots on different meshes");
    const Mesh1D& mesh = eval_mesh ? *eval_mesh : fmesh;

    const int Ne = mesh.n_elements(), nq = mesh.n_quad();
    std::vector<double> pts;
    pts.reserve(std::size_t(Ne) * nq);
    for (int k = 0; k < Ne; ++k)
        for (int q = 0; q < nq; ++q) pts.push_back(mesh.quad_point(k, q));

    std::vector<double> rho(pts.size(), 0.0);
    for (const auto& f : mach_fields) {
        double sup = 0.0;
        std::vector<double> curv(pts.size(), 0.0);
        for (std::size_t s = 0; s < pts.size(); ++s) {
            curv[s] = std::abs(field_second_derivative(f, pts[s]));
            sup = std::max(sup, curv[s]);
        }
        double floor_mu = 1e-2 * sup;
        for (std::size_t s = 0; s < curv.size(); ++s)
            rho[s] = std::max(rho[s], std::max(curv[s], floor_mu));
    }

    DensityFunction d;
    d.target_n = target_n;
    d.breakpoints.resize(pts.size() + 1);
    d.breakpoints.front() = mesh.lo();
    d.breakpoints.back() = mesh.hi();
    for (std::size_t s = 0; s + 1 < pts.size(); ++s)
        d.breakpoints[s + 1] = 0.5 * (pts[s] + pts[s + 1]);
    d.values.assign(rho.begin(), rho.end());

    double total = d.integral();
    if (total <= 0.0) {
        // All-zero curvature: uniform density (limit of equidistribution).
        std::fill(d.values.begin(), d.values.end(), double(target_n) / mesh.length());
        return d;
    }
    double scale = double(target_n) / total;
    for (double& v : d.values) v *= scale;
    return d;
}

// Point-value interpolation onto the destination's elemental Lagrange
// nodes; exact for continuous global polynomials of degree <= p.
inline StateField interpolate_field(const StateField& src, MeshPtr dst_mesh) {
    const Mesh1D& sm = src.mesh();
    const Mesh1D& dm = *dst_mesh;
    if (std::abs(sm.lo() - dm.lo()) > 1e-12 || std::abs(sm.hi() - dm.hi()) > 1e-12)
        throw std::invalid_argument("interpolate_field: meshes cover different domains");
    StateField out(dst_mesh, src.n_comp());
    for (int k = 0; k < dm.n_elements(); ++k)
        for (int i = 0; i < dm.n_local(); ++i) {
            double x = dm.lagrange_node(k, i);
            for (int c = 0; c < src.n_comp(); ++c) out.coeff(i, k, c) = src.eval(x, c);
        }
    return out;
}

enum class MapDirection { forward, inverse };

// Coefficients on dst_mesh interpolating q(Phi(x)) (forward) or
// q(Phi^{-1}(x)) (inverse) at the destination Lagrange nodes.
inline StateField compose_with_map(const StateField& field, const registration::Map1D& map,
                                   MapDirection dir, MeshPtr dst_mesh = nullptr) {
    if (!map.bijective())
        throw std::runtime_error("compose_with_map: map has nonpositive derivative");
    MeshPtr dst = dst_mesh ? dst_mesh : field.mesh_ptr();
    StateField out(dst, field.n_comp());
    for (int k = 0; k < dst->n_elements(); ++k)
        for (int i = 0; i < dst->n_local(); ++i) {
            double x = dst->lagrange_node(k, i);
            double y = (dir == MapDirection::forward) ? map(x) : map.inverse(x);
            y = std::min(std::max(y, field.mesh().lo()), field.mesh().hi());
            for (int c = 0; c < field.n_comp(); ++c) out.coeff(i, k, c) = field.eval(y, c);
        }
    return out;
}

// Mesh with nodes pushed through the map; connectivity and degree kept.
inline MeshPtr deform_mesh(const Mesh1D& mesh, const registration::Map1D& map) {
    std::vector<double> nodes(mesh.nodes().size());
    for (std::size_t j = 0; j < nodes.size(); ++j) nodes[j] = map(mesh.nodes()[j]);
    nodes.front() = mesh.lo();
    nodes.back() = mesh.hi();
    return std::make_shared<Mesh1D>(std::move(nodes), mesh.degree(), mesh.n_quad());
}

inline void dump_mesh(const Mesh1D& mesh, std::ostream& os) {
    os << "# L=" << mesh.length() << " p=" << mesh.degree() << " Ne=" << mesh.n_elements() << "\n";
    os.precision(17);
    for (double x : mesh.nodes()) os << x << "\n";
}

inline void dump_field(const StateField& f, std::ostream& os) {
    const Mesh1D& m = f.mesh();
    os << "# L=" << m.length() << " p=" << m.degree() << " Ne=" << m.n_elements()
       << " D=" << f.n_comp() << "\n";
    os.precision(17);
    for (int i = 0; i < f.coeffs().size(); ++i) os << f.coeffs()[i] << "\n";
}

}  // namespace larom::mesh1d
