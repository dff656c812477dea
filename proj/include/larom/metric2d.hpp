#pragma once

// Riemannian-metric toolkit on triangle meshes: metric algebra, lengths and
// volumes, mesh-to-metric extraction, Clement Hessian recovery, the
// multiscale metric, metric intersection, mark-then-refine scaling, and the
// mesh-quality functional. No remesher is embedded; metrics are emitted in
// a text format for external adaptation tools.

#include "larom/core.hpp"

#include <array>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace larom::metric2d {

struct SpdTensor2 {
    double xx = 1.0, xy = 0.0, yy = 1.0;

    double det() const { return xx * yy - xy * xy; }

    // Eigenpairs of the symmetric 2x2 tensor; vectors returned as columns.
    void eigen(double& l1, double& l2, Vector2d& v1, Vector2d& v2) const {
        double tr = xx + yy;
        double disc = std::sqrt(std::max(0.25 * (xx - yy) * (xx - yy) + xy * xy, 0.0));
        l1 = 0.5 * tr + disc;
        l2 = 0.5 * tr - disc;
        if (std::abs(xy) > 1e-300) {
            v1 = Vector2d(l1 - yy, xy).normalized();
        } else {
            v1 = (xx >= yy) ? Vector2d(1, 0) : Vector2d(0, 1);
        }
        v2 = Vector2d(-v1[1], v1[0]);
    }

    bool spd(double tol = 0.0) const { return xx > tol && det() > tol; }

    double quad_form(const Vector2d& d) const {
        return xx * d[0] * d[0] + 2.0 * xy * d[0] * d[1] + yy * d[1] * d[1];
    }

    SpdTensor2 scaled(double s) const { return {s * xx, s * xy, s * yy}; }

    static SpdTensor2 from_eigen(double l1, double l2, const Vector2d& v1) {
        Vector2d v2(-v1[1], v1[0]);
        return {l1 * v1[0] * v1[0] + l2 * v2[0] * v2[0],
                l1 * v1[0] * v1[1] + l2 * v2[0] * v2[1],
                l1 * v1[1] * v1[1] + l2 * v2[1] * v2[1]};
    }
};

struct TriMesh {
    std::vector<Vector2d> vertices;
    std::vector<std::array<int, 3>> triangles;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_triangles() const { return static_cast<int>(triangles.size()); }

    double tri_area(int t) const {
        const auto& tri = triangles[t];
        Vector2d a = vertices[tri[0]], b = vertices[tri[1]], c = vertices[tri[2]];
        return 0.5 * ((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]);
    }

    // Structured triangulation of [0,1]^2, two triangles per cell.
    static TriMesh structured_unit_square(int nx, int ny) {
        TriMesh m;
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                m.vertices.emplace_back(double(i) / nx, double(j) / ny);
        auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                m.triangles.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
                m.triangles.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
            }
        return m;
    }
};

struct MetricField2D {
    TriMesh mesh;
    std::vector<SpdTensor2> tensors;  // one per vertex

    void validate() const {
        if (static_cast<int>(tensors.size()) != mesh.n_vertices())
            throw std::invalid_argument("MetricField2D: tensor count != vertex count");
        for (const auto& t : tensors)
            if (!t.spd()) throw std::invalid_argument("MetricField2D: non-SPD tensor");
    }
};

struct MultiscaleConfig {
    double complexity = 100.0;  // continuous complexity N
    int p_norm = 1;
    double h_min = 1e-4, h_max = 1e2;  // eigenvalue truncation via h = lambda^{-1/2}
};

namespace detail {

inline bool barycentric(const TriMesh& m, int t, const Vector2d& x, std::array<double, 3>& w) {
    const auto& tri = m.triangles[t];
    Vector2d a = m.vertices[tri[0]], b = m.vertices[tri[1]], c = m.vertices[tri[2]];
    double den = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    if (std::abs(den) < 1e-300) return false;
    w[0] = ((b[1] - c[1]) * (x[0] - c[0]) + (c[0] - b[0]) * (x[1] - c[1])) / den;
    w[1] = ((c[1] - a[1]) * (x[0] - c[0]) + (a[0] - c[0]) * (x[1] - c[1])) / den;
    w[2] = 1.0 - w[0] - w[1];
    double tol = -1e-10;
    return w[0] >= tol && w[1] >= tol && w[2] >= tol;
}

inline SpdTensor2 interpolate_tensor(const MetricField2D& f, const Vector2d& x) {
    std::array<double, 3> w;
    for (int t = 0; t < f.mesh.n_triangles(); ++t) {
        if (barycentric(f.mesh, t, x, w)) {
            const auto& tri = f.mesh.triangles[t];
            SpdTensor2 r{0, 0, 0};
            for (int i = 0; i < 3; ++i) {
                r.xx += w[i] * f.tensors[tri[i]].xx;
                r.xy += w[i] * f.tensors[tri[i]].xy;
                r.yy += w[i] * f.tensors[tri[i]].yy;
            }
            return r;
        }
    }
    throw std::out_of_range("metric2d: point outside the mesh");
}

}  // namespace detail

// Metric length of the segment [x, y], 5-point Gauss with linearly
// interpolated vertex tensors.
inline double metric_length(const Vector2d& x, const Vector2d& y, const MetricField2D& field) {
    static const GaussRule rule = gauss_legendre(5);
    Vector2d d = y - x;
    double acc = 0.0;
    for (int q = 0; q < 5; ++q) {
        double t = 0.5 * (rule.points[q] + 1.0);
        SpdTensor2 M = detail::interpolate_tensor(field, x + t * d);
        acc += 0.5 * rule.weights[q] * std::sqrt(std::max(M.quad_form(d), 0.0));
    }
    return acc;
}

// Metric volume of a set of triangles (all by default): per-triangle
// quadrature of sqrt(det M) with linear tensor interpolation.
inline double metric_volume(const MetricField2D& field, const std::vector<int>* tris = nullptr) {
    // Degree-4 rule on the reference triangle (6 points).
    static const double w1 = 0.223381589678011, w2 = 0.109951743655322;
    static const double a1 = 0.445948490915965, a2 = 0.091576213509771;
    static const std::array<std::array<double, 3>, 6> bc = {{{a1, a1, 1 - 2 * a1},
                                                             {a1, 1 - 2 * a1, a1},
                                                             {1 - 2 * a1, a1, a1},
                                                             {a2, a2, 1 - 2 * a2},
                                                             {a2, 1 - 2 * a2, a2},
                                                             {1 - 2 * a2, a2, a2}}};
    static const std::array<double, 6> wq = {w1, w1, w1, w2, w2, w2};
    double acc = 0.0;
    int nt = field.mesh.n_triangles();
    for (int idx = 0; idx < (tris ? static_cast<int>(tris->size()) : nt); ++idx) {
        int t = tris ? (*tris)[idx] : idx;
        const auto& tri = field.mesh.triangles[t];
        double area = std::abs(field.mesh.tri_area(t));
        for (int q = 0; q < 6; ++q) {
            SpdTensor2 M{0, 0, 0};
            for (int i = 0; i < 3; ++i) {
                M.xx += bc[q][i] * field.tensors[tri[i]].xx;
                M.xy += bc[q][i] * field.tensors[tri[i]].xy;
                M.yy += bc[q][i] * field.tensors[tri[i]].yy;
            }
            acc += area * wq[q] * std::sqrt(std::max(M.det(), 0.0));
        }
    }
    return acc;
}

// Metric associated with a triangle: lambda_1 from the longest edge,
// lambda_2 from the opposite vertex's distance to that edge, eigenvectors
// along / normal to the longest edge; satisfies M n_i = lambda_i n_i.
inline SpdTensor2 mesh_to_metric(const Vector2d& a, const Vector2d& b, const Vector2d& c) {
    double area2 = std::abs((b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0]);
    if (area2 < 1e-300) throw std::invalid_argument("mesh_to_metric: degenerate triangle");
    std::array<std::pair<Vector2d, Vector2d>, 3> edges = {{{a, b}, {b, c}, {c, a}}};
    std::array<Vector2d, 3> opposite = {c, a, b};
    int longest = 0;
    double lmax = -1.0;
    for (int e = 0; e < 3; ++e) {
        double len = (edges[e].second - edges[e].first).norm();
        if (len > lmax) {
            lmax = len;
            longest = e;
        }
    }
    Vector2d e1 = (edges[longest].second - edges[longest].first) / lmax;
    // Distance from the opposite vertex to the longest-edge line.
    Vector2d to_op = opposite[longest] - edges[longest].first;
    double dist = std::abs(e1[0] * to_op[1] - e1[1] * to_op[0]);
    double l1 = 1.0 / (lmax * lmax);
    double l2 = 1.0 / (dist * dist);
    return SpdTensor2::from_eigen(l1, l2, e1);
}

inline SpdTensor2 mesh_to_metric(const TriMesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    return mesh_to_metric(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
}

// Two-pass Clement recovery of the Hessian of a P1 scalar field: P0
// gradients area-averaged to vertices, then P0 gradients of those averaged
// again; the result is symmetrized.
inline std::vector<SpdTensor2> hessian_recovery(const TriMesh& mesh,
                                                const std::vector<double>& values,
                                                bool ensure_spd = false) {
    const int nv = mesh.n_vertices(), nt = mesh.n_triangles();
    if (static_cast<int>(values.size()) != nv)
        throw std::invalid_argument("hessian_recovery: value count != vertex count");

    auto tri_gradient = [&](int t, const std::vector<double>& f) {
        const auto& tri = mesh.triangles[t];
        Vector2d a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
        double det = (b - a)[0] * (c - a)[1] - (b - a)[1] * (c - a)[0];
        double fb = f[tri[1]] - f[tri[0]], fc = f[tri[2]] - f[tri[0]];
        return Vector2d((fb * (c - a)[1] - fc * (b - a)[1]) / det,
                        (fc * (b - a)[0] - fb * (c - a)[0]) / det);
    };

    std::vector<double> weight(nv, 0.0);
    std::vector<Vector2d> grad(nv, Vector2d::Zero());
    for (int t = 0; t < nt; ++t) {
        double w = std::abs(mesh.tri_area(t));
        Vector2d g = tri_gradient(t, values);
        for (int i : mesh.triangles[t]) {
            grad[i] += w * g;
            weight[i] += w;
        }
    }
    for (int v = 0; v < nv; ++v) {
        if (weight[v] <= 0.0) throw std::invalid_argument("hessian_recovery: isolated vertex");
        grad[v] /= weight[v];
    }

    std::vector<double> gx(nv), gy(nv);
    for (int v = 0; v < nv; ++v) {
        gx[v] = grad[v][0];
        gy[v] = grad[v][1];
    }
    std::vector<SpdTensor2> hess(nv, SpdTensor2{0, 0, 0});
    std::vector<double> wsum(nv, 0.0);
    for (int t = 0; t < nt; ++t) {
        double w = std::abs(mesh.tri_area(t));
        Vector2d hx = tri_gradient(t, gx);
        Vector2d hy = tri_gradient(t, gy);
        for (int i : mesh.triangles[t]) {
            hess[i].xx += w * hx[0];
            hess[i].yy += w * hy[1];
            hess[i].xy += w * 0.5 * (hx[1] + hy[0]);
            wsum[i] += w;
        }
    }
    for (int v = 0; v < nv; ++v) {
        hess[v].xx /= wsum[v];
        hess[v].xy /= wsum[v];
        hess[v].yy /= wsum[v];
        if (ensure_spd) {
            double l1, l2;
            Vector2d v1, v2;
            hess[v].eigen(l1, l2, v1, v2);
            hess[v] = SpdTensor2::from_eigen(std::abs(l1), std::abs(l2), v1);
        }
    }
    return hess;
}

// |H| through absolute eigenvalues.
inline SpdTensor2 abs_tensor(const SpdTensor2& h) {
    double l1, l2;
    Vector2d v1, v2;
    h.eigen(l1, l2, v1, v2);
    return SpdTensor2::from_eigen(std::abs(l1), std::abs(l2), v1);
}

// Multiscale metric of a per-vertex Hessian field: the L^p-normalized
// Hessian metric with prescribed continuous complexity N, eigenvalues
// truncated to the configured size bounds.
inline MetricField2D multiscale_metric(const TriMesh& mesh, const std::vector<SpdTensor2>& hessian,
                                       const MultiscaleConfig& cfg) {
    const int d = 2;
    const double p = cfg.p_norm;
    const double exponent = -1.0 / (2.0 * p + d);
    MetricField2D out;
    out.mesh = mesh;
    out.tensors.resize(mesh.n_vertices());

    // det|H|^(p/(2p+d)) integrated by vertex-lumped triangle quadrature.
    std::vector<SpdTensor2> absH(hessian.size());
    double hmax_det = 0.0;
    for (std::size_t v = 0; v < hessian.size(); ++v) {
        absH[v] = abs_tensor(hessian[v]);
        hmax_det = std::max(hmax_det, absH[v].det());
    }
    if (hmax_det <= 0.0) {
        // Uniform isotropic fallback of complexity N.
        double area = 0.0;
        for (int t = 0; t < mesh.n_triangles(); ++t) area += std::abs(mesh.tri_area(t));
        double lam = cfg.complexity / area;
        for (auto& t : out.tensors) t = SpdTensor2{lam, 0.0, lam};
        return out;
    }
    // Floor tiny determinants so the local det^exponent stays finite.
    double det_floor = 1e-12 * hmax_det;

    double integral = 0.0;
    for (int t = 0; t < mesh.n_triangles(); ++t) {
        double w = std::abs(mesh.tri_area(t)) / 3.0;
        for (int i : mesh.triangles[t])
            integral += w * std::pow(std::max(absH[i].det(), det_floor), p / (2.0 * p + d));
    }
    double global = std::pow(cfg.complexity / integral, 2.0 / d);

    double lam_min = 1.0 / (cfg.h_max * cfg.h_max);
    double lam_max = 1.0 / (cfg.h_min * cfg.h_min);
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        double dv = std::max(absH[v].det(), det_floor);
        SpdTensor2 m = absH[v].scaled(global * std::pow(dv, exponent));
        double l1, l2;
        Vector2d v1, v2;
        m.eigen(l1, l2, v1, v2);
        l1 = std::min(std::max(l1, lam_min), lam_max);
        l2 = std::min(std::max(l2, lam_min), lam_max);
        out.tensors[v] = SpdTensor2::from_eigen(l1, l2, v1);
    }
    return out;
}

// Metric intersection by simultaneous reduction: the largest ellipsoid
// contained in both unit balls.
inline SpdTensor2 intersect(const SpdTensor2& A, const SpdTensor2& B) {
    if (!A.spd() || !B.spd()) throw std::invalid_argument("intersect: non-SPD input");
    double a1, a2;
    Vector2d u1, u2;
    A.eigen(a1, a2, u1, u2);
    Eigen::Matrix2d Asqrt, Ainvsqrt;
    Asqrt = std::sqrt(a1) * u1 * u1.transpose() + std::sqrt(a2) * u2 * u2.transpose();
    Ainvsqrt = (1.0 / std::sqrt(a1)) * u1 * u1.transpose() +
               (1.0 / std::sqrt(a2)) * u2 * u2.transpose();
    Eigen::Matrix2d Bm;
    Bm << B.xx, B.xy, B.xy, B.yy;
    Eigen::Matrix2d Bt = Ainvsqrt * Bm * Ainvsqrt;
    SpdTensor2 Bts{Bt(0, 0), 0.5 * (Bt(0, 1) + Bt(1, 0)), Bt(1, 1)};
    double b1, b2;
    Vector2d w1, w2;
    Bts.eigen(b1, b2, w1, w2);
    Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
    D(0, 0) = std::max(b1, 1.0);
    D(1, 1) = std::max(b2, 1.0);
    Eigen::Matrix2d W;
    W.col(0) = w1;
    W.col(1) = w2;
    Eigen::Matrix2d M = Asqrt * W * D * W.transpose() * Asqrt;
    return {M(0, 0), 0.5 * (M(0, 1) + M(1, 0)), M(1, 1)};
}

// Left fold of pairwise intersection in input order. The operation is not
// associative; the fold order is part of the contract.
inline MetricField2D parametric_intersection(const std::vector<MetricField2D>& fields) {
    if (fields.empty()) throw std::invalid_argument("parametric_intersection: empty input");
    MetricField2D out = fields.front();
    for (std::size_t f = 1; f < fields.size(); ++f) {
        if (fields[f].mesh.n_vertices() != out.mesh.n_vertices())
            throw std::invalid_argument("parametric_intersection: mesh mismatch");
        for (int v = 0; v < out.mesh.n_vertices(); ++v)
            out.tensors[v] = intersect(out.tensors[v], fields[f].tensors[v]);
    }
    return out;
}

// Mark the top gamma_ref fraction of elements by indicator (ties broken by
// lower index), scale their extracted metrics by 4 (half the local sizes),
// and average to vertices over incident elements.
inline MetricField2D mark_then_refine_metric(const TriMesh& mesh, const VectorXd& indicators,
                                             double gamma_ref) {
    const int nt = mesh.n_triangles(), nv = mesh.n_vertices();
    if (indicators.size() != nt)
        throw std::invalid_argument("mark_then_refine_metric: one indicator per element required");
    if (!(gamma_ref > 0.0 && gamma_ref < 1.0))
        throw std::invalid_argument("mark_then_refine_metric: gamma_ref must be in (0,1)");
    int n_mark = static_cast<int>(std::ceil(gamma_ref * nt));
    std::vector<int> order(nt);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (indicators[a] != indicators[b]) return indicators[a] > indicators[b];
        return a < b;
    });
    std::vector<bool> marked(nt, false);
    for (int i = 0; i < n_mark; ++i) marked[order[i]] = true;

    MetricField2D out;
    out.mesh = mesh;
    out.tensors.assign(nv, SpdTensor2{0, 0, 0});
    std::vector<int> count(nv, 0);
    for (int t = 0; t < nt; ++t) {
        SpdTensor2 m = mesh_to_metric(mesh, t);
        if (marked[t]) m = m.scaled(4.0);
        for (int i : mesh.triangles[t]) {
            out.tensors[i].xx += m.xx;
            out.tensors[i].xy += m.xy;
            out.tensors[i].yy += m.yy;
            ++count[i];
        }
    }
    for (int v = 0; v < nv; ++v) {
        if (count[v] == 0)
            throw std::invalid_argument("mark_then_refine_metric: isolated vertex");
        out.tensors[v].xx /= count[v];
        out.tensors[v].xy /= count[v];
        out.tensors[v].yy /= count[v];
    }
    return out;
}

struct MeshQualityReport {
    double f_msh = 0.0;
    double q_min = 0.0, q_max = 0.0;  // ratios q_k(Phi)/q_k(id)
    bool inverted = false;
};

// Shape-quality penalty of a deformed mesh relative to its reference,
// f_msh = (1/|Omega|) sum_k |D_k| |Dhat| exp(q_k(Phi)/q_k(id) - kappa),
// with q_k the squared scaled Frobenius/Jacobian ratio of the element map.
inline MeshQualityReport mesh_quality(const TriMesh& reference,
                                      const std::vector<Vector2d>& deformed_vertices,
                                      double kappa_msh = 10.0) {
    if (static_cast<int>(deformed_vertices.size()) != reference.n_vertices())
        throw std::invalid_argument("mesh_quality: vertex count mismatch");
    const int d = 2;
    auto qual = [&](const Vector2d& a, const Vector2d& b, const Vector2d& c, bool& inv) {
        Eigen::Matrix2d G;
        G.col(0) = b - a;
        G.col(1) = c - a;
        double det = G.determinant();
        if (det <= 0.0) {
            inv = true;
            return 1e100;
        }
        double fro2 = G.squaredNorm();
        double r = fro2 / std::pow(det, 2.0 / d);
        return (r * r) / (d * d);
    };
    MeshQualityReport rep;
    rep.q_min = 1e300;
    rep.q_max = -1e300;
    double total_area = 0.0, acc = 0.0;
    const double ref_tri_area = 0.5;  // |Dhat|
    for (int t = 0; t < reference.n_triangles(); ++t) {
        const auto& tri = reference.triangles[t];
        bool inv = false;
        double q_id = qual(reference.vertices[tri[0]], reference.vertices[tri[1]],
                           reference.vertices[tri[2]], inv);
        double q_phi = qual(deformed_vertices[tri[0]], deformed_vertices[tri[1]],
                            deformed_vertices[tri[2]], inv);
        double ratio = inv ? 1e100 : q_phi / q_id;
        rep.inverted = rep.inverted || inv;
        rep.q_min = std::min(rep.q_min, ratio);
        rep.q_max = std::max(rep.q_max, ratio);
        double area = std::abs(reference.tri_area(t));
        total_area += area;
        double arg = std::min(ratio - kappa_msh, 230.0);  // exp stays finite
        acc += area * ref_tri_area * std::exp(arg);
    }
    rep.f_msh = acc / total_area;
    return rep;
}

// Edge lengths under the metric; a unit mesh has all of them near 1.
struct UnitMeshReport {
    double min_len = 0.0, max_len = 0.0, mean_len = 0.0;
    int n_edges = 0;
};

inline UnitMeshReport unit_mesh_check(const MetricField2D& field) {
    std::vector<std::pair<int, int>> edges;
    for (const auto& tri : field.mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            int a = tri[e], b = tri[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            edges.emplace_back(a, b);
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    UnitMeshReport rep;
    rep.min_len = 1e300;
    for (const auto& [a, b] : edges) {
        double len = metric_length(field.mesh.vertices[a], field.mesh.vertices[b], field);
        rep.min_len = std::min(rep.min_len, len);
        rep.max_len = std::max(rep.max_len, len);
        rep.mean_len += len;
    }
    rep.n_edges = static_cast<int>(edges.size());
    if (rep.n_edges > 0) rep.mean_len /= rep.n_edges;
    return rep;
}

// -- text I/O ---------------------------------------------------------------

inline void write_metric(const MetricField2D& field, std::ostream& os) {
    os.precision(17);
    for (int v = 0; v < field.mesh.n_vertices(); ++v)
        os << field.mesh.vertices[v][0] << ", " << field.mesh.vertices[v][1] << ", "
           << field.tensors[v].xx << ", " << field.tensors[v].xy << ", " << field.tensors[v].yy
           << "\n";
}

inline void write_tri_mesh(const TriMesh& mesh, std::ostream& os) {
    os << "# dim=2 Nv=" << mesh.n_vertices() << " Nt=" << mesh.n_triangles() << "\n";
    os.precision(17);
    for (const auto& v : mesh.vertices) os << v[0] << " " << v[1] << "\n";
    for (const auto& t : mesh.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
}

inline TriMesh read_tri_mesh(std::istream& is) {
    std::string header;
    std::getline(is, header);
    int nv = -1, nt = -1, dim = -1;
    {
        std::istringstream hs(header);
        std::string tok;
        while (hs >> tok) {
            if (tok.rfind("dim=", 0) == 0) dim = std::stoi(tok.substr(4));
            if (tok.rfind("Nv=", 0) == 0) nv = std::stoi(tok.substr(3));
            if (tok.rfind("Nt=", 0) == 0) nt = std::stoi(tok.substr(3));
        }
    }
    if (dim != 2 || nv < 0 || nt < 0)
        throw std::runtime_error("read_tri_mesh: malformed header (line 1)");
    TriMesh m;
    for (int v = 0; v < nv; ++v) {
        double x, y;
        if (!(is >> x >> y))
            throw std::runtime_error("read_tri_mesh: bad vertex at line " + std::to_string(v + 2));
        m.vertices.emplace_back(x, y);
    }
    for (int t = 0; t < nt; ++t) {
        int a, b, c;
        if (!(is >> a >> b >> c))
            throw std::runtime_error("read_tri_mesh: bad triangle at line " +
                                     std::to_string(nv + t + 2));
        m.triangles.push_back({a, b, c});
    }
    return m;
}

inline std::vector<double> read_vertex_scalar(std::istream& is, int expected) {
    std::vector<double> vals;
    double v;
    while (is >> v) vals.push_back(v);
    if (expected >= 0 && static_cast<int>(vals.size()) != expected)
        throw std::runtime_error("read_vertex_scalar: expected " + std::to_string(expected) +
                                 " values, got " + std::to_string(vals.size()));
    return vals;
}

}  // namespace larom::metric2d
