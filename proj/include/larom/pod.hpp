#pragma once

// Proper orthogonal decomposition by the method of snapshots, with the
// energy-based cardinality selection shared by state, map, and test-space
// compression.

#include "larom/core.hpp"

#include <functional>
#include <stdexcept>

namespace larom {

struct PodResult {
    MatrixXd modes;        // columns, orthonormal in the supplied product
    VectorXd eigenvalues;  // all Gramian eigenvalues, descending
    MatrixXd coords;       // modes^T Gram snapshots; one column per snapshot
    int count = 0;         // modes kept by the energy criterion
};

// snapshots: one column per snapshot. apply_gram maps v -> M v for the
// inner product (u, v) = u^T M v; pass the identity for Euclidean POD.
// Keeps the smallest m with sum_{j<=m} lambda_j >= (1 - tol) sum lambda.
inline PodResult pod(const MatrixXd& snapshots, double tol,
                     const std::function<VectorXd(const VectorXd&)>& apply_gram) {
    if (snapshots.cols() < 1) throw std::invalid_argument("pod: need at least one snapshot");
    if (!(tol >= 0.0 && tol < 1.0)) throw std::invalid_argument("pod: tol must be in [0, 1)");
    const int ns = static_cast<int>(snapshots.cols());

    MatrixXd gram_snaps(snapshots.rows(), ns);
    for (int j = 0; j < ns; ++j) gram_snaps.col(j) = apply_gram(snapshots.col(j));
    MatrixXd C = snapshots.transpose() * gram_snaps;
    C = 0.5 * (C + C.transpose());

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
    VectorXd lam = es.eigenvalues().reverse();
    MatrixXd V = es.eigenvectors().rowwise().reverse();

    double total = std::max(lam.sum(), 0.0);
    double floor = std::max(1e-14 * (ns > 0 ? std::max(lam[0], 0.0) : 0.0), 0.0);
    int m = 0;
    double acc = 0.0;
    for (int j = 0; j < ns; ++j) {
        if (lam[j] <= floor) break;
        acc += lam[j];
        ++m;
        if (acc >= (1.0 - tol) * total) break;
    }
    m = std::max(m, 1);
    if (lam[0] <= 0.0) throw std::invalid_argument("pod: zero snapshot set");

    PodResult out;
    out.eigenvalues = lam;
    out.count = m;
    out.modes.resize(snapshots.rows(), m);
    for (int j = 0; j < m; ++j)
        out.modes.col(j) = snapshots * V.col(j) / std::sqrt(lam[j]);
    // coords(i, k) = (mode_i, snapshot_k) = sqrt(lam_i) V(k, i)
    out.coords.resize(m, ns);
    for (int j = 0; j < m; ++j) out.coords.row(j) = std::sqrt(lam[j]) * V.col(j).transpose();
    return out;
}

inline PodResult pod_euclidean(const MatrixXd& snapshots, double tol) {
    return pod(snapshots, tol, [](const VectorXd& v) { return v; });
}

}  // namespace larom
