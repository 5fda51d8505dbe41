#pragma once

// Patch-dictionary filter banks: ZCA whitening, k-means clustering with
// k-means++ seeding, and PCA principal axes. Patches are vectorized in the
// same (channel, row, col) order as filter weights, so cluster means and
// principal axes reshape directly into convolution filters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "texsynth/core.hpp"
#include "texsynth/filterbank.hpp"
#include "texsynth/parallel.hpp"
#include "texsynth/rng.hpp"

namespace texsynth {

inline Eigen::VectorXd patch_to_vector(const Image& patch) {
    const int s = patch.height();
    if (patch.width() != s)
        throw std::invalid_argument("patch_to_vector: patch must be square");
    Eigen::VectorXd v(3 * s * s);
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < s; ++r)
            for (int col = 0; col < s; ++col)
                v[(c * s + r) * s + col] = patch.at(r, col, c);
    return v;
}

inline Image vector_to_patch(const Eigen::VectorXd& v, int size) {
    if (v.size() != 3 * size * size)
        throw std::invalid_argument("vector_to_patch: length mismatch");
    Image img(size, size);
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < size; ++r)
            for (int col = 0; col < size; ++col)
                img.at(r, col, c) = v[(c * size + r) * size + col];
    return img;
}

inline Filter vector_to_filter(const Eigen::VectorXd& v, int size) {
    Filter f(size);
    if (v.size() != static_cast<Eigen::Index>(f.weights.size()))
        throw std::invalid_argument("vector_to_filter: length mismatch");
    for (Eigen::Index i = 0; i < v.size(); ++i) f.weights[i] = v[i];
    return f;
}

namespace detail {

// dim x P matrix, one column per patch; all patches must share one size.
inline Eigen::MatrixXd patch_matrix(const std::vector<Image>& patches) {
    if (patches.empty()) throw std::invalid_argument("no patches");
    const int s = patches.front().height();
    Eigen::MatrixXd X(3 * s * s, static_cast<Eigen::Index>(patches.size()));
    for (std::size_t p = 0; p < patches.size(); ++p) {
        if (patches[p].height() != s || patches[p].width() != s)
            throw std::invalid_argument("patches must share one square size");
        X.col(static_cast<Eigen::Index>(p)) = patch_to_vector(patches[p]);
    }
    return X;
}

}  // namespace detail

// Symmetric (ZCA) whitening transform fit to a patch sample.
struct WhiteningTransform {
    int dim = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd matrix;  // E (L + eps I)^(-1/2) E^T, symmetric
    double epsilon = 0.0;

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return matrix * (v - mean); }
};

// Centers the patch sample and applies ZCA whitening. epsilon is the
// absolute eigenvalue regularizer; when omitted it defaults to
// 1e-5 * mean(eigenvalues). A covariance that stays singular under the
// chosen epsilon is an error.
inline std::pair<std::vector<Image>, WhiteningTransform> whiten_patches(
    const std::vector<Image>& patches, std::optional<double> epsilon = std::nullopt) {
    if (patches.size() < 2)
        throw std::invalid_argument("whiten_patches: need at least 2 patches");
    const int size = patches.front().height();
    Eigen::MatrixXd X = detail::patch_matrix(patches);
    const Eigen::Index dim = X.rows();
    const Eigen::Index P = X.cols();

    const Eigen::VectorXd mean = X.rowwise().mean();
    X.colwise() -= mean;
    const Eigen::MatrixXd cov = (X * X.transpose()) / static_cast<double>(P - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
        throw NumericError("whiten_patches: eigendecomposition failed");
    const Eigen::VectorXd lambda = es.eigenvalues();  // ascending
    const double eps = epsilon.value_or(1e-5 * lambda.mean());
    const double lead = lambda[dim - 1];
    if (lead <= 0.0)
        throw NumericError("whiten_patches: covariance has no positive spectrum");
    for (Eigen::Index i = 0; i < dim; ++i)
        if (lambda[i] + eps <= lead * 1e-12)
            throw NumericError(
                "whiten_patches: singular covariance (rank-deficient sample); "
                "increase epsilon or the number of patches");

    const Eigen::VectorXd inv_sqrt = (lambda.array() + eps).rsqrt();
    const Eigen::MatrixXd W =
        es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();

    std::vector<Image> whitened;
    whitened.reserve(patches.size());
    Eigen::MatrixXd WX = W * X;
    for (Eigen::Index p = 0; p < P; ++p) whitened.push_back(vector_to_patch(WX.col(p), size));

    WhiteningTransform transform;
    transform.dim = static_cast<int>(dim);
    transform.mean = mean;
    transform.matrix = W;
    transform.epsilon = eps;
    return {std::move(whitened), std::move(transform)};
}

struct KmeansResult {
    Eigen::MatrixXd centroids;  // dim x k
    std::vector<int> assignment;
    std::vector<double> objective_trace;  // sum of squared distances, per assignment pass
    int iterations = 0;
};

namespace detail {

// Nearest centroid per point; ties break to the lowest centroid index.
// Returns the summed squared distances. Chunked over points so the result
// is identical for any thread count.
inline double assign_points(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C,
                            std::vector<int>& assignment, Eigen::VectorXd& dist2) {
    const Eigen::Index P = X.cols();
    const Eigen::Index k = C.cols();
    const Eigen::VectorXd cnorm = C.colwise().squaredNorm();
    constexpr Eigen::Index chunk = 4096;
    parallel_for(0, P, chunk, [&](std::int64_t p0, std::int64_t p1) {
        const Eigen::Index w = static_cast<Eigen::Index>(p1 - p0);
        Eigen::MatrixXd cross = C.transpose() * X.middleCols(p0, w);  // k x w
        for (Eigen::Index j = 0; j < w; ++j) {
            const double xn = X.col(p0 + j).squaredNorm();
            int best = 0;
            double bestd = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < k; ++c) {
                const double d = xn - 2.0 * cross(c, j) + cnorm[c];
                if (d < bestd) {
                    bestd = d;
                    best = static_cast<int>(c);
                }
            }
            assignment[p0 + j] = best;
            dist2[p0 + j] = std::max(bestd, 0.0);
        }
    });
    return dist2.sum();
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Runs until the assignment stops
// changing or max_iters passes. Empty clusters are re-seeded from the point
// farthest from its centroid. The returned centroids are the means of the
// final assignment.
inline KmeansResult kmeans(const Eigen::MatrixXd& X, int k, Rng& rng, int max_iters = 100) {
    const Eigen::Index P = X.cols();
    const Eigen::Index dim = X.rows();
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (static_cast<Eigen::Index>(k) > P)
        throw std::invalid_argument("kmeans: k exceeds the number of points");

    // k-means++ seeding.
    Eigen::MatrixXd C(dim, k);
    C.col(0) = X.col(static_cast<Eigen::Index>(rng.below(P)));
    Eigen::VectorXd d2 =
        (X.colwise() - C.col(0)).colwise().squaredNorm().transpose().cwiseMax(0.0);
    for (int j = 1; j < k; ++j) {
        const double total = d2.sum();
        Eigen::Index pick;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.below(P));
        } else {
            const double u = rng.uniform() * total;
            double acc = 0.0;
            pick = P - 1;
            for (Eigen::Index p = 0; p < P; ++p) {
                acc += d2[p];
                if (acc > u) {
                    pick = p;
                    break;
                }
            }
        }
        C.col(j) = X.col(pick);
        d2 = d2.cwiseMin((X.colwise() - C.col(j)).colwise().squaredNorm().transpose());
    }

    KmeansResult res;
    res.assignment.assign(P, 0);
    Eigen::VectorXd dist2(P);
    res.objective_trace.push_back(detail::assign_points(X, C, res.assignment, dist2));

    auto fix_empty_and_update = [&](std::vector<int>& assignment) {
        std::vector<Eigen::Index> counts(k, 0);
        for (int a : assignment) ++counts[a];
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            // Re-seed from the farthest point, stealing only from clusters
            // that keep at least one member.
            Eigen::Index far = -1;
            for (Eigen::Index p = 0; p < P; ++p)
                if (counts[assignment[p]] > 1 && (far < 0 || dist2[p] > dist2[far])) far = p;
            --counts[assignment[far]];
            assignment[far] = c;
            counts[c] = 1;
            dist2[far] = 0.0;
        }
        C.setZero();
        for (Eigen::Index p = 0; p < P; ++p) C.col(assignment[p]) += X.col(p);
        for (int c = 0; c < k; ++c) C.col(c) /= static_cast<double>(counts[c]);
    };

    for (int iter = 1; iter <= max_iters; ++iter) {
        fix_empty_and_update(res.assignment);
        std::vector<int> next(P);
        res.objective_trace.push_back(detail::assign_points(X, C, next, dist2));
        res.iterations = iter;
        if (next == res.assignment) break;
        res.assignment = next;
    }
    fix_empty_and_update(res.assignment);
    res.centroids = std::move(C);
    return res;
}

inline FilterBank kmeans_filters(const std::vector<Image>& patches, int k, Rng& rng,
                                 int max_iters = 100, BankKind kind = BankKind::kmeans) {
    if (k < 1) throw std::invalid_argument("kmeans_filters: k must be >= 1");
    if (static_cast<int>(patches.size()) < k)
        throw std::invalid_argument("kmeans_filters: k exceeds the number of patches");
    const int size = patches.front().height();
    const Eigen::MatrixXd X = detail::patch_matrix(patches);
    KmeansResult res = kmeans(X, k, rng, max_iters);

    FilterBank bank;
    bank.kind = kind;
    bank.filters.reserve(k);
    for (int c = 0; c < k; ++c) bank.filters.push_back(vector_to_filter(res.centroids.col(c), size));
    bank.metadata = {
        {"kind", to_string(kind)},
        {"k", k},
        {"size", size},
        {"patches", patches.size()},
        {"lloyd_iterations", res.iterations},
        {"objective_final", res.objective_trace.back()},
        {"seed", rng.seed()},
    };
    return bank;
}

// All principal axes of the centered patch sample, unit norm and ordered by
// descending explained variance.
inline FilterBank pca_filters(const std::vector<Image>& patches) {
    if (patches.empty()) throw std::invalid_argument("pca_filters: no patches");
    const int size = patches.front().height();
    Eigen::MatrixXd X = detail::patch_matrix(patches);
    const Eigen::Index dim = X.rows();
    if (X.cols() < dim)
        throw std::invalid_argument("pca_filters: need at least dim (3*size^2) patches");

    const Eigen::VectorXd mean = X.rowwise().mean();
    X.colwise() -= mean;
    const Eigen::MatrixXd cov = (X * X.transpose()) / static_cast<double>(X.cols() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
        throw NumericError("pca_filters: eigendecomposition failed");

    FilterBank bank;
    bank.kind = (size == 11) ? BankKind::pca363 : BankKind::custom;
    bank.filters.reserve(dim);
    std::vector<double> variances;
    variances.reserve(dim);
    for (Eigen::Index i = dim - 1; i >= 0; --i) {  // descending eigenvalue
        bank.filters.push_back(vector_to_filter(es.eigenvectors().col(i), size));
        variances.push_back(es.eigenvalues()[i]);
    }
    bank.metadata = {
        {"kind", to_string(bank.kind)},
        {"size", size},
        {"patches", patches.size()},
        {"explained_variance", variances},
    };
    return bank;
}

}  // namespace texsynth
