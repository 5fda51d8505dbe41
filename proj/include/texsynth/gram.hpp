#pragma once

// Gram-matrix texture statistics and the distance/loss functionals built on
// them, plus the analytic gradient of the synthesis loss with respect to the
// image. Degenerate zero-norm inputs raise NumericError instead of
// propagating NaNs.

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>
#include <vector>

#include "texsynth/convnet.hpp"
#include "texsynth/core.hpp"
#include "texsynth/parallel.hpp"

namespace texsynth {

// N x N matrix of spatially averaged feature co-activations, (1/M) F F^T.
struct GramMatrix {
    int n = 0;
    Eigen::MatrixXd data;
};

// The upper triangle is computed once (blocked GEMMs with fixed boundaries)
// and mirrored, so the result is exactly symmetric and thread-count
// independent.
inline GramMatrix gram(const FeatureMaps& F) {
    const Eigen::Index N = F.data.rows();
    const Eigen::Index M = F.data.cols();
    GramMatrix G;
    G.n = static_cast<int>(N);
    G.data.resize(N, N);

    constexpr Eigen::Index block = 256;
    const Eigen::Index nb = (N + block - 1) / block;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> tasks;
    for (Eigen::Index bi = 0; bi < nb; ++bi)
        for (Eigen::Index bj = bi; bj < nb; ++bj) tasks.emplace_back(bi, bj);

    parallel_for(0, static_cast<std::int64_t>(tasks.size()), 1, [&](std::int64_t t0, std::int64_t t1) {
        for (std::int64_t t = t0; t < t1; ++t) {
            const auto [bi, bj] = tasks[static_cast<std::size_t>(t)];
            const Eigen::Index i0 = bi * block, h = std::min(block, N - i0);
            const Eigen::Index j0 = bj * block, w = std::min(block, N - j0);
            G.data.block(i0, j0, h, w).noalias() =
                F.data.middleRows(i0, h) * F.data.middleRows(j0, w).transpose();
        }
    });

    G.data *= 1.0 / static_cast<double>(M);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < i; ++j) G.data(i, j) = G.data(j, i);
    return G;
}

// Squared Frobenius difference over the product of Frobenius norms.
inline double gram_distance(const GramMatrix& gx, const GramMatrix& gy) {
    if (gx.n != gy.n) throw std::invalid_argument("gram_distance: size mismatch");
    const double nx = gx.data.norm();
    const double ny = gy.data.norm();
    if (nx == 0.0 || ny == 0.0)
        throw NumericError("gram_distance: zero-norm Gram matrix (degenerate input)");
    return (gx.data - gy.data).squaredNorm() / (nx * ny);
}

// Squared pixel difference over the product of pixel-vector norms; sums run
// over all H*W*3 components.
inline double pixel_distance(const Image& x, const Image& y) {
    if (!x.same_shape(y)) throw std::invalid_argument("pixel_distance: shape mismatch");
    double nx2 = 0.0, ny2 = 0.0, diff2 = 0.0;
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const double a = x.data()[i];
        const double b = y.data()[i];
        nx2 += a * a;
        ny2 += b * b;
        diff2 += (a - b) * (a - b);
    }
    if (nx2 == 0.0 || ny2 == 0.0)
        throw NumericError("pixel_distance: zero-norm image (degenerate input)");
    return diff2 / (std::sqrt(nx2) * std::sqrt(ny2));
}

// Synthesis objective: squared Gram mismatch normalized by the reference.
inline double synthesis_loss(const GramMatrix& g_ref, const GramMatrix& gy) {
    if (g_ref.n != gy.n) throw std::invalid_argument("synthesis_loss: size mismatch");
    const double ref2 = g_ref.data.squaredNorm();
    if (ref2 == 0.0)
        throw NumericError("synthesis_loss: zero-norm reference Gram (degenerate reference)");
    return (g_ref.data - gy.data).squaredNorm() / ref2;
}

struct LossGrad {
    double loss = 0.0;      // scale * E
    double unscaled = 0.0;  // E, before scaling
    Image grad;             // scale * dE/dy
};

// Loss and analytic image gradient for a DC-removed candidate image y:
//   E      = |G_ref - G(y)|^2 / |G_ref|^2
//   dE/dG  = 2 (G(y) - G_ref) / |G_ref|^2
//   dE/dF  = (2/M) (dE/dG) F
// then the adjoint conv pass maps dE/dF back to the image.
inline LossGrad loss_and_grad(const FilterBank& bank, const Image& y_dc, const GramMatrix& g_ref,
                              double scale) {
    if (scale <= 0.0) throw std::invalid_argument("loss_and_grad: scale must be positive");
    const double ref2 = g_ref.data.squaredNorm();
    if (ref2 == 0.0)
        throw NumericError("loss_and_grad: zero-norm reference Gram (degenerate reference)");

    const FeatureMaps F = forward(bank, y_dc);
    if (F.n_maps != g_ref.n)
        throw std::invalid_argument("loss_and_grad: Gram built with a different bank size");
    const GramMatrix gy = gram(F);
    const Eigen::Index M = F.data.cols();

    const double E = (g_ref.data - gy.data).squaredNorm() / ref2;

    const Eigen::MatrixXd dEdG = (2.0 / ref2) * (gy.data - g_ref.data);
    Eigen::MatrixXd dF(F.data.rows(), M);
    parallel_for(0, F.data.rows(), 128, [&](std::int64_t r0, std::int64_t r1) {
        dF.middleRows(r0, r1 - r0).noalias() =
            (2.0 / static_cast<double>(M)) * (dEdG.middleRows(r0, r1 - r0) * F.data);
    });

    LossGrad out;
    out.unscaled = E;
    out.loss = scale * E;
    out.grad = backward_masked(bank, F, dF);
    for (double& v : out.grad.data()) v *= scale;
    return out;
}

// Debug export: one row per line, full matrix, not a stability-guaranteed
// format.
inline void write_gram_csv(const GramMatrix& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    char buf[32];
    for (Eigen::Index i = 0; i < g.data.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.data.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.9e", g.data(i, j));
            out << buf << (j + 1 < g.data.cols() ? "," : "");
        }
        out << "\n";
    }
}

}  // namespace texsynth
