#pragma once

// Single-layer forward and adjoint passes. Convolutions are stride-1,
// bias-free cross-correlations (no kernel flip) with (f-1)/2 zero padding,
// so every feature map keeps the input's spatial dimensions. Heterogeneous
// filter sizes are handled by grouping filters of equal size and running an
// im2col + GEMM per group, tiled over spatial positions to bound memory.
// All accumulation is in double precision.
//
// Work decomposition (tile boundaries, GEMM column chunks) depends only on
// the problem shape, so results are bitwise identical for any thread count.

#include <Eigen/Dense>

#include <map>
#include <vector>

#include "texsynth/core.hpp"
#include "texsynth/filterbank.hpp"
#include "texsynth/parallel.hpp"

namespace texsynth {

// Rectified activations: row n is feature map n flattened row-major, so
// column m is the feature vector at spatial position m = y * width + x.
struct FeatureMaps {
    int n_maps = 0;
    int height = 0;
    int width = 0;
    Eigen::MatrixXd data;  // n_maps x (height * width)

    int n_positions() const { return height * width; }
};

namespace detail {

inline std::map<int, std::vector<int>> group_by_size(const FilterBank& bank) {
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < bank.size(); ++i) groups[bank.filters[i].size].push_back(i);
    return groups;
}

// Filter weights of one size group as a (group count) x (3 f^2) matrix.
inline Eigen::MatrixXd group_weights(const FilterBank& bank, const std::vector<int>& idx, int f) {
    Eigen::MatrixXd R(static_cast<Eigen::Index>(idx.size()), 3 * f * f);
    for (std::size_t g = 0; g < idx.size(); ++g) {
        const Filter& filt = bank.filters[idx[g]];
        for (std::size_t k = 0; k < filt.weights.size(); ++k)
            R(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(k)) = filt.weights[k];
    }
    return R;
}

inline Eigen::Index conv_tile_columns(Eigen::Index K, Eigen::Index M) {
    // Aim for ~64 MB of im2col buffer.
    const Eigen::Index budget = (64LL << 20) / (8 * K);
    return std::min(M, std::max<Eigen::Index>(256, budget));
}

// Fills columns [m0, m0+w) of the im2col buffer for filter size f.
inline void fill_im2col(const Image& img, int f, Eigen::Index m0, Eigen::Index w,
                        Eigen::MatrixXd& col) {
    const int H = img.height();
    const int W = img.width();
    const int pad = (f - 1) / 2;
    parallel_for(0, w, 512, [&](std::int64_t j0, std::int64_t j1) {
        for (std::int64_t j = j0; j < j1; ++j) {
            const Eigen::Index m = m0 + j;
            const int y = static_cast<int>(m / W);
            const int x = static_cast<int>(m % W);
            Eigen::Index k = 0;
            for (int c = 0; c < 3; ++c)
                for (int dy = 0; dy < f; ++dy) {
                    const int iy = y + dy - pad;
                    if (iy < 0 || iy >= H) {
                        for (int dx = 0; dx < f; ++dx) col(k++, j) = 0.0;
                        continue;
                    }
                    for (int dx = 0; dx < f; ++dx) {
                        const int ix = x + dx - pad;
                        col(k++, j) = (ix < 0 || ix >= W) ? 0.0 : img.at(iy, ix, c);
                    }
                }
        }
    });
}

// out = A * B computed in fixed column chunks (each output column is
// produced by exactly one chunk).
inline void chunked_gemm(const Eigen::MatrixXd& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                         Eigen::Ref<Eigen::MatrixXd> out) {
    parallel_for(0, B.cols(), 256, [&](std::int64_t c0, std::int64_t c1) {
        out.middleCols(c0, c1 - c0).noalias() = A * B.middleCols(c0, c1 - c0);
    });
}

}  // namespace detail

// F(n, m) = ReLU(sum over the filter support of filter_n * img at position m).
inline FeatureMaps forward(const FilterBank& bank, const Image& img) {
    const int H = img.height();
    const int W = img.width();
    const Eigen::Index M = static_cast<Eigen::Index>(H) * W;
    const Eigen::Index N = bank.size();

    FeatureMaps F;
    F.n_maps = static_cast<int>(N);
    F.height = H;
    F.width = W;
    F.data.resize(N, M);

    for (const auto& [f, idx] : detail::group_by_size(bank)) {
        const Eigen::Index K = 3LL * f * f;
        const Eigen::MatrixXd R = detail::group_weights(bank, idx, f);
        const Eigen::Index tile = detail::conv_tile_columns(K, M);
        Eigen::MatrixXd col(K, tile);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), tile);
        for (Eigen::Index m0 = 0; m0 < M; m0 += tile) {
            const Eigen::Index w = std::min(tile, M - m0);
            detail::fill_im2col(img, f, m0, w, col);
            detail::chunked_gemm(R, col.leftCols(w), out.leftCols(w));
            for (std::size_t g = 0; g < idx.size(); ++g)
                F.data.row(idx[g]).segment(m0, w) = out.row(static_cast<Eigen::Index>(g)).head(w);
        }
    }
    F.data = F.data.cwiseMax(0.0);
    return F;
}

// Gradient of <grad_F, F> with respect to the image, with F the ReLU'd
// forward pass supplied as the mask source: entries of grad_F where the
// pre-activation was <= 0 (equivalently F == 0) do not propagate.
inline Image backward_masked(const FilterBank& bank, const FeatureMaps& F,
                             const Eigen::MatrixXd& grad_F) {
    const Eigen::Index N = bank.size();
    const Eigen::Index M = F.data.cols();
    if (grad_F.rows() != N || grad_F.cols() != M)
        throw std::invalid_argument("backward: grad shape mismatch");

    const int H = F.height;
    const int W = F.width;
    Image grad_img(H, W);
    auto& gdata = grad_img.data();

    for (const auto& [f, idx] : detail::group_by_size(bank)) {
        const Eigen::Index K = 3LL * f * f;
        const int pad = (f - 1) / 2;
        const Eigen::MatrixXd R = detail::group_weights(bank, idx, f);
        const Eigen::Index nf = static_cast<Eigen::Index>(idx.size());
        const Eigen::Index tile = detail::conv_tile_columns(K, M);
        Eigen::MatrixXd gm(nf, tile);
        Eigen::MatrixXd gcol(K, tile);
        for (Eigen::Index m0 = 0; m0 < M; m0 += tile) {
            const Eigen::Index w = std::min(tile, M - m0);
            for (Eigen::Index g = 0; g < nf; ++g) {
                const Eigen::Index row = idx[static_cast<std::size_t>(g)];
                gm.row(g).head(w) = grad_F.row(row).segment(m0, w).cwiseProduct(
                    (F.data.row(row).segment(m0, w).array() > 0.0).cast<double>().matrix());
            }
            detail::chunked_gemm(R.transpose(), gm.topRows(nf).leftCols(w), gcol.leftCols(w));
            // col2im scatter-add; channels are disjoint output rows, so the
            // three channel tasks never touch the same pixel.
            parallel_for(0, 3, 1, [&](std::int64_t c0, std::int64_t c1) {
                for (std::int64_t c = c0; c < c1; ++c)
                    for (Eigen::Index j = 0; j < w; ++j) {
                        const Eigen::Index m = m0 + j;
                        const int y = static_cast<int>(m / W);
                        const int x = static_cast<int>(m % W);
                        Eigen::Index k = c * f * f;
                        for (int dy = 0; dy < f; ++dy) {
                            const int iy = y + dy - pad;
                            if (iy < 0 || iy >= H) {
                                k += f;
                                continue;
                            }
                            for (int dx = 0; dx < f; ++dx, ++k) {
                                const int ix = x + dx - pad;
                                if (ix < 0 || ix >= W) continue;
                                gdata[(static_cast<std::size_t>(iy) * W + ix) * 3 + c] +=
                                    gcol(k, j);
                            }
                        }
                    }
            });
        }
    }
    return grad_img;
}

// Convenience wrapper that recomputes the forward pass for the ReLU mask.
inline Image backward(const FilterBank& bank, const Image& img, const Eigen::MatrixXd& grad_F) {
    const FeatureMaps F = forward(bank, img);
    return backward_masked(bank, F, grad_F);
}

}  // namespace texsynth
