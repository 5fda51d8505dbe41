#pragma once

// Texture-discrimination harness: random patches per texture, descriptor
// distances (Gram of the filter-bank response, or raw pixels), and a matrix
// of median within/between-texture distances with a separation report and a
// log-scale heatmap rendering.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "texsynth/convnet.hpp"
#include "texsynth/core.hpp"
#include "texsynth/filterbank.hpp"
#include "texsynth/gram.hpp"
#include "texsynth/image_io.hpp"
#include "texsynth/rng.hpp"

namespace texsynth {

struct ConfusionMatrix {
    int n_textures = 0;
    Eigen::MatrixXd data;  // median distances; diagonal = within-texture
    std::vector<std::string> labels;
    std::string model_id;  // bank hash or "pixel"
};

namespace detail {

// Median with the lower-of-two-middles rule for even counts, so results are
// exactly reproducible.
inline double lower_median(std::vector<double> v) {
    if (v.empty()) throw NumericError("median of an empty set");
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

}  // namespace detail

// Entry (i,j) is the median descriptor distance between patches of textures
// i and j: all n*n pairs for i != j, the n(n-1)/2 distinct unordered pairs
// for i == j (self-pairs excluded). Patches with a zero-norm descriptor are
// skipped with a warning and the pair counts shrink accordingly.
inline ConfusionMatrix confusion(const std::vector<Image>& textures,
                                 const std::vector<std::string>& labels, const FilterBank* bank,
                                 const ChannelMeans& means, int n_patches, int patch_size,
                                 Rng& rng) {
    const int T = static_cast<int>(textures.size());
    if (T < 1) throw std::invalid_argument("confusion: no textures");
    if (static_cast<int>(labels.size()) != T)
        throw std::invalid_argument("confusion: label count mismatch");
    if (n_patches < 2) throw std::invalid_argument("confusion: n_patches must be >= 2");
    for (int t = 0; t < T; ++t)
        if (textures[t].height() < patch_size || textures[t].width() < patch_size)
            throw std::invalid_argument("confusion: texture too small for patch size: " +
                                        labels[t]);

    // Patch corners are drawn up front in a fixed order so that descriptor
    // computation cannot perturb the stream.
    std::vector<std::vector<Image>> patches(T);
    for (int t = 0; t < T; ++t)
        for (int p = 0; p < n_patches; ++p) {
            const int top = static_cast<int>(rng.below(textures[t].height() - patch_size + 1));
            const int left = static_cast<int>(rng.below(textures[t].width() - patch_size + 1));
            patches[t].push_back(extract_patch(textures[t], top, left, patch_size));
        }

    std::vector<std::vector<GramMatrix>> grams(T);
    std::vector<std::vector<const Image*>> pixels(T);
    for (int t = 0; t < T; ++t) {
        for (int p = 0; p < n_patches; ++p) {
            if (bank) {
                const Image dcp = remove_dc(patches[t][p], means);
                if (degenerate_after_dc(patches[t][p], dcp)) {
                    std::cerr << "[texsynth] warning: skipping degenerate patch " << p
                              << " of texture " << labels[t] << " (constant after DC removal)\n";
                    continue;
                }
                GramMatrix g = gram(forward(*bank, dcp));
                if (g.data.norm() == 0.0) {
                    std::cerr << "[texsynth] warning: skipping degenerate patch " << p
                              << " of texture " << labels[t] << " (zero-norm Gram)\n";
                    continue;
                }
                grams[t].push_back(std::move(g));
            } else {
                double norm2 = 0.0;
                for (double v : patches[t][p].data()) norm2 += v * v;
                if (norm2 == 0.0) {
                    std::cerr << "[texsynth] warning: skipping degenerate patch " << p
                              << " of texture " << labels[t] << " (all-zero pixels)\n";
                    continue;
                }
                pixels[t].push_back(&patches[t][p]);
            }
        }
        const std::size_t kept = bank ? grams[t].size() : pixels[t].size();
        if (kept < 2)
            throw NumericError("confusion: fewer than 2 usable patches for texture " + labels[t]);
    }

    ConfusionMatrix cm;
    cm.n_textures = T;
    cm.labels = labels;
    cm.model_id = bank ? bank_hash(*bank) : "pixel";
    cm.data.resize(T, T);

    auto distance = [&](int ti, int pi, int tj, int pj) {
        if (bank) return gram_distance(grams[ti][pi], grams[tj][pj]);
        return pixel_distance(*pixels[ti][pi], *pixels[tj][pj]);
    };
    auto count_of = [&](int t) {
        return static_cast<int>(bank ? grams[t].size() : pixels[t].size());
    };

    for (int i = 0; i < T; ++i) {
        for (int j = i; j < T; ++j) {
            std::vector<double> dists;
            if (i == j) {
                const int n = count_of(i);
                for (int a = 0; a < n; ++a)
                    for (int b = a + 1; b < n; ++b) dists.push_back(distance(i, a, i, b));
            } else {
                const int ni = count_of(i);
                const int nj = count_of(j);
                for (int a = 0; a < ni; ++a)
                    for (int b = 0; b < nj; ++b) dists.push_back(distance(i, a, j, b));
            }
            const double med = detail::lower_median(std::move(dists));
            cm.data(i, j) = med;
            cm.data(j, i) = med;
        }
    }
    return cm;
}

struct SeparationReport {
    int n_separated = 0;
    int n_textures = 0;
    std::vector<bool> separated;  // per texture: within < every between
    std::vector<double> ratios;   // min between / within
    std::string text;
};

inline SeparationReport separation_report(const ConfusionMatrix& cm) {
    SeparationReport rep;
    rep.n_textures = cm.n_textures;
    std::string text;
    for (int i = 0; i < cm.n_textures; ++i) {
        const double within = cm.data(i, i);
        double min_between = std::numeric_limits<double>::infinity();
        for (int j = 0; j < cm.n_textures; ++j)
            if (j != i) min_between = std::min(min_between, cm.data(i, j));
        const bool sep = within < min_between;
        const double ratio = within > 0.0 ? min_between / within
                                          : std::numeric_limits<double>::infinity();
        rep.separated.push_back(sep);
        rep.ratios.push_back(ratio);
        if (sep) ++rep.n_separated;
        char line[256];
        std::snprintf(line, sizeof(line), "texture %s: within=%.9e min_between=%.9e ratio=%.3f %s\n",
                      cm.labels[i].c_str(), within, min_between, ratio,
                      sep ? "separated" : "not-separated");
        text += line;
    }
    text += "separated: " + std::to_string(rep.n_separated) + "/" +
            std::to_string(rep.n_textures) + "\n";
    rep.text = std::move(text);
    return rep;
}

// CSV: header row of labels, then one row of %.9e values per texture.
inline void write_confusion_csv(const ConfusionMatrix& cm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    for (int j = 0; j < cm.n_textures; ++j)
        out << cm.labels[j] << (j + 1 < cm.n_textures ? "," : "");
    out << "\n";
    char buf[32];
    for (int i = 0; i < cm.n_textures; ++i) {
        for (int j = 0; j < cm.n_textures; ++j) {
            std::snprintf(buf, sizeof(buf), "%.9e", cm.data(i, j));
            out << buf << (j + 1 < cm.n_textures ? "," : "");
        }
        out << "\n";
    }
}

// Grayscale heatmap of log10(cm), min -> black, max -> white, one 32 px
// square per cell; the raw values go to the companion CSV. Zero entries are
// mapped to the smallest positive entry first (with a warning).
inline void render_heatmap(const ConfusionMatrix& cm, const std::string& png_path,
                           const std::string& csv_path) {
    write_confusion_csv(cm, csv_path);

    Eigen::MatrixXd vals = cm.data;
    double min_pos = std::numeric_limits<double>::infinity();
    for (int i = 0; i < cm.n_textures; ++i)
        for (int j = 0; j < cm.n_textures; ++j)
            if (vals(i, j) > 0.0) min_pos = std::min(min_pos, vals(i, j));
    if (!std::isfinite(min_pos))
        throw NumericError("render_heatmap: matrix has no positive entries");
    bool warned = false;
    for (int i = 0; i < cm.n_textures; ++i)
        for (int j = 0; j < cm.n_textures; ++j)
            if (vals(i, j) <= 0.0) {
                vals(i, j) = min_pos;
                if (!warned) {
                    std::cerr << "[texsynth] warning: zero entries mapped to the minimum "
                                 "positive value in heatmap\n";
                    warned = true;
                }
            }

    const Eigen::MatrixXd logv = vals.array().log10();
    const double lo = logv.minCoeff();
    const double hi = logv.maxCoeff();

    constexpr int cell = 32;
    Image img(cm.n_textures * cell, cm.n_textures * cell);
    for (int i = 0; i < cm.n_textures; ++i)
        for (int j = 0; j < cm.n_textures; ++j) {
            const double gray = (hi > lo) ? (logv(i, j) - lo) / (hi - lo) : 0.5;
            for (int y = i * cell; y < (i + 1) * cell; ++y)
                for (int x = j * cell; x < (j + 1) * cell; ++x)
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = gray;
        }
    save_image(img, png_path);
}

}  // namespace texsynth
