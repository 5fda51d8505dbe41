#pragma once

// Construction, validation, and serialization of the single-layer filter
// banks: separable real Fourier bases (per-channel and color-weighted),
// Glorot-uniform random banks at one or eight scales, and the learned
// k-means / PCA banks built elsewhere on top of these types.
//
// Bank file layout (little-endian): magic "TXBANK01", u32 filter count,
// per filter { u32 size f, f*f*3 float32 weights in (channel,row,col)
// order }, then u32 length + UTF-8 JSON metadata blob.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texsynth/core.hpp"
#include "texsynth/image_io.hpp"
#include "texsynth/rng.hpp"

namespace texsynth {

// One convolution filter: size x size x 3 weights, (channel, row, col) order.
struct Filter {
    int size = 0;
    std::vector<double> weights;

    Filter() = default;
    Filter(int size_) : size(size_) {
        if (size < 1 || size % 2 == 0)
            throw std::invalid_argument("Filter: size must be odd and >= 1");
        weights.assign(static_cast<std::size_t>(size) * size * 3, 0.0);
    }

    double& at(int c, int r, int col) {
        return weights[(static_cast<std::size_t>(c) * size + r) * size + col];
    }
    double at(int c, int r, int col) const {
        return weights[(static_cast<std::size_t>(c) * size + r) * size + col];
    }
};

enum class BankKind {
    fourier363,
    fourier3267,
    random363,
    random3267,
    multiscale,
    kmeans,
    kmeans_nonwhite,
    kmeans_sample,
    pca363,
    custom,  // free-form banks (tests, experiments); no count constraint
};

inline std::string to_string(BankKind k) {
    switch (k) {
        case BankKind::fourier363: return "fourier363";
        case BankKind::fourier3267: return "fourier3267";
        case BankKind::random363: return "random363";
        case BankKind::random3267: return "random3267";
        case BankKind::multiscale: return "multiscale";
        case BankKind::kmeans: return "kmeans";
        case BankKind::kmeans_nonwhite: return "kmeans_nonwhite";
        case BankKind::kmeans_sample: return "kmeans_sample";
        case BankKind::pca363: return "pca363";
        case BankKind::custom: return "custom";
    }
    return "custom";
}

inline BankKind parse_bank_kind(const std::string& s) {
    static const std::map<std::string, BankKind> table = {
        {"fourier363", BankKind::fourier363},   {"fourier3267", BankKind::fourier3267},
        {"random363", BankKind::random363},     {"random3267", BankKind::random3267},
        {"multiscale", BankKind::multiscale},   {"kmeans", BankKind::kmeans},
        {"kmeans_nonwhite", BankKind::kmeans_nonwhite},
        {"kmeans_sample", BankKind::kmeans_sample},
        {"pca363", BankKind::pca363},           {"custom", BankKind::custom},
    };
    auto it = table.find(s);
    if (it == table.end()) throw std::invalid_argument("unknown bank kind: " + s);
    return it->second;
}

constexpr std::array<int, 8> kMultiscaleSizes = {3, 5, 7, 11, 15, 23, 37, 55};
constexpr int kMultiscaleMapsPerSize = 128;

struct FilterBank {
    BankKind kind = BankKind::custom;
    std::vector<Filter> filters;
    nlohmann::json metadata;  // build parameters: seed, counts, corpus hash, ...

    int size() const { return static_cast<int>(filters.size()); }
    int max_filter_size() const {
        int m = 0;
        for (const Filter& f : filters) m = std::max(m, f.size);
        return m;
    }
};

// Checks the per-kind count/size contract.
inline void validate_bank(const FilterBank& bank) {
    const int n = bank.size();
    if (n == 0) throw std::invalid_argument("filter bank is empty");
    switch (bank.kind) {
        case BankKind::fourier363:
        case BankKind::random363:
        case BankKind::pca363:
            if (n != 363) throw std::invalid_argument("bank must hold 363 filters");
            break;
        case BankKind::fourier3267:
        case BankKind::random3267:
            if (n != 3267) throw std::invalid_argument("bank must hold 3267 filters");
            break;
        case BankKind::multiscale: {
            if (n != 1024) throw std::invalid_argument("multiscale bank must hold 1024 filters");
            std::map<int, int> per_size;
            for (const Filter& f : bank.filters) ++per_size[f.size];
            for (int s : kMultiscaleSizes)
                if (per_size[s] != kMultiscaleMapsPerSize)
                    throw std::invalid_argument("multiscale bank needs 128 filters per size");
            break;
        }
        case BankKind::kmeans:
        case BankKind::kmeans_nonwhite:
        case BankKind::kmeans_sample:
        case BankKind::custom:
            break;
    }
    for (const Filter& f : bank.filters)
        if (f.size < 1 || f.size % 2 == 0 ||
            f.weights.size() != static_cast<std::size_t>(f.size) * f.size * 3)
            throw std::invalid_argument("malformed filter in bank");
}

// n^2 orthonormal n x n matrices built as outer products of the 1D real
// Fourier basis of length n.
struct FourierBasis2D {
    int size = 0;
    std::vector<Eigen::MatrixXd> elements;
};

// 1D real Fourier basis of odd length n, ordered [dc, cos_1, sin_1, cos_2, ...].
inline std::vector<Eigen::VectorXd> fourier_basis_1d(int n) {
    if (n < 1 || n % 2 == 0)
        throw std::invalid_argument("fourier_basis_1d: length must be odd and >= 1");
    std::vector<Eigen::VectorXd> basis;
    basis.reserve(n);
    Eigen::VectorXd dc = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    basis.push_back(dc);
    const double two_pi = 2.0 * 3.14159265358979323846;
    const double amp = std::sqrt(2.0 / n);
    for (int k = 1; k <= (n - 1) / 2; ++k) {
        Eigen::VectorXd c(n), s(n);
        for (int t = 0; t < n; ++t) {
            c[t] = amp * std::cos(two_pi * k * t / n);
            s[t] = amp * std::sin(two_pi * k * t / n);
        }
        basis.push_back(c);
        basis.push_back(s);
    }
    return basis;
}

// Element order: row-basis index major, column-basis index minor.
inline FourierBasis2D fourier_basis_2d(int size) {
    const auto b1 = fourier_basis_1d(size);
    FourierBasis2D out;
    out.size = size;
    out.elements.reserve(static_cast<std::size_t>(size) * size);
    for (int a = 0; a < size; ++a)
        for (int b = 0; b < size; ++b)
            out.elements.push_back(b1[a] * b1[b].transpose());
    return out;
}

// 363 filters of size 11: basis element B_i placed in a single color channel,
// ordered channel-major (all R, then G, then B), basis index minor.
inline FilterBank build_fourier_363() {
    const FourierBasis2D basis = fourier_basis_2d(11);
    FilterBank bank;
    bank.kind = BankKind::fourier363;
    bank.filters.reserve(363);
    for (int c = 0; c < 3; ++c)
        for (const Eigen::MatrixXd& B : basis.elements) {
            Filter f(11);
            for (int r = 0; r < 11; ++r)
                for (int col = 0; col < 11; ++col)
                    f.at(c, r, col) = B(r, col);
            bank.filters.push_back(std::move(f));
        }
    bank.metadata = {{"kind", "fourier363"}};
    return bank;
}

// 3267 filters of size 11: basis element B_i scaled per channel by a weight
// triple (w_R, w_G, w_B) from {1,0,-1}^3. Order: weight triple major
// (lexicographic with digit order 1, 0, -1), basis index minor. The all-zero
// triple is kept so the count matches 27 * 121; its feature maps are
// identically zero and only add zero rows/columns to the Gram matrix.
inline FilterBank build_fourier_3267() {
    const FourierBasis2D basis = fourier_basis_2d(11);
    const std::array<double, 3> levels = {1.0, 0.0, -1.0};
    FilterBank bank;
    bank.kind = BankKind::fourier3267;
    bank.filters.reserve(3267);
    for (double wr : levels)
        for (double wg : levels)
            for (double wb : levels) {
                const std::array<double, 3> w = {wr, wg, wb};
                for (const Eigen::MatrixXd& B : basis.elements) {
                    Filter f(11);
                    for (int c = 0; c < 3; ++c) {
                        if (w[c] == 0.0) continue;
                        for (int r = 0; r < 11; ++r)
                            for (int col = 0; col < 11; ++col)
                                f.at(c, r, col) = w[c] * B(r, col);
                    }
                    bank.filters.push_back(std::move(f));
                }
            }
    bank.metadata = {{"kind", "fourier3267"}};
    return bank;
}

namespace detail {

// Largest float whose double value does not exceed `a` (a > 0).
inline float float_at_most(double a) {
    float f = static_cast<float>(a);
    if (static_cast<double>(f) > a) f = std::nextafterf(f, 0.0f);
    return f;
}

// One Glorot-uniform filter on [-a, a]. Weights are drawn on the float32
// grid so that banks survive the float32 file format bit-exactly.
inline Filter glorot_filter(int size, double bound, Rng& rng) {
    Filter f(size);
    const float fb = float_at_most(bound);
    for (double& w : f.weights) {
        const float u = static_cast<float>(2.0 * rng.uniform() - 1.0);
        w = static_cast<double>(u * fb);
    }
    return f;
}

}  // namespace detail

// Glorot-uniform bound for a conv layer: sqrt(6 / (fan_in + fan_out)) with
// fan_in = 3 f^2 and fan_out = count * f^2.
inline double glorot_bound(int count, int size) {
    const double f2 = static_cast<double>(size) * size;
    return std::sqrt(6.0 / (3.0 * f2 + static_cast<double>(count) * f2));
}

inline FilterBank build_random(int count, int size, Rng& rng) {
    if (count < 1) throw std::invalid_argument("build_random: count must be >= 1");
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("build_random: size must be odd and >= 1");
    const double bound = glorot_bound(count, size);
    FilterBank bank;
    bank.kind = (count == 363 && size == 11)    ? BankKind::random363
                : (count == 3267 && size == 11) ? BankKind::random3267
                                                : BankKind::custom;
    bank.filters.reserve(count);
    for (int i = 0; i < count; ++i) bank.filters.push_back(detail::glorot_filter(size, bound, rng));
    bank.metadata = {
        {"kind", to_string(bank.kind)}, {"count", count}, {"size", size},
        {"seed", rng.seed()},           {"bound", bound},
    };
    return bank;
}

// 128 Glorot-uniform filters for each size in {3,5,7,11,15,23,37,55},
// ordered by ascending size; fan_out is computed per size.
inline FilterBank build_multiscale(Rng& rng) {
    FilterBank bank;
    bank.kind = BankKind::multiscale;
    bank.filters.reserve(1024);
    for (int size : kMultiscaleSizes) {
        const double bound = glorot_bound(kMultiscaleMapsPerSize, size);
        for (int i = 0; i < kMultiscaleMapsPerSize; ++i)
            bank.filters.push_back(detail::glorot_filter(size, bound, rng));
    }
    bank.metadata = {{"kind", "multiscale"}, {"seed", rng.seed()}};
    return bank;
}

// FNV-1a over the float32 serialization of all weights; identifies a bank in
// sidecars and reports.
inline std::string bank_hash(const FilterBank& bank) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const Filter& f : bank.filters) {
        const std::uint32_t size = static_cast<std::uint32_t>(f.size);
        mix(&size, 4);
        for (double w : f.weights) {
            const float v = static_cast<float>(w);
            std::uint32_t u;
            std::memcpy(&u, &v, 4);
            mix(&u, 4);
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void save_bank(const FilterBank& bank, const std::string& path) {
    validate_bank(bank);
    detail::FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write file: " + path);
    if (std::fwrite("TXBANK01", 1, 8, file.get()) != 8) throw IoError("write failed: " + path);
    detail::put_u32le(file.get(), static_cast<std::uint32_t>(bank.filters.size()));
    for (const Filter& f : bank.filters) {
        detail::put_u32le(file.get(), static_cast<std::uint32_t>(f.size));
        for (double w : f.weights) detail::put_f32le(file.get(), static_cast<float>(w));
    }
    nlohmann::json meta = bank.metadata;
    meta["kind"] = to_string(bank.kind);
    const std::string blob = meta.dump();
    detail::put_u32le(file.get(), static_cast<std::uint32_t>(blob.size()));
    if (!blob.empty() && std::fwrite(blob.data(), 1, blob.size(), file.get()) != blob.size())
        throw IoError("write failed: " + path);
}

inline FilterBank load_bank(const std::string& path) {
    detail::FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open file: " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, file.get()) != 8 || std::memcmp(magic, "TXBANK01", 8) != 0)
        throw IoError("bad bank magic/version: " + path);
    const std::uint32_t count = detail::get_u32le(file.get(), path);
    if (count == 0 || count > 1000000) throw IoError("implausible filter count: " + path);
    FilterBank bank;
    bank.filters.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t size = detail::get_u32le(file.get(), path);
        if (size < 1 || size % 2 == 0 || size > 4097)
            throw IoError("implausible filter size: " + path);
        Filter f(static_cast<int>(size));
        for (double& w : f.weights)
            w = static_cast<double>(detail::get_f32le(file.get(), path));
        bank.filters.push_back(std::move(f));
    }
    const std::uint32_t blob_len = detail::get_u32le(file.get(), path);
    std::string blob(blob_len, '\0');
    if (blob_len && std::fread(blob.data(), 1, blob_len, file.get()) != blob_len)
        throw IoError("truncated file: " + path);
    try {
        bank.metadata = blob.empty() ? nlohmann::json::object() : nlohmann::json::parse(blob);
    } catch (const nlohmann::json::exception&) {
        throw IoError("corrupt bank metadata: " + path);
    }
    if (bank.metadata.contains("kind"))
        bank.kind = parse_bank_kind(bank.metadata["kind"].get<std::string>());
    validate_bank(bank);
    return bank;
}

}  // namespace texsynth
