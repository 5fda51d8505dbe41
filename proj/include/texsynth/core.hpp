#pragma once

// Core raster types shared by the whole toolkit: RGB images in [0,1],
// per-channel DC means, patch extraction, and the error taxonomy that the
// CLI maps onto exit codes.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace texsynth {

// I/O failures (missing/corrupt files, unsupported rasters). CLI exit code 3.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Degenerate numeric inputs (zero-norm descriptors, singular covariance).
// CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimizer aborts (non-finite objective values). CLI exit code 5.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// H x W x 3 raster, interleaved R,G,B per pixel, row-major rows.
// Values are nominally in [0,1]; DC removal and gradients may leave that
// range, which is fine: the container is just a shaped double buffer.
class Image {
public:
    Image() = default;

    Image(int height, int width)
        : height_(height), width_(width) {
        if (height < 1 || width < 1)
            throw std::invalid_argument("Image: dimensions must be >= 1");
        data_.assign(static_cast<std::size_t>(height) * width * 3, 0.0);
    }

    Image(int height, int width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (height < 1 || width < 1)
            throw std::invalid_argument("Image: dimensions must be >= 1");
        if (data_.size() != static_cast<std::size_t>(height) * width * 3)
            throw std::invalid_argument("Image: data length must be height*width*3");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int pixel_count() const { return height_ * width_; }

    double& at(int y, int x, int c) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
    }
    double at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

// Per-channel mean intensities used for DC removal.
struct ChannelMeans {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;

    double operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

// Mean intensity per channel of one image.
inline ChannelMeans channel_means(const Image& img) {
    double sum[3] = {0.0, 0.0, 0.0};
    const auto& d = img.data();
    for (std::size_t i = 0; i < d.size(); i += 3) {
        sum[0] += d[i];
        sum[1] += d[i + 1];
        sum[2] += d[i + 2];
    }
    const double n = static_cast<double>(img.pixel_count());
    return {sum[0] / n, sum[1] / n, sum[2] / n};
}

// Mean intensity per channel over a corpus, weighted per pixel.
inline ChannelMeans channel_means(const std::vector<Image>& corpus) {
    if (corpus.empty())
        throw std::invalid_argument("channel_means: empty corpus");
    double sum[3] = {0.0, 0.0, 0.0};
    double n = 0.0;
    for (const Image& img : corpus) {
        const auto& d = img.data();
        for (std::size_t i = 0; i < d.size(); i += 3) {
            sum[0] += d[i];
            sum[1] += d[i + 1];
            sum[2] += d[i + 2];
        }
        n += static_cast<double>(img.pixel_count());
    }
    return {sum[0] / n, sum[1] / n, sum[2] / n};
}

// Subtracts the per-channel mean from every pixel.
inline Image remove_dc(const Image& img, const ChannelMeans& means) {
    Image out(img.height(), img.width());
    const auto& src = img.data();
    auto& dst = out.data();
    for (std::size_t i = 0; i < src.size(); i += 3) {
        dst[i] = src[i] - means.r;
        dst[i + 1] = src[i + 1] - means.g;
        dst[i + 2] = src[i + 2] - means.b;
    }
    return out;
}

// Copies the size x size sub-image with top-left corner (top, left).
inline Image extract_patch(const Image& img, int top, int left, int size) {
    if (size < 1)
        throw std::invalid_argument("extract_patch: size must be >= 1");
    if (top < 0 || left < 0 || top + size > img.height() || left + size > img.width())
        throw std::invalid_argument("extract_patch: patch out of bounds");
    Image out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = img.at(top + y, left + x, c);
    return out;
}

// Clamp to [0,1] and round to the nearest 8-bit level (half away from zero,
// so 0.5 -> 128).
inline std::uint8_t quantize8(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

inline double max_abs_value(const Image& img) {
    double m = 0.0;
    for (double v : img.data()) m = std::max(m, std::abs(v));
    return m;
}

// A constant image leaves only rounding noise after DC removal; its Gram is
// numerically meaningless, so degeneracy is judged at pixel level.
inline bool degenerate_after_dc(const Image& img, const Image& img_dc) {
    return max_abs_value(img_dc) <= 1e-12 * (1.0 + max_abs_value(img));
}

inline double max_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace texsynth
