#pragma once

// Procedural reference textures: gratings, checkerboards, band-limited
// noise, thresholded blobs, and telegraph stripes. Used by the demo texture
// generator and the test corpus. All generators share a common mean level
// of 0.5 so that raw pixel statistics stay deliberately uninformative about
// texture identity.

#include <cmath>
#include <cstdint>
#include <vector>

#include "texsynth/core.hpp"
#include "texsynth/rng.hpp"

namespace texsynth {

namespace detail {

// Periodic separable Gaussian blur on a single-channel field.
inline std::vector<double> blur_periodic(const std::vector<double>& src, int h, int w,
                                         double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (double& k : kernel) k /= ksum;

    std::vector<double> tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * src[y * w + ((x + i) % w + w) % w];
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[(((y + i) % h + h) % h) * w + x];
            out[y * w + x] = acc;
        }
    return out;
}

// Rescale a field to mean 0.5 and the requested standard deviation.
inline void normalize_field(std::vector<double>& v, double target_std) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const double scale = var > 0.0 ? target_std / std::sqrt(var) : 0.0;
    for (double& x : v) x = std::clamp(0.5 + (x - mean) * scale, 0.0, 1.0);
}

inline Image field_to_image(const std::vector<double>& field, int h, int w,
                            double channel_shift, Rng& rng) {
    // Small per-channel modulation keeps color correlations informative
    // without moving the per-channel means apart.
    Image img(h, w);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = field[y * w + x];
            for (int c = 0; c < 3; ++c) {
                const double mod =
                    1.0 + channel_shift * std::sin(phase + 2.0943951023931953 * c);
                img.at(y, x, c) = std::clamp(0.5 + (v - 0.5) * mod, 0.0, 1.0);
            }
        }
    return img;
}

}  // namespace detail

// Sinusoidal grating with random phase.
inline Image make_grating(int h, int w, double wavelength, double angle, Rng rng) {
    const double phi = rng.uniform(0.0, 6.283185307179586);
    const double kx = std::cos(angle) * 6.283185307179586 / wavelength;
    const double ky = std::sin(angle) * 6.283185307179586 / wavelength;
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            field[y * w + x] = 0.5 + 0.35 * std::sin(kx * x + ky * y + phi);
    return detail::field_to_image(field, h, w, 0.25, rng);
}

// Two-tone checkerboard with a random grid offset.
inline Image make_checkerboard(int h, int w, int cell, Rng rng) {
    const int ox = static_cast<int>(rng.below(cell));
    const int oy = static_cast<int>(rng.below(cell));
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool on = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
            field[y * w + x] = on ? 0.8 : 0.2;
        }
    return detail::field_to_image(field, h, w, 0.2, rng);
}

// Gaussian-blurred white noise with correlation length sigma.
inline Image make_filtered_noise(int h, int w, double sigma, Rng rng) {
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (double& v : field) v = rng.uniform();
    if (sigma > 0.0) field = detail::blur_periodic(field, h, w, sigma);
    detail::normalize_field(field, 0.16);
    return detail::field_to_image(field, h, w, 0.2, rng);
}

// Two-tone blobs: thresholded band-limited noise at the given scale.
inline Image make_spots(int h, int w, double scale, Rng rng) {
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (double& v : field) v = rng.uniform();
    field = detail::blur_periodic(field, h, w, scale);
    double mean = 0.0;
    for (double v : field) mean += v;
    mean /= static_cast<double>(field.size());
    for (double& v : field) v = v > mean ? 0.68 : 0.32;
    return detail::field_to_image(field, h, w, 0.2, rng);
}

// Telegraph stripes: piecewise-constant runs along one axis.
inline Image make_stripes(int h, int w, int mean_run, bool vertical, Rng rng) {
    const int length = vertical ? w : h;
    std::vector<double> profile(length);
    double level = rng.uniform() < 0.5 ? 0.34 : 0.66;
    int remaining = 0;
    for (int i = 0; i < length; ++i) {
        if (remaining == 0) {
            remaining = 1 + static_cast<int>(rng.below(2 * mean_run - 1));
            level = (level < 0.5) ? 0.66 : 0.34;
        }
        profile[i] = level;
        --remaining;
    }
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) field[y * w + x] = profile[vertical ? x : y];
    return detail::field_to_image(field, h, w, 0.2, rng);
}

// A deterministic family of visually distinct textures with matched global
// statistics. Configurations cycle with rescaled parameters past ten.
inline std::vector<Image> make_texture_set(int count, int h, int w, std::uint64_t seed) {
    std::vector<Image> out;
    out.reserve(count);
    for (int t = 0; t < count; ++t) {
        Rng rng = Rng(seed).stream(100 + static_cast<std::uint64_t>(t));
        const int variant = t % 10;
        const double grow = 1.0 + 0.35 * (t / 10);
        switch (variant) {
            case 0: out.push_back(make_grating(h, w, 7.0 * grow, 0.0, rng)); break;
            case 1: out.push_back(make_grating(h, w, 19.0 * grow, 1.5707963267948966, rng)); break;
            case 2: out.push_back(make_grating(h, w, 11.0 * grow, 0.7853981633974483, rng)); break;
            case 3: out.push_back(make_checkerboard(h, w, std::max(2, static_cast<int>(5 * grow)), rng)); break;
            case 4: out.push_back(make_checkerboard(h, w, std::max(2, static_cast<int>(13 * grow)), rng)); break;
            case 5: out.push_back(make_filtered_noise(h, w, 1.2 * grow, rng)); break;
            case 6: out.push_back(make_filtered_noise(h, w, 5.0 * grow, rng)); break;
            case 7: out.push_back(make_spots(h, w, 7.0 * grow, rng)); break;
            case 8: out.push_back(make_stripes(h, w, std::max(2, static_cast<int>(9 * grow)), true, rng)); break;
            default: out.push_back(make_stripes(h, w, std::max(2, static_cast<int>(17 * grow)), false, rng)); break;
        }
    }
    return out;
}

}  // namespace texsynth
