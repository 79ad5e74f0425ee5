#pragma once

// Unsharp masking: out = I + amount * (I - lowpass(I)), with a separable box
// low-pass and replicated borders.

#include <algorithm>
#include <cmath>
#include <vector>

#include "freqsp/error.hpp"
#include "freqsp/media.hpp"

namespace freqsp::sharpen {

using media::ColorSpace;
using media::Frame;
using media::Video;

enum class Target { LumaOnly, AllChannels };

struct UsmParams {
    double amount = 0.0;
    int kernel = 5;
    Target target = Target::LumaOnly;

    void validate() const {
        detail::require(kernel % 2 == 1 && kernel >= 3 && kernel <= 13,
                        "usm kernel must be odd and within [3, 13]");
        detail::require(std::isfinite(amount) && amount >= 0.0 && amount <= 4.0,
                        "usm amount must lie in [0, 4]");
    }
};

namespace detail_usm {

// Mean over the k-window of (v[i] - v[j]) with replicated borders, computed
// from differences so that a constant signal yields exactly zero.
inline void row_detail(std::span<const double> in, std::span<double> out, int width, int height,
                       int k) {
    const int r = k / 2;
    for (int y = 0; y < height; ++y) {
        const double* row = in.data() + static_cast<size_t>(y) * width;
        double* dst = out.data() + static_cast<size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += row[x] - row[std::clamp(x + d, 0, width - 1)];
            dst[x] = acc / k;
        }
    }
}

inline void col_detail(std::span<const double> in, std::span<double> out, int width, int height,
                       int k) {
    const int r = k / 2;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double c = in[static_cast<size_t>(y) * width + x];
            double acc = 0.0;
            for (int d = -r; d <= r; ++d)
                acc += c - in[static_cast<size_t>(std::clamp(y + d, 0, height - 1)) * width + x];
            out[static_cast<size_t>(y) * width + x] = acc / k;
        }
    }
}

} // namespace detail_usm

// Detail layer I - I_lp of one plane. The 2-D box mean factors as row mean R
// then column mean C, so I - C(R(I)) = (I - R(I)) + (R(I) - C(R(I))).
inline std::vector<double> detail_layer(std::span<const double> plane, int width, int height,
                                        int k) {
    detail::require(k % 2 == 1 && k >= 1, "lowpass kernel size must be odd");
    std::vector<double> row_d(plane.size()), rowmean(plane.size()), col_d(plane.size());
    detail_usm::row_detail(plane, row_d, width, height, k);
    for (size_t i = 0; i < plane.size(); ++i) rowmean[i] = plane[i] - row_d[i];
    detail_usm::col_detail(rowmean, col_d, width, height, k);
    for (size_t i = 0; i < plane.size(); ++i) row_d[i] += col_d[i];
    return row_d;
}

// k x k box mean of every channel with replicated borders.
inline Frame lowpass(const Frame& f, int k) {
    detail::require(k % 2 == 1 && k >= 1, "lowpass kernel size must be odd");
    Frame out = f;
    for (int c = 0; c < f.channels(); ++c) {
        const auto d = detail_layer(f.plane(c), f.width(), f.height(), k);
        auto dst = out.plane(c);
        auto src = f.plane(c);
        for (size_t i = 0; i < d.size(); ++i) dst[i] = src[i] - d[i];
    }
    return out;
}

// Sharpened samples before clamping. Luma-only on an RGB frame adds the luma
// detail to all three channels, which is what converting to YCbCr, sharpening
// Y and converting back does (the inverse transform has unit luma weights).
inline Frame usm_unclamped(const Frame& f, const UsmParams& p) {
    p.validate();
    Frame out = f;
    if (p.amount == 0.0) return out;
    if (p.target == Target::AllChannels) {
        for (int c = 0; c < f.channels(); ++c) {
            const auto d = detail_layer(f.plane(c), f.width(), f.height(), p.kernel);
            auto dst = out.plane(c);
            for (size_t i = 0; i < d.size(); ++i) dst[i] += p.amount * d[i];
        }
        return out;
    }
    if (f.colorspace() == ColorSpace::YCbCr) {
        const auto d = detail_layer(f.plane(0), f.width(), f.height(), p.kernel);
        auto y = out.plane(0);
        for (size_t i = 0; i < d.size(); ++i) y[i] += p.amount * d[i];
        return out;
    }
    const auto y = media::luma_plane(f);
    const auto d = detail_layer(y, f.width(), f.height(), p.kernel);
    for (int c = 0; c < 3; ++c) {
        auto dst = out.plane(c);
        for (size_t i = 0; i < d.size(); ++i) dst[i] += p.amount * d[i];
    }
    return out;
}

inline Frame usm(const Frame& f, const UsmParams& p) {
    Frame out = usm_unclamped(f, p);
    if (p.amount != 0.0) out.clamp();
    return out;
}

inline Video usm_video(const Video& v, const UsmParams& p) {
    p.validate();
    Video out;
    out.frame_rate = v.frame_rate;
    out.frames.reserve(v.frames.size());
    for (const auto& f : v.frames) out.frames.push_back(usm(f, p));
    return out;
}

} // namespace freqsp::sharpen
