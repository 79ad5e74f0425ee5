#pragma once

// 8x8 block DCT-II (orthonormal), zigzag-ordered coefficient planes and the
// high-frequency residual obtained by dropping the lowest planes.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "freqsp/error.hpp"
#include "freqsp/media.hpp"

namespace freqsp::freq {

using media::ColorSpace;
using media::Frame;

inline constexpr int kBlock = 8;
inline constexpr int kPlanes = kBlock * kBlock;

// zigzag()[i] is the row-major index (v * 8 + u) of the i-th lowest frequency.
inline const std::array<int, kPlanes>& zigzag() {
    static const std::array<int, kPlanes> table = [] {
        std::array<int, kPlanes> t{};
        int i = 0;
        for (int s = 0; s < 2 * kBlock - 1; ++s) {
            if (s % 2 == 0) {
                for (int r = std::min(s, kBlock - 1); r >= 0 && s - r < kBlock; --r)
                    t[i++] = r * kBlock + (s - r);
            } else {
                for (int c = std::min(s, kBlock - 1); c >= 0 && s - c < kBlock; --c)
                    t[i++] = (s - c) * kBlock + c;
            }
        }
        return t;
    }();
    return table;
}

// basis()[u][x] = a(u) cos((2x + 1) u pi / 16)
inline const std::array<std::array<double, kBlock>, kBlock>& basis() {
    static const auto table = [] {
        std::array<std::array<double, kBlock>, kBlock> b{};
        for (int u = 0; u < kBlock; ++u) {
            const double a = u == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
            for (int x = 0; x < kBlock; ++x)
                b[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / (2.0 * kBlock));
        }
        return b;
    }();
    return table;
}

// In-place 2-D transforms of one row-major 8x8 block.
inline void dct8x8(std::array<double, kPlanes>& blk) {
    const auto& b = basis();
    std::array<double, kPlanes> tmp{};
    for (int y = 0; y < kBlock; ++y)
        for (int u = 0; u < kBlock; ++u) {
            double s = 0;
            for (int x = 0; x < kBlock; ++x) s += b[u][x] * blk[y * kBlock + x];
            tmp[y * kBlock + u] = s;
        }
    for (int v = 0; v < kBlock; ++v)
        for (int u = 0; u < kBlock; ++u) {
            double s = 0;
            for (int y = 0; y < kBlock; ++y) s += b[v][y] * tmp[y * kBlock + u];
            blk[v * kBlock + u] = s;
        }
}

inline void idct8x8(std::array<double, kPlanes>& blk) {
    const auto& b = basis();
    std::array<double, kPlanes> tmp{};
    for (int v = 0; v < kBlock; ++v)
        for (int x = 0; x < kBlock; ++x) {
            double s = 0;
            for (int u = 0; u < kBlock; ++u) s += b[u][x] * blk[v * kBlock + u];
            tmp[v * kBlock + x] = s;
        }
    for (int y = 0; y < kBlock; ++y)
        for (int x = 0; x < kBlock; ++x) {
            double s = 0;
            for (int v = 0; v < kBlock; ++v) s += b[v][y] * tmp[v * kBlock + x];
            blk[y * kBlock + x] = s;
        }
}

// 64 coefficient planes per source channel, each (height/8) x (width/8).
// Plane p of channel c holds the zigzag()[p] coefficient of every block.
class FreqMap {
public:
    FreqMap() = default;
    FreqMap(int source_channels, int blocks_y, int blocks_x, ColorSpace cs = ColorSpace::YCbCr)
        : channels_(source_channels), blocks_y_(blocks_y), blocks_x_(blocks_x), colorspace_(cs),
          data_(static_cast<size_t>(source_channels) * kPlanes * blocks_y * blocks_x, 0.0) {}

    int source_channels() const noexcept { return channels_; }
    int planes() const noexcept { return channels_ * kPlanes; }
    int blocks_y() const noexcept { return blocks_y_; }
    int blocks_x() const noexcept { return blocks_x_; }
    ColorSpace colorspace() const noexcept { return colorspace_; }

    double& at(int plane, int by, int bx) { return data_[index(plane, by, bx)]; }
    double at(int plane, int by, int bx) const { return data_[index(plane, by, bx)]; }

    std::span<double> plane(int p) {
        return {data_.data() + static_cast<size_t>(p) * blocks_y_ * blocks_x_,
                static_cast<size_t>(blocks_y_) * blocks_x_};
    }

    const std::vector<double>& data() const noexcept { return data_; }

private:
    size_t index(int p, int by, int bx) const noexcept {
        return (static_cast<size_t>(p) * blocks_y_ + by) * blocks_x_ + bx;
    }

    int channels_ = 0;
    int blocks_y_ = 0;
    int blocks_x_ = 0;
    ColorSpace colorspace_ = ColorSpace::YCbCr;
    std::vector<double> data_;
};

inline FreqMap block_dct(const Frame& f) {
    detail::require(f.width() % kBlock == 0 && f.height() % kBlock == 0,
                    "block_dct needs dimensions divisible by 8");
    const auto& zz = zigzag();
    FreqMap m(f.channels(), f.height() / kBlock, f.width() / kBlock, f.colorspace());
    std::array<double, kPlanes> blk{};
    for (int c = 0; c < f.channels(); ++c)
        for (int by = 0; by < m.blocks_y(); ++by)
            for (int bx = 0; bx < m.blocks_x(); ++bx) {
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x)
                        blk[y * kBlock + x] = f.at(c, by * kBlock + y, bx * kBlock + x);
                dct8x8(blk);
                for (int p = 0; p < kPlanes; ++p) m.at(c * kPlanes + p, by, bx) = blk[zz[p]];
            }
    return m;
}

inline Frame block_idct(const FreqMap& m) {
    const auto& zz = zigzag();
    Frame f(m.blocks_x() * kBlock, m.blocks_y() * kBlock, m.colorspace());
    std::array<double, kPlanes> blk{};
    for (int c = 0; c < m.source_channels(); ++c)
        for (int by = 0; by < m.blocks_y(); ++by)
            for (int bx = 0; bx < m.blocks_x(); ++bx) {
                for (int p = 0; p < kPlanes; ++p) blk[zz[p]] = m.at(c * kPlanes + p, by, bx);
                idct8x8(blk);
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x)
                        f.at(c, by * kBlock + y, bx * kBlock + x) = blk[y * kBlock + x];
            }
    return f;
}

// Edge-replicating pad up to the next multiple of 8 in each axis.
inline Frame pad_to_block(const Frame& f) {
    const int w = (f.width() + kBlock - 1) / kBlock * kBlock;
    const int h = (f.height() + kBlock - 1) / kBlock * kBlock;
    if (w == f.width() && h == f.height()) return f;
    Frame out(w, h, f.colorspace());
    for (int c = 0; c < f.channels(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = f.at(c, std::min(y, f.height() - 1), std::min(x, f.width() - 1));
    return out;
}

inline Frame crop(const Frame& f, int width, int height) {
    if (f.width() == width && f.height() == height) return f;
    Frame out(width, height, f.colorspace());
    for (int c = 0; c < f.channels(); ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out.at(c, y, x) = f.at(c, y, x);
    return out;
}

// Signed high-frequency residual in Y, Cb, Cr: the first `removed_planes`
// zigzag planes of every channel group are zeroed before the inverse
// transform. Not clamped.
inline Frame extract_hf(const Frame& f, int removed_planes = 1) {
    detail::require(removed_planes >= 0 && removed_planes <= kPlanes,
                    "removed_planes must lie in [0, 64]");
    const Frame padded = pad_to_block(media::to_ycbcr(f));
    FreqMap m = block_dct(padded);
    for (int c = 0; c < m.source_channels(); ++c)
        for (int p = 0; p < removed_planes; ++p)
            for (auto& v : m.plane(c * kPlanes + p)) v = 0.0;
    return crop(block_idct(m), f.width(), f.height());
}

} // namespace freqsp::freq
