#pragma once

// Frame and video containers, BT.601 full-range color conversion and the two
// on-disk video formats (raw planar 8-bit with a text header, PNG sequence).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "freqsp/error.hpp"

namespace freqsp::media {

enum class ColorSpace { RGB, YCbCr };

inline const char* to_string(ColorSpace cs) {
    return cs == ColorSpace::RGB ? "RGB" : "YCbCr";
}

// Planar, channel-major frame. YCbCr channels are stored in Y, Cb, Cr order.
class Frame {
public:
    static constexpr int kChannels = 3;

    Frame() = default;
    Frame(int width, int height, ColorSpace cs = ColorSpace::RGB, double fill = 0.0)
        : width_(width), height_(height), colorspace_(cs) {
        detail::require(width > 0 && height > 0, "frame dimensions must be positive");
        data_.assign(static_cast<size_t>(width) * height * kChannels, fill);
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return kChannels; }
    ColorSpace colorspace() const noexcept { return colorspace_; }
    void set_colorspace(ColorSpace cs) noexcept { colorspace_ = cs; }
    size_t plane_size() const noexcept { return static_cast<size_t>(width_) * height_; }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Frame& o) const noexcept {
        return width_ == o.width_ && height_ == o.height_;
    }

    void clamp() {
        for (auto& v : data_) v = std::clamp(v, 0.0, 1.0);
    }

    friend bool operator==(const Frame&, const Frame&) = default;

private:
    size_t index(int c, int y, int x) const noexcept {
        return (static_cast<size_t>(c) * height_ + y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    ColorSpace colorspace_ = ColorSpace::RGB;
    std::vector<double> data_;
};

struct Video {
    std::vector<Frame> frames;
    double frame_rate = 30.0;

    int width() const { return frames.empty() ? 0 : frames.front().width(); }
    int height() const { return frames.empty() ? 0 : frames.front().height(); }
    size_t size() const noexcept { return frames.size(); }

    // Throws ContractError when the container invariants do not hold.
    void validate() const {
        detail::require(!frames.empty(), "video has no frames");
        detail::require(frame_rate > 0 && std::isfinite(frame_rate), "frame rate must be positive");
        for (const auto& f : frames) {
            detail::require(f.same_shape(frames.front()) &&
                                f.colorspace() == frames.front().colorspace(),
                            "video frames differ in size or colorspace");
        }
    }
};

// Full-range BT.601. Luma weights; the chroma scales follow from them so the
// inverse below is exact up to rounding.
inline constexpr double kKr = 0.299;
inline constexpr double kKb = 0.114;
inline constexpr double kKg = 1.0 - kKr - kKb;

inline double luma(double r, double g, double b) { return kKr * r + kKg * g + kKb * b; }

inline Frame rgb_to_ycbcr(const Frame& f) {
    detail::require(f.colorspace() == ColorSpace::RGB, "rgb_to_ycbcr expects an RGB frame");
    Frame out(f.width(), f.height(), ColorSpace::YCbCr);
    auto r = f.plane(0), g = f.plane(1), b = f.plane(2);
    auto y = out.plane(0), cb = out.plane(1), cr = out.plane(2);
    for (size_t i = 0; i < r.size(); ++i) {
        const double yy = luma(r[i], g[i], b[i]);
        y[i] = yy;
        cb[i] = 0.5 + (b[i] - yy) / (2.0 * (1.0 - kKb));
        cr[i] = 0.5 + (r[i] - yy) / (2.0 * (1.0 - kKr));
    }
    out.clamp();
    return out;
}

inline Frame ycbcr_to_rgb(const Frame& f) {
    detail::require(f.colorspace() == ColorSpace::YCbCr, "ycbcr_to_rgb expects a YCbCr frame");
    Frame out(f.width(), f.height(), ColorSpace::RGB);
    auto y = f.plane(0), cb = f.plane(1), cr = f.plane(2);
    auto r = out.plane(0), g = out.plane(1), b = out.plane(2);
    for (size_t i = 0; i < y.size(); ++i) {
        const double rr = y[i] + 2.0 * (1.0 - kKr) * (cr[i] - 0.5);
        const double bb = y[i] + 2.0 * (1.0 - kKb) * (cb[i] - 0.5);
        r[i] = rr;
        b[i] = bb;
        g[i] = (y[i] - kKr * rr - kKb * bb) / kKg;
    }
    out.clamp();
    return out;
}

inline Frame to_rgb(const Frame& f) {
    return f.colorspace() == ColorSpace::RGB ? f : ycbcr_to_rgb(f);
}

inline Frame to_ycbcr(const Frame& f) {
    return f.colorspace() == ColorSpace::YCbCr ? f : rgb_to_ycbcr(f);
}

// Luma plane of a frame in either colorspace.
inline std::vector<double> luma_plane(const Frame& f) {
    if (f.colorspace() == ColorSpace::YCbCr) {
        auto y = f.plane(0);
        return {y.begin(), y.end()};
    }
    std::vector<double> out(f.plane_size());
    auto r = f.plane(0), g = f.plane(1), b = f.plane(2);
    for (size_t i = 0; i < out.size(); ++i) out[i] = luma(r[i], g[i], b[i]);
    return out;
}

inline uint8_t quantize(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline double dequantize(uint8_t v) { return v / 255.0; }

// ---------------------------------------------------------------------------
// File formats

enum class VideoFormat { Raw, PngSequence };

// Directories are PNG sequences, anything else is the raw format.
inline VideoFormat detect_format(const std::filesystem::path& p) {
    return std::filesystem::is_directory(p) ? VideoFormat::PngSequence : VideoFormat::Raw;
}

namespace detail_io {

inline std::string png_name(size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06zu.png", index);
    return buf;
}

inline void write_png(const std::filesystem::path& path, const Frame& rgb) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(rgb.width());
    img.height = static_cast<png_uint_32>(rgb.height());
    img.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> buf(rgb.plane_size() * 3);
    for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x)
            for (int c = 0; c < 3; ++c)
                buf[(static_cast<size_t>(y) * rgb.width() + x) * 3 + c] = quantize(rgb.at(c, y, x));
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot write " + path.string() + ": " + msg);
    }
}

inline Frame read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw IoError("cannot read " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode " + path.string() + ": " + msg);
    }
    Frame f(static_cast<int>(img.width), static_cast<int>(img.height));
    for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x)
            for (int c = 0; c < 3; ++c)
                f.at(c, y, x) = dequantize(buf[(static_cast<size_t>(y) * f.width() + x) * 3 + c]);
    return f;
}

} // namespace detail_io

// Raw layout: ASCII header "W H C FPS N\n", then N*W*H*C bytes, each frame
// channel-major (all of R, then G, then B). Frames are written as RGB.
inline void store_raw(const Video& v, const std::filesystem::path& path) {
    v.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    std::ostringstream hdr;
    hdr.precision(17);
    hdr << v.width() << ' ' << v.height() << ' ' << 3 << ' ' << v.frame_rate << ' '
        << v.frames.size() << '\n';
    out << hdr.str();
    std::vector<char> buf;
    for (const auto& f : v.frames) {
        const Frame rgb = to_rgb(f);
        buf.resize(rgb.data().size());
        std::transform(rgb.data().begin(), rgb.data().end(), buf.begin(),
                       [](double s) { return static_cast<char>(quantize(s)); });
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw IoError("short write to " + path.string());
}

inline Video load_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw IoError("missing header in " + path.string());
    std::istringstream hs(header);
    long w = 0, h = 0, c = 0, n = 0;
    double fps = 0;
    std::string extra;
    if (!(hs >> w >> h >> c >> fps >> n) || (hs >> extra) || w <= 0 || h <= 0 || c != 3 ||
        n <= 0 || !(fps > 0) || !std::isfinite(fps))
        throw IoError("malformed raw header in " + path.string() + ": '" + header + "'");
    Video v;
    v.frame_rate = fps;
    const size_t frame_bytes = static_cast<size_t>(w) * h * 3;
    std::vector<char> buf(frame_bytes);
    for (long i = 0; i < n; ++i) {
        if (!in.read(buf.data(), static_cast<std::streamsize>(frame_bytes)))
            throw IoError("truncated raw video " + path.string());
        Frame f(static_cast<int>(w), static_cast<int>(h));
        std::transform(buf.begin(), buf.end(), f.data().begin(),
                       [](char b) { return dequantize(static_cast<uint8_t>(b)); });
        v.frames.push_back(std::move(f));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError("trailing bytes after last frame in " + path.string());
    return v;
}

inline void store_png_sequence(const Video& v, const std::filesystem::path& dir) {
    v.validate();
    std::filesystem::create_directories(dir);
    for (size_t i = 0; i < v.frames.size(); ++i)
        detail_io::write_png(dir / detail_io::png_name(i), to_rgb(v.frames[i]));
}

inline Video load_png_sequence(const std::filesystem::path& dir, double frame_rate = 30.0) {
    if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("frame_", 0) == 0 && e.path().extension() == ".png")
            files.push_back(e.path());
    }
    if (files.empty()) throw IoError("no frames in " + dir.string());
    std::sort(files.begin(), files.end());
    Video v;
    v.frame_rate = frame_rate;
    for (const auto& p : files) {
        Frame f = detail_io::read_png(p);
        if (!v.frames.empty() && !f.same_shape(v.frames.front()))
            throw IoError("dimension mismatch: " + p.filename().string() + " differs from first frame");
        v.frames.push_back(std::move(f));
    }
    return v;
}

inline Video load_video(const std::filesystem::path& path) {
    return detect_format(path) == VideoFormat::PngSequence ? load_png_sequence(path) : load_raw(path);
}

inline Video load_video(const std::filesystem::path& path, VideoFormat fmt) {
    return fmt == VideoFormat::PngSequence ? load_png_sequence(path) : load_raw(path);
}

inline void store_video(const Video& v, const std::filesystem::path& path, VideoFormat fmt) {
    if (fmt == VideoFormat::PngSequence)
        store_png_sequence(v, path);
    else
        store_raw(v, path);
}

// Up to `count` frames picked uniformly across the video (all when shorter).
inline Video sample_frames(const Video& v, size_t count) {
    if (count == 0 || v.frames.size() <= count) return v;
    Video out;
    out.frame_rate = v.frame_rate;
    for (size_t i = 0; i < count; ++i) out.frames.push_back(v.frames[i * v.frames.size() / count]);
    return out;
}

} // namespace freqsp::media
