#pragma once

// Encoder and quality-metric adapters. The external encoder and VMAF run as
// subprocesses; PSNR and SSIM are native. The synthetic encoder is a closed
// form stand-in used for hermetic runs:
//
//   bitrate = 1000 c 2^((27 - crf) / 6) (1 + 0.25 level)
//   quality = clamp(95 - 2.2 (crf - 21) + g level - h level^2, 0, 100)
//
// with g = 6c and h = 2c + 1 unless overridden.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "freqsp/error.hpp"
#include "freqsp/freq.hpp"
#include "freqsp/media.hpp"
#include "freqsp/process.hpp"

namespace freqsp::codec {

using media::Frame;
using media::Video;

struct EncodeResult {
    double bitrate_kbps = 0.0;
    double quality = 0.0;
    std::string metric;
    int crf = 0;
    double level = 0.0;

    friend bool operator==(const EncodeResult&, const EncodeResult&) = default;
};

inline void to_json(nlohmann::json& j, const EncodeResult& r) {
    j = {{"bitrate_kbps", r.bitrate_kbps}, {"quality", r.quality}, {"metric", r.metric},
         {"crf", r.crf}, {"level", r.level}};
}

inline void from_json(const nlohmann::json& j, EncodeResult& r) {
    j.at("bitrate_kbps").get_to(r.bitrate_kbps);
    j.at("quality").get_to(r.quality);
    j.at("metric").get_to(r.metric);
    j.at("crf").get_to(r.crf);
    j.at("level").get_to(r.level);
}

// ---------------------------------------------------------------------------
// Native metrics (luma only)

inline constexpr double kPsnrCap = 99.0;

inline void check_comparable(const Video& a, const Video& b) {
    a.validate();
    b.validate();
    if (a.frames.size() != b.frames.size() || !a.frames.front().same_shape(b.frames.front()))
        throw ContractError("metric inputs differ in frame count or dimensions");
}

inline double psnr_frame(const Frame& a, const Frame& b) {
    const auto ya = media::luma_plane(a), yb = media::luma_plane(b);
    double se = 0.0;
    for (size_t i = 0; i < ya.size(); ++i) se += (ya[i] - yb[i]) * (ya[i] - yb[i]);
    const double mse = se / static_cast<double>(ya.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline double psnr(const Video& a, const Video& b) {
    check_comparable(a, b);
    double sum = 0.0;
    for (size_t i = 0; i < a.frames.size(); ++i) sum += psnr_frame(a.frames[i], b.frames[i]);
    return sum / static_cast<double>(a.frames.size());
}

// Mean SSIM over every 8x8 window (stride 1) of the luma plane, dynamic range 1.
inline double ssim_frame(const Frame& a, const Frame& b) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto ya = media::luma_plane(a), yb = media::luma_plane(b);
    const int w = a.width(), h = a.height();
    const int ww = std::min(8, w), wh = std::min(8, h);
    const double n = static_cast<double>(ww) * wh;
    double total = 0.0;
    long windows = 0;
    for (int y0 = 0; y0 + wh <= h; ++y0)
        for (int x0 = 0; x0 + ww <= w; ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = y0; y < y0 + wh; ++y)
                for (int x = x0; x < x0 + ww; ++x) {
                    const double pa = ya[static_cast<size_t>(y) * w + x];
                    const double pb = yb[static_cast<size_t>(y) * w + x];
                    sa += pa;
                    sb += pb;
                    saa += pa * pa;
                    sbb += pb * pb;
                    sab += pa * pb;
                }
            const double ma = sa / n, mb = sb / n;
            const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    return total / static_cast<double>(windows);
}

inline double ssim(const Video& a, const Video& b) {
    check_comparable(a, b);
    double sum = 0.0;
    for (size_t i = 0; i < a.frames.size(); ++i) sum += ssim_frame(a.frames[i], b.frames[i]);
    return sum / static_cast<double>(a.frames.size());
}

// ---------------------------------------------------------------------------
// VMAF via the external command-line tool

// 8-bit 4:4:4 Y4M, the input format the VMAF tool reads directly.
inline void write_y4m(const Video& v, const std::filesystem::path& path) {
    v.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string());
    const long fps_num = std::lround(v.frame_rate * 1000.0);
    out << "YUV4MPEG2 W" << v.width() << " H" << v.height() << " F" << fps_num
        << ":1000 Ip A1:1 C444\n";
    std::vector<char> buf;
    for (const auto& f : v.frames) {
        const Frame ycc = media::to_ycbcr(f);
        out << "FRAME\n";
        buf.resize(ycc.data().size());
        std::transform(ycc.data().begin(), ycc.data().end(), buf.begin(),
                       [](double s) { return static_cast<char>(media::quantize(s)); });
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
}

inline double parse_vmaf_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        return j.at("pooled_metrics").at("vmaf").at("mean").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw AdapterError(std::string("cannot parse VMAF output: ") + e.what(), text);
    }
}

inline double vmaf(const Video& reference, const Video& distorted, const std::string& binary,
                   std::chrono::milliseconds timeout = std::chrono::seconds(600)) {
    check_comparable(reference, distorted);
    if (!process::available(binary)) throw AdapterUnavailable("VMAF tool not found: " + binary);
    process::TempDir tmp("freqsp-vmaf");
    const auto ref = tmp.path() / "reference.y4m", dist = tmp.path() / "distorted.y4m",
               json = tmp.path() / "vmaf.json";
    write_y4m(reference, ref);
    write_y4m(distorted, dist);
    const std::string cmd = process::shell_quote(binary) + " --reference " +
                            process::shell_quote(ref.string()) + " --distorted " +
                            process::shell_quote(dist.string()) + " --json --output " +
                            process::shell_quote(json.string());
    const auto r = process::run(cmd, timeout);
    if (r.timed_out) throw AdapterError("VMAF tool timed out", r.output);
    if (r.exit_code == 127) throw AdapterUnavailable("VMAF tool could not be executed", r.output);
    if (r.exit_code != 0)
        throw AdapterError("VMAF tool exited with code " + std::to_string(r.exit_code), r.output);
    std::ifstream in(json);
    if (!in) throw AdapterError("VMAF tool wrote no output file", r.output);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_vmaf_json(ss.str());
}

enum class MetricKind { PSNR, SSIM, VMAF };

inline const char* to_string(MetricKind k) {
    switch (k) {
    case MetricKind::PSNR: return "psnr";
    case MetricKind::SSIM: return "ssim";
    case MetricKind::VMAF: return "vmaf";
    }
    return "?";
}

inline MetricKind parse_metric(const std::string& s) {
    if (s == "psnr") return MetricKind::PSNR;
    if (s == "ssim") return MetricKind::SSIM;
    if (s == "vmaf") return MetricKind::VMAF;
    throw ConfigError("unknown metric '" + s + "' (expected psnr, ssim or vmaf)");
}

struct MetricAdapter {
    MetricKind kind = MetricKind::PSNR;
    std::string vmaf_binary = "vmaf";
    std::chrono::milliseconds timeout = std::chrono::seconds(600);

    std::string name() const { return to_string(kind); }

    double measure(const Video& reference, const Video& distorted) const {
        switch (kind) {
        case MetricKind::PSNR: return psnr(reference, distorted);
        case MetricKind::SSIM: return ssim(reference, distorted);
        case MetricKind::VMAF: return vmaf(reference, distorted, vmaf_binary, timeout);
        }
        throw ContractError("unknown metric kind");
    }
};

// ---------------------------------------------------------------------------
// Synthetic encoder

struct SyntheticPoint {
    double bitrate_kbps;
    double quality;
};

struct SyntheticParams {
    std::optional<double> complexity;   // measured from the source video when unset
    std::optional<double> quality_gain; // g, default 6c
    std::optional<double> curvature;    // h, default 2c + 1
};

inline double default_gain(double c) { return 6.0 * c; }
inline double default_curvature(double c) { return 2.0 * c + 1.0; }

inline SyntheticPoint synthetic_model(double level, int crf, double c, std::optional<double> gain = {},
                                      std::optional<double> curvature = {}) {
    if (!(level >= 0.0 && level <= 4.0)) throw ContractError("synthetic model: level outside [0, 4]");
    if (crf < 0 || crf > 51) throw ContractError("synthetic model: crf outside [0, 51]");
    if (!(c > 0.0 && c <= 1.0)) throw ContractError("synthetic model: complexity outside (0, 1]");
    const double g = gain.value_or(default_gain(c));
    const double h = curvature.value_or(default_curvature(c));
    const double bitrate = 1000.0 * c * std::exp2((27.0 - crf) / 6.0) * (1.0 + 0.25 * level);
    const double quality =
        std::clamp(95.0 - 2.2 * (crf - 21) + g * level - h * level * level, 0.0, 100.0);
    return {bitrate, quality};
}

// Luma high-frequency RMS, scaled so that noise with a 0.1 standard deviation
// maps to 1 and clamped to [0.01, 1].
inline double spatial_complexity(const Video& v) {
    v.validate();
    double se = 0.0;
    size_t n = 0;
    for (const auto& f : v.frames) {
        const Frame hf = freq::extract_hf(f);
        for (double s : hf.plane(0)) se += s * s;
        n += hf.plane_size();
    }
    return std::clamp(10.0 * std::sqrt(se / static_cast<double>(n)), 0.01, 1.0);
}

// ---------------------------------------------------------------------------
// Encoder adapter

enum class EncoderKind { External, Synthetic };
enum class QualityReference { Source, Sharpened };

struct EncoderAdapter {
    EncoderKind kind = EncoderKind::Synthetic;
    // External only. `command_template` encodes {input} (raw video) to
    // {output} at {crf}; `decode_template` turns {input} (the bitstream) back
    // into a raw video at {output}. Without a decode template the encoder's
    // output is read as a raw video directly.
    std::string command_template;
    std::string decode_template;
    std::chrono::milliseconds timeout = std::chrono::seconds(600);
    MetricAdapter metric;
    QualityReference quality_reference = QualityReference::Sharpened;
    SyntheticParams synthetic;

    void validate() const {
        if (kind != EncoderKind::External) return;
        for (const char* ph : {"{input}", "{output}", "{crf}"})
            if (command_template.find(ph) == std::string::npos)
                throw ConfigError(std::string("encoder command template lacks ") + ph);
        if (!decode_template.empty())
            for (const char* ph : {"{input}", "{output}"})
                if (decode_template.find(ph) == std::string::npos)
                    throw ConfigError(std::string("decode template lacks ") + ph);
    }
};

// What the encoder is told about the video beyond its pixels.
struct EncodeContext {
    double level = 0.0;
    const Video* source = nullptr; // unsharpened input, when known
};

inline std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
    for (size_t pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size()))
        tmpl.replace(pos, key.size(), value);
    return tmpl;
}

namespace detail_codec {

inline process::Result run_checked(const std::string& cmd, std::chrono::milliseconds timeout,
                                   const char* what) {
    auto r = process::run(cmd, timeout);
    if (r.timed_out) throw AdapterError(std::string(what) + " timed out: " + cmd, r.output);
    if (r.exit_code != 0)
        throw AdapterError(std::string(what) + " failed with exit code " +
                               std::to_string(r.exit_code) + ": " + cmd,
                           r.output);
    return r;
}

} // namespace detail_codec

inline EncodeResult encode_measure(const Video& v, int crf, const EncoderAdapter& a,
                                   const EncodeContext& ctx = {}) {
    detail::require(!v.frames.empty(), "encode_measure: video has no frames");
    v.validate();
    a.validate();
    EncodeResult res;
    res.crf = crf;
    res.level = ctx.level;
    const Video& reference =
        a.quality_reference == QualityReference::Source && ctx.source ? *ctx.source : v;

    if (a.kind == EncoderKind::Synthetic) {
        const double c = a.synthetic.complexity ? *a.synthetic.complexity
                                                : spatial_complexity(ctx.source ? *ctx.source : v);
        const auto p = synthetic_model(ctx.level, crf, c, a.synthetic.quality_gain, a.synthetic.curvature);
        res.bitrate_kbps = p.bitrate_kbps;
        res.quality = p.quality;
        res.metric = "synthetic";
        return res;
    }

    if (crf < 0 || crf > 51) throw ContractError("crf outside [0, 51]");
    process::TempDir tmp("freqsp-enc");
    const auto input = tmp.path() / "input.raw", encoded = tmp.path() / "encoded.bin",
               decoded = tmp.path() / "decoded.raw";
    media::store_raw(v, input);
    std::string cmd = substitute(a.command_template, "{input}", process::shell_quote(input.string()));
    cmd = substitute(cmd, "{output}", process::shell_quote(encoded.string()));
    cmd = substitute(cmd, "{crf}", std::to_string(crf));
    detail_codec::run_checked(cmd, a.timeout, "encoder");
    if (!std::filesystem::exists(encoded))
        throw AdapterError("encoder produced no output file: " + cmd);

    const double seconds = static_cast<double>(v.frames.size()) / v.frame_rate;
    res.bitrate_kbps = static_cast<double>(std::filesystem::file_size(encoded)) * 8.0 / seconds / 1000.0;
    if (!(res.bitrate_kbps > 0.0)) throw AdapterError("encoder produced an empty bitstream: " + cmd);

    auto decoded_path = encoded;
    if (!a.decode_template.empty()) {
        std::string dcmd = substitute(a.decode_template, "{input}", process::shell_quote(encoded.string()));
        dcmd = substitute(dcmd, "{output}", process::shell_quote(decoded.string()));
        detail_codec::run_checked(dcmd, a.timeout, "decoder");
        decoded_path = decoded;
    }
    Video out;
    try {
        out = media::load_raw(decoded_path);
    } catch (const IoError& e) {
        throw AdapterError(std::string("cannot read decoded video: ") + e.what());
    }
    out.frame_rate = v.frame_rate;
    res.quality = a.metric.measure(reference, out);
    res.metric = a.metric.name();
    if (!std::isfinite(res.quality)) throw AdapterError("metric returned a non-finite score");
    return res;
}

} // namespace freqsp::codec
