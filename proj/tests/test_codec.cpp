#include <gtest/gtest.h>

#include <sys/stat.h>

#include "freqsp/codec.hpp"
#include "test_util.hpp"

using namespace freqsp;
using namespace freqsp::codec;
using namespace std::chrono_literals;

namespace {

std::filesystem::path write_script(const std::filesystem::path& dir, const std::string& name,
                                   const std::string& body) {
    const auto p = dir / name;
    std::ofstream(p) << "#!/bin/sh\n" << body << "\n";
    ::chmod(p.c_str(), 0755);
    return p;
}

// Writes `json` to the file following --output.
std::string fake_vmaf_body(const std::string& json) {
    return "while [ $# -gt 0 ]; do if [ \"$1\" = --output ]; then out=$2; fi; shift; done\n"
           "printf '%s' '" + json + "' > \"$out\"";
}

Video uniform_video(double v, int frames = 2) {
    std::vector<Frame> fs(frames, Frame(16, 16, media::ColorSpace::RGB, v));
    return testutil::video_of(fs);
}

} // namespace

TEST(Synthetic, ClosedFormValues) {
    // rate = 1000 c 2^((27-crf)/6) (1 + lambda/4); quality = 95 - 2.2 (crf-21) + g l - h l^2
    auto p = synthetic_model(0.0, 27, 1.0);
    EXPECT_DOUBLE_EQ(p.bitrate_kbps, 1000.0);
    EXPECT_NEAR(p.quality, 81.8, 1e-12);
    p = synthetic_model(0.0, 21, 1.0);
    EXPECT_DOUBLE_EQ(p.bitrate_kbps, 2000.0);
    EXPECT_NEAR(p.quality, 95.0, 1e-12);
    p = synthetic_model(1.0, 21, 1.0); // g = 6, h = 3
    EXPECT_DOUBLE_EQ(p.bitrate_kbps, 2500.0);
    EXPECT_NEAR(p.quality, 98.0, 1e-12);
    p = synthetic_model(1.0, 15, 1.0); // 95 + 13.2 + 3 clamps
    EXPECT_EQ(p.quality, 100.0);
    p = synthetic_model(4.0, 51, 1.0, 0.0); // 29 + 0 - 48 clamps
    EXPECT_EQ(p.quality, 0.0);
}

TEST(Synthetic, Monotonicity) {
    const double c = 0.4;
    for (int crf = 22; crf <= 40; ++crf) {
        EXPECT_LT(synthetic_model(1.0, crf, c).bitrate_kbps, synthetic_model(1.0, crf - 1, c).bitrate_kbps);
        EXPECT_LT(synthetic_model(1.0, crf, c).quality, synthetic_model(1.0, crf - 1, c).quality);
    }
    for (double l = 0.25; l <= 4.0; l += 0.25)
        EXPECT_GT(synthetic_model(l, 27, c).bitrate_kbps, synthetic_model(l - 0.25, 27, c).bitrate_kbps);
    // interior quality maximum at g / 2h = 2.4 / 3.6
    const double peak = 2.4 / 3.6;
    EXPECT_GT(synthetic_model(peak, 30, c).quality, synthetic_model(peak - 0.1, 30, c).quality);
    EXPECT_GT(synthetic_model(peak, 30, c).quality, synthetic_model(peak + 0.1, 30, c).quality);
    EXPECT_DOUBLE_EQ(synthetic_model(0.5, 27, 0.6).bitrate_kbps, 2 * synthetic_model(0.5, 27, 0.3).bitrate_kbps);
}

TEST(Synthetic, RangeChecks) {
    EXPECT_THROW(synthetic_model(-0.1, 27, 0.5), ContractError);
    EXPECT_THROW(synthetic_model(4.1, 27, 0.5), ContractError);
    EXPECT_THROW(synthetic_model(1.0, 52, 0.5), ContractError);
    EXPECT_THROW(synthetic_model(1.0, 27, 0.0), ContractError);
    EXPECT_THROW(synthetic_model(1.0, 27, 1.5), ContractError);
}

TEST(EncodeMeasure, SyntheticAdapterUsesClosedForm) {
    EncoderAdapter a;
    a.synthetic.complexity = 1.0;
    const auto r = encode_measure(uniform_video(0.5), 27, a);
    EXPECT_DOUBLE_EQ(r.bitrate_kbps, 1000.0);
    EXPECT_NEAR(r.quality, 81.8, 1e-12);
    EXPECT_EQ(r.metric, "synthetic");
    EXPECT_EQ(r.crf, 27);
}

TEST(EncodeMeasure, ZeroLengthVideoIsPreconditionError) {
    EXPECT_THROW(encode_measure(Video{}, 27, EncoderAdapter{}), ContractError);
}

TEST(EncodeMeasure, TemplateWithoutCrfIsConfigError) {
    EncoderAdapter a;
    a.kind = EncoderKind::External;
    a.command_template = "enc {input} -o {output}";
    EXPECT_THROW(encode_measure(uniform_video(0.5), 27, a), ConfigError);
    a.command_template = "enc {input} {crf} {output}";
    a.decode_template = "dec {input}";
    EXPECT_THROW(encode_measure(uniform_video(0.5), 27, a), ConfigError);
}

TEST(SpatialComplexity, FlatIsFloorNoisyIsHigher) {
    EXPECT_DOUBLE_EQ(spatial_complexity(uniform_video(0.3)), 0.01);
    const double lo = spatial_complexity(testutil::video_of({testutil::textured_frame(32, 32, 0.01, 1)}));
    const double hi = spatial_complexity(testutil::video_of({testutil::textured_frame(32, 32, 0.05, 1)}));
    EXPECT_GT(hi, lo);
    EXPECT_LE(hi, 1.0);
}

TEST(Metrics, PsnrExamples) {
    EXPECT_EQ(psnr(uniform_video(0.3), uniform_video(0.3)), 99.0);
    EXPECT_NEAR(psnr(uniform_video(0.0), uniform_video(0.5)), 10 * std::log10(4.0), 1e-9);
    EXPECT_NEAR(psnr(uniform_video(0.0), uniform_video(0.5)), 6.0206, 1e-4);
}

TEST(Metrics, SsimIdentityAndSymmetry) {
    const Video a = testutil::video_of({testutil::random_frame(16, 16, 1), testutil::random_frame(16, 16, 2)});
    const Video b = testutil::video_of({testutil::random_frame(16, 16, 3), testutil::random_frame(16, 16, 4)});
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LT(ssim(a, b), 0.5);
    EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
}

TEST(Metrics, MismatchedInputsAreRejected) {
    EXPECT_THROW(psnr(uniform_video(0.1, 2), uniform_video(0.1, 3)), ContractError);
    EXPECT_THROW(ssim(uniform_video(0.1), testutil::video_of({Frame(8, 8), Frame(8, 8)})), ContractError);
}

TEST(Vmaf, MissingToolIsUnavailable) {
    EXPECT_THROW(vmaf(uniform_video(0.2), uniform_video(0.2), "/nonexistent/vmaf-tool"), AdapterUnavailable);
    EXPECT_THROW(vmaf(uniform_video(0.2), uniform_video(0.2), "no-such-vmaf-binary-xyz"), AdapterUnavailable);
}

TEST(Vmaf, ParsesPooledMeanFromFakeTool) {
    process::TempDir tmp;
    const auto tool = write_script(tmp.path(), "vmaf", fake_vmaf_body(R"({"pooled_metrics":{"vmaf":{"mean":99.5}}})"));
    EXPECT_DOUBLE_EQ(vmaf(uniform_video(0.2), uniform_video(0.2), tool.string()), 99.5);
    MetricAdapter m{MetricKind::VMAF, tool.string()};
    EXPECT_DOUBLE_EQ(m.measure(uniform_video(0.2), uniform_video(0.2)), 99.5);
}

TEST(Vmaf, MalformedOutputCarriesRawText) {
    process::TempDir tmp;
    const auto tool = write_script(tmp.path(), "vmaf", fake_vmaf_body("not json at all"));
    try {
        vmaf(uniform_video(0.2), uniform_video(0.2), tool.string());
        FAIL() << "expected AdapterError";
    } catch (const AdapterUnavailable&) {
        FAIL() << "wrong error type";
    } catch (const AdapterError& e) {
        EXPECT_EQ(e.output(), "not json at all");
    }
}

TEST(Vmaf, FailingToolReportsStderr) {
    process::TempDir tmp;
    const auto tool = write_script(tmp.path(), "vmaf", "echo boom >&2; exit 4");
    try {
        vmaf(uniform_video(0.2), uniform_video(0.2), tool.string());
        FAIL() << "expected AdapterError";
    } catch (const AdapterError& e) {
        EXPECT_NE(e.output().find("boom"), std::string::npos);
    }
}

TEST(External, CopyEncoderMeasuresFileSizeAndQuality) {
    process::TempDir tmp;
    const auto enc = write_script(tmp.path(), "enc", "cp \"$1\" \"$3\"");
    EncoderAdapter a;
    a.kind = EncoderKind::External;
    a.command_template = process::shell_quote(enc.string()) + " {input} {crf} {output}";
    a.metric.kind = MetricKind::PSNR;
    Video v = uniform_video(0.4, 3);
    v.frame_rate = 30.0;
    const auto r = encode_measure(v, 27, a);
    // header "16 16 3 30 3\n" plus 3 frames of 16*16*3 bytes over 0.1 s
    const double bytes = std::string("16 16 3 30 3\n").size() + 3 * 16 * 16 * 3;
    EXPECT_NEAR(r.bitrate_kbps, bytes * 8 / 0.1 / 1000, 1e-9);
    EXPECT_GT(r.quality, 50.0);
    EXPECT_EQ(r.metric, "psnr");
}

TEST(External, DecodeTemplateIsUsed) {
    process::TempDir tmp;
    const auto enc = write_script(tmp.path(), "enc", "printf xyz > \"$3\"");
    const auto dec = write_script(tmp.path(), "dec", "printf '2 2 3 30 1\\n' > \"$2\"; head -c 12 /dev/zero >> \"$2\"");
    EncoderAdapter a;
    a.kind = EncoderKind::External;
    a.command_template = enc.string() + " {input} {crf} {output}";
    a.decode_template = dec.string() + " {input} {output}";
    std::vector<Frame> fs(1, Frame(2, 2, media::ColorSpace::RGB, 0.5));
    const auto r = encode_measure(testutil::video_of(fs), 30, a);
    EXPECT_NEAR(r.bitrate_kbps, 3 * 8 * 30 / 1000.0, 1e-12);
    EXPECT_NEAR(r.quality, 10 * std::log10(4.0), 1e-2); // decoded frame is black
}

TEST(External, FailureAndTimeoutAreAdapterErrors) {
    process::TempDir tmp;
    const auto bad = write_script(tmp.path(), "bad", "echo 'encoder exploded' >&2; exit 1");
    EncoderAdapter a;
    a.kind = EncoderKind::External;
    a.command_template = bad.string() + " {input} {crf} {output}";
    try {
        encode_measure(uniform_video(0.3), 27, a);
        FAIL() << "expected AdapterError";
    } catch (const AdapterError& e) {
        EXPECT_NE(e.output().find("encoder exploded"), std::string::npos);
    }
    const auto slow = write_script(tmp.path(), "slow", "sleep 30");
    a.command_template = slow.string() + " {input} {crf} {output}";
    a.timeout = 200ms;
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_THROW(encode_measure(uniform_video(0.3), 27, a), AdapterError);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
}

TEST(Process, ShellQuoteSurvivesQuotes) {
    const auto r = process::run("printf '%s' " + process::shell_quote("it's"), 5s);
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.output, "it's");
}

TEST(EncodeResultJson, RoundTrip) {
    const EncodeResult r{1234.5, 88.25, "PSNR", 24, 1.5};
    EXPECT_EQ(nlohmann::json(r).get<EncodeResult>(), r);
}
