#pragma once

// Builds training samples from labeled videos: frames are sampled uniformly,
// re-stitched to the model's input size and paired with the video's label.

#include <filesystem>
#include <string>
#include <vector>

#include "freqsp/labeler.hpp"
#include "freqsp/media.hpp"
#include "freqsp/nn/model.hpp"
#include "freqsp/nn/train.hpp"

namespace freqsp::nn {

inline std::vector<ModelInput> video_inputs(const media::Video& v, const FreqSPConfig& cfg, size_t frames,
                                            PatchMode mode, uint64_t seed) {
    const media::Video sampled = media::sample_frames(v, frames);
    std::vector<ModelInput> out;
    for (size_t i = 0; i < sampled.frames.size(); ++i) {
        const media::Frame f =
            patch_restitch(sampled.frames[i], cfg.patch_block, cfg.patch_grid, mode, seed + i);
        out.push_back(prepare_input(f, cfg.hf_removed_planes));
    }
    return out;
}

// Mean of the per-frame predictions.
inline double predict_video(const FreqSP& model, const media::Video& v, size_t frames = 32) {
    const auto inputs = video_inputs(v, model.config(), frames, PatchMode::TopLeft, 0);
    double sum = 0;
    for (const auto& in : inputs) sum += model.forward({&in}).value()[0];
    return sum / static_cast<double>(inputs.size());
}

inline std::filesystem::path resolve_video(const std::filesystem::path& base, const std::string& path) {
    const std::filesystem::path p = path;
    return p.is_absolute() ? p : base / p;
}

// One sample per sampled frame of every successfully labeled record.
inline std::vector<Sample> build_dataset(const std::vector<label::LabelRecord>& records,
                                         const std::filesystem::path& video_base, const FreqSPConfig& cfg,
                                         size_t frames, PatchMode mode, uint64_t seed) {
    std::vector<Sample> out;
    uint64_t s = seed;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        const media::Video v = media::load_video(resolve_video(video_base, r.path));
        for (auto& in : video_inputs(v, cfg, frames, mode, s)) out.push_back({std::move(in), r.label});
        s += 1000003;
    }
    return out;
}

} // namespace freqsp::nn
