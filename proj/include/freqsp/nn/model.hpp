#pragma once

// Sharpening-level regressor: a MobileNetV3-style feature extractor (stem +
// inverted residual blocks with linear bottleneck and optional squeeze and
// excitation), a high-frequency branch fed with the DCT residual of the input,
// additive fusion and a 1x1-convolution regression head ending in global
// average pooling.

#include <array>
#include <cmath>
#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freqsp/error.hpp"
#include "freqsp/freq.hpp"
#include "freqsp/media.hpp"
#include "freqsp/nn/ops.hpp"
#include "freqsp/nn/tensor.hpp"

namespace freqsp::nn {

// (expansion, output) channels of the MobileNetV3-Large block stack.
inline constexpr std::array<std::array<int, 2>, 15> kLargeSchedule{{
    {16, 16}, {64, 24}, {72, 24}, {72, 40}, {120, 40}, {120, 40}, {240, 80}, {200, 80},
    {184, 80}, {184, 80}, {480, 112}, {672, 112}, {672, 160}, {960, 160}, {960, 160},
}};
inline constexpr int kStemChannels = 16;

struct FreqSPConfig {
    int depth = 4;
    int se_free_prefix = 1;
    double width_mult = 0.25;
    bool hf_enabled = true;
    int input_size = 64;
    std::vector<int> downsample_blocks{0}; // blocks whose depthwise conv has stride 2
    std::array<int, 2> hf_pool_strides{2, 2};
    int nlr_reduction = 4;
    int se_reduction = 4;
    int hf_removed_planes = 1;
    // patch re-stitching: grid x grid blocks of block x block pixels
    int patch_block = 16;
    int patch_grid = 4;

    // Full-size configuration: 15 blocks, 256x256 input, MobileNetV3-Large
    // stride schedule (total stride 32) and a matching HF branch.
    static FreqSPConfig full() {
        FreqSPConfig c;
        c.depth = 15;
        c.se_free_prefix = 3;
        c.width_mult = 1.0;
        c.input_size = 256;
        c.downsample_blocks = {1, 3, 6, 12};
        c.hf_pool_strides = {4, 8};
        c.patch_block = 16;
        c.patch_grid = 16;
        return c;
    }

    int scaled(int channels) const {
        return std::max(2, static_cast<int>(std::lround(channels * width_mult)));
    }
    int stem_channels() const { return scaled(kStemChannels); }
    int block_expansion(int i) const { return scaled(kLargeSchedule.at(i)[0]); }
    int block_output(int i) const { return scaled(kLargeSchedule.at(i)[1]); }
    int feature_channels() const { return depth == 0 ? stem_channels() : block_output(depth - 1); }
    bool block_downsamples(int i) const {
        return std::find(downsample_blocks.begin(), downsample_blocks.end(), i) != downsample_blocks.end();
    }

    int feature_size() const {
        int s = conv_out_dim(input_size, 3, 2, 1);
        for (int i = 0; i < depth; ++i)
            if (block_downsamples(i)) s = conv_out_dim(s, 3, 2, 1);
        return s;
    }
    int hf_size() const { return input_size / hf_pool_strides[0] / hf_pool_strides[1]; }

    void validate() const {
        if (depth < 0 || depth > static_cast<int>(kLargeSchedule.size()))
            throw ConfigError("depth must lie in [0, 15]");
        if (se_free_prefix < 0 || se_free_prefix > depth) throw ConfigError("need depth >= se_free_prefix >= 0");
        if (!(width_mult > 0.0)) throw ConfigError("width_mult must be positive");
        if (input_size < 8) throw ConfigError("input_size too small");
        for (int b : downsample_blocks)
            if (b < 0 || b >= std::max(depth, 1)) throw ConfigError("downsample block index out of range");
        if (hf_pool_strides[0] < 1 || hf_pool_strides[1] < 1) throw ConfigError("HF pool strides must be >= 1");
        if (nlr_reduction < 1 || se_reduction < 1) throw ConfigError("reductions must be >= 1");
        if (hf_removed_planes < 0 || hf_removed_planes > 64) throw ConfigError("hf_removed_planes must lie in [0, 64]");
        if (patch_block * patch_grid != input_size)
            throw ConfigError("patch_block * patch_grid must equal input_size");
        if (hf_enabled && feature_size() != hf_size())
            throw ConfigError("HF branch output (" + std::to_string(hf_size()) + ") does not align with features (" +
                              std::to_string(feature_size()) + "); adjust hf_pool_strides or downsample_blocks");
    }
};

inline void to_json(nlohmann::json& j, const FreqSPConfig& c) {
    j = {{"depth", c.depth}, {"se_free_prefix", c.se_free_prefix}, {"width_mult", c.width_mult},
         {"hf_enabled", c.hf_enabled}, {"input_size", c.input_size}, {"downsample_blocks", c.downsample_blocks},
         {"hf_pool_strides", c.hf_pool_strides}, {"nlr_reduction", c.nlr_reduction},
         {"se_reduction", c.se_reduction}, {"hf_removed_planes", c.hf_removed_planes},
         {"patch_block", c.patch_block}, {"patch_grid", c.patch_grid}};
}

inline void from_json(const nlohmann::json& j, FreqSPConfig& c) {
    j.at("depth").get_to(c.depth);
    j.at("se_free_prefix").get_to(c.se_free_prefix);
    j.at("width_mult").get_to(c.width_mult);
    j.at("hf_enabled").get_to(c.hf_enabled);
    j.at("input_size").get_to(c.input_size);
    j.at("downsample_blocks").get_to(c.downsample_blocks);
    j.at("hf_pool_strides").get_to(c.hf_pool_strides);
    j.at("nlr_reduction").get_to(c.nlr_reduction);
    j.at("se_reduction").get_to(c.se_reduction);
    j.at("hf_removed_planes").get_to(c.hf_removed_planes);
    j.at("patch_block").get_to(c.patch_block);
    j.at("patch_grid").get_to(c.patch_grid);
}

// Weight and bias of one convolution.
struct Conv {
    Var weight;
    Var bias;
    ConvSpec spec;

    Var operator()(const Var& x) const { return conv2d(x, weight, bias, spec); }
};

// Kaiming fan-in normal weights, zero bias.
inline Conv make_conv(int cin, int cout, int k, ConvSpec spec, std::mt19937_64& rng) {
    const int fan_in = cin / spec.groups * k * k;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    Tensor w({cout, cin / spec.groups, k, k});
    for (auto& v : w.data()) v = dist(rng);
    return {parameter(std::move(w)), parameter(Tensor({cout})), spec};
}

struct InvBlockParams {
    Conv expand;
    Conv depthwise;
    std::optional<Conv> se_reduce;
    std::optional<Conv> se_expand;
    Conv project;
    bool residual = false;
};

// expand 1x1 -> LeakyReLU -> depthwise 3x3 -> LeakyReLU -> [SE gate] ->
// 1x1 projection (linear) -> identity shortcut when shapes allow.
// `force_gate` replaces the SE gate with a constant, for testing.
inline Var inv_lb_se_block(const Var& x, const InvBlockParams& p, const double* force_gate = nullptr) {
    Var h = leaky_relu(p.expand(x));
    h = leaky_relu(p.depthwise(h));
    if (p.se_reduce && p.se_expand) {
        Var gate;
        if (force_gate) {
            gate = constant(Tensor({h.value().dim(0), h.value().dim(1), 1, 1}, *force_gate));
        } else {
            Var s = global_avg_pool(h);
            s = leaky_relu((*p.se_reduce)(s));
            gate = hard_sigmoid((*p.se_expand)(s));
        }
        h = scale_channels(h, gate);
    }
    Var out = p.project(h);
    return p.residual ? add(out, x) : out;
}

inline InvBlockParams make_inv_block(int cin, int expansion, int cout, int stride, bool use_se, int se_reduction,
                                     std::mt19937_64& rng) {
    InvBlockParams p;
    p.expand = make_conv(cin, expansion, 1, {1, 0, 1}, rng);
    p.depthwise = make_conv(expansion, expansion, 3, {stride, 1, expansion}, rng);
    if (use_se) {
        const int squeeze = std::max(1, expansion / se_reduction);
        p.se_reduce = make_conv(expansion, squeeze, 1, {1, 0, 1}, rng);
        p.se_expand = make_conv(squeeze, expansion, 1, {1, 0, 1}, rng);
    }
    p.project = make_conv(expansion, cout, 1, {1, 0, 1}, rng);
    p.residual = stride == 1 && cin == cout;
    return p;
}

// Network input for one frame: RGB samples and the HF residual, both [3, S, S].
struct ModelInput {
    Tensor image;
    Tensor hf;
};

inline Tensor frame_to_tensor(const media::Frame& f) {
    return Tensor({3, f.height(), f.width()}, f.data());
}

inline ModelInput prepare_input(const media::Frame& f, int removed_planes = 1) {
    return {frame_to_tensor(media::to_rgb(f)), frame_to_tensor(freq::extract_hf(f, removed_planes))};
}

// Stacks [3, S, S] tensors into [N, 3, S, S].
inline Tensor stack(const std::vector<const Tensor*>& items) {
    detail::require(!items.empty(), "stack: no tensors");
    const Shape& s = items.front()->shape();
    detail::require(s.size() == 3, "stack: expected [C, H, W] tensors");
    Tensor out({static_cast<int>(items.size()), s[0], s[1], s[2]});
    size_t off = 0;
    for (const Tensor* t : items) {
        detail::require(t->shape() == s, "stack: shape mismatch");
        std::copy(t->data().begin(), t->data().end(), out.data().begin() + static_cast<long>(off));
        off += t->size();
    }
    return out;
}

struct LayerProfile {
    std::string name;
    long long params = 0;
    long long flops = 0;
};

// 2 operations per multiply-accumulate.
inline long long conv_flops(int cin, int cout, int k, int groups, int hout, int wout) {
    return 2LL * (cin / groups) * k * k * cout * hout * wout;
}

class FreqSP {
public:
    explicit FreqSP(FreqSPConfig cfg, uint64_t seed = 0) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::mt19937_64 rng(seed);
        stem_ = make_conv(3, cfg_.stem_channels(), 3, {2, 1, 1}, rng);
        int cin = cfg_.stem_channels();
        for (int i = 0; i < cfg_.depth; ++i) {
            const int stride = cfg_.block_downsamples(i) ? 2 : 1;
            blocks_.push_back(make_inv_block(cin, cfg_.block_expansion(i), cfg_.block_output(i), stride,
                                             i >= cfg_.se_free_prefix, cfg_.se_reduction, rng));
            cin = cfg_.block_output(i);
        }
        const int fc = cfg_.feature_channels();
        hf1_ = make_conv(3, fc, 3, {1, 1, 1}, rng);
        hf2_ = make_conv(fc, fc, 3, {1, 1, 1}, rng);
        const int reduced = std::max(1, fc / cfg_.nlr_reduction);
        nlr1_ = make_conv(fc, reduced, 1, {1, 0, 1}, rng);
        nlr2_ = make_conv(reduced, 1, 1, {1, 0, 1}, rng);
    }

    const FreqSPConfig& config() const noexcept { return cfg_; }
    const std::vector<InvBlockParams>& blocks() const noexcept { return blocks_; }

    // Feature extractor: stem then the block stack.
    Var features(const Var& images) const {
        check_input(images.value());
        Var h = leaky_relu(stem_(images));
        for (const auto& b : blocks_) h = inv_lb_se_block(h, b);
        return h;
    }

    // Two conv3x3 + LeakyReLU + average-pool stages over the HF residual.
    Var hf_branch(const Var& hf) const {
        check_input(hf.value());
        const auto& s = cfg_.hf_pool_strides;
        Var h = avg_pool(leaky_relu(hf1_(hf)), s[0], s[0]);
        return avg_pool(leaky_relu(hf2_(h)), s[1], s[1]);
    }

    Var hf_branch(const media::Frame& f) const {
        const ModelInput in = prepare_input(f, cfg_.hf_removed_planes);
        return hf_branch(constant(stack({&in.hf})));
    }

    Var head(const Var& fused) const {
        Var h = leaky_relu(nlr1_(fused));
        return global_avg_pool(nlr2_(h));
    }

    // [N, 3, S, S] images and HF residuals -> [N, 1, 1, 1] predicted levels.
    Var forward(const Var& images, const Var& hf) const {
        Var feats = features(images);
        if (cfg_.hf_enabled) feats = add(feats, hf_branch(hf));
        return head(feats);
    }

    Var forward(const std::vector<const ModelInput*>& batch) const {
        std::vector<const Tensor*> img, hf;
        for (const auto* s : batch) {
            img.push_back(&s->image);
            hf.push_back(&s->hf);
        }
        return forward(constant(stack(img)), constant(stack(hf)));
    }

    double predict(const media::Frame& f) const {
        const ModelInput in = prepare_input(f, cfg_.hf_removed_planes);
        return forward({&in}).value()[0];
    }

    // Parameters in a fixed, named order.
    std::vector<std::pair<std::string, Var>> named_parameters() const {
        std::vector<std::pair<std::string, Var>> out;
        auto put = [&](const std::string& name, const Conv& c) {
            out.emplace_back(name + ".weight", c.weight);
            out.emplace_back(name + ".bias", c.bias);
        };
        put("stem", stem_);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i);
            put(p + ".expand", blocks_[i].expand);
            put(p + ".depthwise", blocks_[i].depthwise);
            if (blocks_[i].se_reduce) {
                put(p + ".se_reduce", *blocks_[i].se_reduce);
                put(p + ".se_expand", *blocks_[i].se_expand);
            }
            put(p + ".project", blocks_[i].project);
        }
        put("hf.conv1", hf1_);
        put("hf.conv2", hf2_);
        put("nlr.conv1", nlr1_);
        put("nlr.conv2", nlr2_);
        return out;
    }

    std::vector<Var> parameters() const {
        std::vector<Var> out;
        for (auto& [_, v] : named_parameters()) out.push_back(v);
        return out;
    }

    long long parameter_count() const {
        long long n = 0;
        for (const auto& p : parameters()) n += static_cast<long long>(p.value().size());
        return n;
    }

    void zero_grad() {
        for (auto& p : parameters()) p.zero_grad();
    }

    // Per-layer parameter and FLOP counts for one input, from layer shapes.
    std::vector<LayerProfile> profile() const {
        std::vector<LayerProfile> out;
        auto conv = [&](const std::string& name, const Conv& c, int hout) {
            const auto& w = c.weight.value();
            out.push_back({name, static_cast<long long>(w.size() + c.bias.value().size()),
                           conv_flops(w.dim(1) * c.spec.groups, w.dim(0), w.dim(2), c.spec.groups, hout, hout)});
        };
        int s = conv_out_dim(cfg_.input_size, 3, 2, 1);
        conv("stem", stem_, s);
        for (size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "blocks." + std::to_string(i);
            conv(p + ".expand", blocks_[i].expand, s);
            s = conv_out_dim(s, 3, blocks_[i].depthwise.spec.stride, 1);
            conv(p + ".depthwise", blocks_[i].depthwise, s);
            if (blocks_[i].se_reduce) {
                conv(p + ".se_reduce", *blocks_[i].se_reduce, 1);
                conv(p + ".se_expand", *blocks_[i].se_expand, 1);
            }
            conv(p + ".project", blocks_[i].project, s);
        }
        if (cfg_.hf_enabled) {
            conv("hf.conv1", hf1_, cfg_.input_size);
            conv("hf.conv2", hf2_, cfg_.input_size / cfg_.hf_pool_strides[0]);
        }
        conv("nlr.conv1", nlr1_, s);
        conv("nlr.conv2", nlr2_, s);
        return out;
    }

private:
    void check_input(const Tensor& t) const {
        if (t.rank() != 4 || t.dim(1) != 3 || t.dim(2) != cfg_.input_size || t.dim(3) != cfg_.input_size)
            throw ContractError("model input must be [N, 3, " + std::to_string(cfg_.input_size) + ", " +
                                std::to_string(cfg_.input_size) + "], got " + shape_str(t.shape()));
    }

    FreqSPConfig cfg_;
    Conv stem_;
    std::vector<InvBlockParams> blocks_;
    Conv hf1_, hf2_;
    Conv nlr1_, nlr2_;
};

} // namespace freqsp::nn
