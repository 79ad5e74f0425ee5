#pragma once

// Patch re-stitching, AdamW training loop and PLCC/RMSE evaluation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "freqsp/error.hpp"
#include "freqsp/media.hpp"
#include "freqsp/nn/loss.hpp"
#include "freqsp/nn/model.hpp"

namespace freqsp::nn {

enum class PatchMode { Random, TopLeft };

// Splits the frame into grid x grid equal regions, cuts one block x block
// patch from each (random offset, or the region's top-left corner) and tiles
// the patches in region order into a (grid*block)^2 frame.
inline media::Frame patch_restitch(const media::Frame& f, int block, int grid, PatchMode mode,
                                   uint64_t seed = 0) {
    detail::require(block > 0 && grid > 0, "patch_restitch: block and grid must be positive");
    const int rh = f.height() / grid, rw = f.width() / grid;
    if (rh < block || rw < block)
        throw ContractError("patch_restitch: frame " + std::to_string(f.width()) + "x" + std::to_string(f.height()) +
                            " smaller than grid*block = " + std::to_string(grid * block));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> oy(0, rh - block), ox(0, rw - block);
    media::Frame out(grid * block, grid * block, f.colorspace());
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            int y0 = gy * rh, x0 = gx * rw;
            if (mode == PatchMode::Random) {
                y0 += oy(rng);
                x0 += ox(rng);
            }
            for (int c = 0; c < f.channels(); ++c)
                for (int y = 0; y < block; ++y)
                    for (int x = 0; x < block; ++x)
                        out.at(c, gy * block + y, gx * block + x) = f.at(c, y0 + y, x0 + x);
        }
    return out;
}

struct Metrics {
    double plcc = 0.0;
    double rmse = 0.0;
};

inline Metrics evaluate(std::span<const double> preds, std::span<const double> gts) {
    if (preds.size() != gts.size()) throw ContractError("evaluate: length mismatch");
    if (preds.size() < 2) throw ContractError("evaluate: need at least 2 samples");
    const double n = static_cast<double>(preds.size());
    const double mp = std::accumulate(preds.begin(), preds.end(), 0.0) / n;
    const double mg = std::accumulate(gts.begin(), gts.end(), 0.0) / n;
    double spp = 0, sgg = 0, spg = 0, se = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        const double dp = preds[i] - mp, dg = gts[i] - mg;
        spp += dp * dp;
        sgg += dg * dg;
        spg += dp * dg;
        se += (preds[i] - gts[i]) * (preds[i] - gts[i]);
    }
    if (sgg == 0.0) throw ContractError("evaluate: labels have zero variance, PLCC undefined");
    if (spp == 0.0) throw ContractError("evaluate: predictions have zero variance, PLCC undefined");
    return {spg / std::sqrt(spp * sgg), std::sqrt(se / n)};
}

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 0.05;
    int batch = 8;
    double mono_weight = 0.3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long steps = 2000;
    uint64_t seed = 0;
    long log_every = 0; // steps between progress lines; 0 logs once per epoch

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
        if (batch < 1) throw ConfigError("batch must be at least 1");
        if (!(mono_weight >= 0.0)) throw ConfigError("monotonicity weight must be non-negative");
        if (steps < 0) throw ConfigError("steps must be non-negative");
    }
};

// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<Var> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value().size(), 0.0);
            v_.emplace_back(p.value().size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            auto& w = params_[k].value().data();
            const auto& g = params_[k].grad().data();
            auto& m = m_[k];
            auto& v = v_[k];
            for (size_t i = 0; i < w.size(); ++i) {
                const double gi = g.empty() ? 0.0 : g[i];
                w[i] -= cfg_.lr * cfg_.weight_decay * w[i];
                m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
                v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
                w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            }
        }
    }

    long steps_taken() const noexcept { return t_; }

private:
    std::vector<Var> params_;
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

struct Sample {
    ModelInput input;
    double label = 0.0;
};

struct EpochLog {
    long step = 0;
    double loss = 0.0;
    Metrics metrics;
};

class TrainError : public Error {
public:
    using Error::Error;
};

inline std::vector<double> predict_samples(const FreqSP& model, const std::vector<Sample>& data, int batch = 16) {
    std::vector<double> out;
    for (size_t s = 0; s < data.size(); s += batch) {
        std::vector<const ModelInput*> b;
        for (size_t i = s; i < std::min(data.size(), s + batch); ++i) b.push_back(&data[i].input);
        const Var y = model.forward(b);
        out.insert(out.end(), y.value().data().begin(), y.value().data().end());
    }
    return out;
}

inline Metrics evaluate_samples(const FreqSP& model, const std::vector<Sample>& data) {
    std::vector<double> gts;
    for (const auto& s : data) gts.push_back(s.label);
    return evaluate(predict_samples(model, data), gts);
}

// Trains in place for cfg.steps minibatch steps over shuffled epochs.
// `on_epoch` receives the mean loss of each completed epoch and metrics over
// the full training set (metrics left zero when undefined).
inline std::vector<EpochLog> train(FreqSP& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                                   const std::function<void(const EpochLog&)>& on_epoch = {}) {
    cfg.validate();
    if (data.empty()) throw ContractError("train: empty dataset");
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamW opt(model.parameters(), cfg);
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<EpochLog> history;
    double epoch_loss = 0.0;
    long epoch_batches = 0;
    size_t cursor = data.size();

    auto finish_epoch = [&](long step) {
        if (epoch_batches == 0) return;
        EpochLog log{step, epoch_loss / static_cast<double>(epoch_batches), {}};
        try {
            log.metrics = evaluate_samples(model, data);
        } catch (const ContractError&) {
        }
        history.push_back(log);
        if (on_epoch) on_epoch(log);
        epoch_loss = 0.0;
        epoch_batches = 0;
    };

    for (long step = 0; step < cfg.steps; ++step) {
        if (cursor >= data.size()) {
            finish_epoch(step);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        std::vector<const ModelInput*> batch;
        std::vector<double> labels;
        for (; cursor < data.size() && batch.size() < static_cast<size_t>(cfg.batch); ++cursor) {
            batch.push_back(&data[order[cursor]].input);
            labels.push_back(data[order[cursor]].label);
        }
        model.zero_grad();
        Var preds = model.forward(batch);
        Var loss = overall_loss(preds, labels, cfg.mono_weight);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv)) {
            throw TrainError("non-finite loss at step " + std::to_string(step) + " (batch of " +
                             std::to_string(batch.size()) + ", first prediction " +
                             std::to_string(preds.value()[0]) + ")");
        }
        loss.backward();
        opt.step();
        epoch_loss += lv;
        ++epoch_batches;
    }
    finish_epoch(cfg.steps);
    return history;
}

} // namespace freqsp::nn
