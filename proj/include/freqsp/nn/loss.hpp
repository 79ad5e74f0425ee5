#pragma once

// Training objective: mean absolute error plus a weighted pairwise
// monotonicity penalty
//
//   mono = sum over ordered pairs (i, j) of max((p_i - p_j) sgn(g_j - g_i), 0)
//
// which is zero exactly when the predictions are weakly ordered like the labels.

#include <cmath>
#include <span>
#include <vector>

#include "freqsp/error.hpp"
#include "freqsp/nn/tensor.hpp"

namespace freqsp::nn {

inline double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

inline double mono_loss_value(std::span<const double> preds, std::span<const double> gts) {
    if (preds.size() != gts.size() || preds.empty())
        throw ContractError("mono_loss: predictions and labels must have equal non-zero length");
    double total = 0.0;
    for (size_t i = 0; i < preds.size(); ++i)
        for (size_t j = 0; j < preds.size(); ++j)
            if (i != j) total += std::max((preds[i] - preds[j]) * sgn(gts[j] - gts[i]), 0.0);
    return total;
}

inline double l1_loss_value(std::span<const double> preds, std::span<const double> gts) {
    if (preds.size() != gts.size() || preds.empty())
        throw ContractError("l1_loss: predictions and labels must have equal non-zero length");
    double total = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) total += std::abs(preds[i] - gts[i]);
    return total / static_cast<double>(preds.size());
}

inline double overall_loss_value(std::span<const double> preds, std::span<const double> gts, double mono_weight) {
    if (!(mono_weight >= 0.0)) throw ContractError("monotonicity weight must be non-negative");
    return l1_loss_value(preds, gts) + mono_weight * mono_loss_value(preds, gts);
}

// Differentiable versions over a prediction tensor with one value per sample.
// Subgradients at kinks are 0.
inline Var mono_loss(const Var& preds, std::vector<double> gts) {
    const double v = mono_loss_value(preds.value().data(), gts);
    return Var::from_op(Tensor({1}, v), {preds}, [gts = std::move(gts)](Node& self) {
        Node& np = *self.parents[0];
        if (!np.requires_grad) return;
        const auto& p = np.value.data();
        auto& dp = np.grad_buffer().data();
        const double g = self.grad[0];
        for (size_t i = 0; i < p.size(); ++i)
            for (size_t j = 0; j < p.size(); ++j) {
                if (i == j) continue;
                const double s = sgn(gts[j] - gts[i]);
                if ((p[i] - p[j]) * s > 0) {
                    dp[i] += g * s;
                    dp[j] -= g * s;
                }
            }
    });
}

inline Var l1_loss(const Var& preds, std::vector<double> gts) {
    const double v = l1_loss_value(preds.value().data(), gts);
    return Var::from_op(Tensor({1}, v), {preds}, [gts = std::move(gts)](Node& self) {
        Node& np = *self.parents[0];
        if (!np.requires_grad) return;
        const auto& p = np.value.data();
        auto& dp = np.grad_buffer().data();
        const double scale = self.grad[0] / static_cast<double>(p.size());
        for (size_t i = 0; i < p.size(); ++i) dp[i] += scale * sgn(p[i] - gts[i]);
    });
}

inline Var overall_loss(const Var& preds, const std::vector<double>& gts, double mono_weight) {
    if (!(mono_weight >= 0.0)) throw ContractError("monotonicity weight must be non-negative");
    Var l1 = l1_loss(preds, gts);
    Var mono = mono_loss(preds, gts);
    const double v = l1.value()[0] + mono_weight * mono.value()[0];
    return Var::from_op(Tensor({1}, v), {l1, mono}, [mono_weight](Node& self) {
        if (self.parents[0]->requires_grad) self.parents[0]->grad_buffer()[0] += self.grad[0];
        if (self.parents[1]->requires_grad) self.parents[1]->grad_buffer()[0] += mono_weight * self.grad[0];
    });
}

} // namespace freqsp::nn
