#pragma once

// Shared helpers for the test suites: random inputs, a finite-difference
// gradient oracle and an independent brute-force labeler for the synthetic
// encoder.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "freqsp/media.hpp"
#include "freqsp/nn/tensor.hpp"

namespace testutil {

using freqsp::media::ColorSpace;
using freqsp::media::Frame;
using freqsp::media::Video;

inline Frame random_frame(int w, int h, uint64_t seed, ColorSpace cs = ColorSpace::RGB) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Frame f(w, h, cs);
    for (auto& v : f.data()) v = u(rng);
    return f;
}

// Smooth gradient plus noise of the given standard deviation, clamped.
inline Frame textured_frame(int w, int h, double noise, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, noise);
    Frame f(w, h);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                f.at(c, y, x) = std::clamp(0.3 + 0.4 * (x + y) / double(w + h) + 0.05 * c + n(rng), 0.0, 1.0);
    return f;
}

inline Video video_of(std::vector<Frame> frames, double fps = 30.0) {
    Video v;
    v.frames = std::move(frames);
    v.frame_rate = fps;
    return v;
}

inline freqsp::nn::Tensor random_tensor(freqsp::nn::Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    freqsp::nn::Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Worst norm-wise relative error between the analytic gradient of every leaf
// and its central finite-difference estimate.
inline double gradient_check(std::vector<freqsp::nn::Var> leaves,
                             const std::function<freqsp::nn::Var()>& objective, double eps = 1e-4) {
    for (auto& l : leaves) l.zero_grad();
    objective().backward();
    double worst = 0.0;
    for (auto& l : leaves) {
        std::vector<double> analytic(l.value().size(), 0.0);
        if (!l.grad().empty()) analytic = l.grad().data();
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (size_t i = 0; i < l.value().size(); ++i) {
            const double keep = l.value()[i];
            l.value()[i] = keep + eps;
            const double up = objective().value()[0];
            l.value()[i] = keep - eps;
            const double down = objective().value()[0];
            l.value()[i] = keep;
            const double numeric = (up - down) / (2 * eps);
            diff += (numeric - analytic[i]) * (numeric - analytic[i]);
            na += analytic[i] * analytic[i];
            nn += numeric * numeric;
        }
        const double denom = std::max(std::sqrt(na), std::sqrt(nn));
        if (denom > 1e-12) worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Independent labeling oracle for the synthetic encoder. Recomputes the RD
// points from the closed form, fits each curve by solving the raw Vandermonde
// normal equations in long double (shifted, not scaled), integrates with composite Simpson and
// takes the argmin (implicit 0 for the anchor, ties to the lower level).

struct OracleModel {
    double complexity;
    double gain;
    double curvature;
};

inline OracleModel frozen_model(double c) { return {c, 6.0 * c, 2.0 * c + 1.0}; }

inline std::pair<double, double> oracle_point(const OracleModel& m, double level, int crf) {
    const double rate = 1000.0 * m.complexity * std::pow(2.0, (27.0 - crf) / 6.0) * (1.0 + 0.25 * level);
    double q = 95.0 - 2.2 * (crf - 21) + m.gain * level - m.curvature * level * level;
    q = std::min(100.0, std::max(0.0, q));
    return {rate, q};
}

inline std::vector<long double> oracle_cubic(const std::vector<double>& x, const std::vector<double>& y) {
    long double a[4][5] = {};
    for (size_t k = 0; k < x.size(); ++k) {
        long double p[4] = {1, x[k], (long double)x[k] * x[k], (long double)x[k] * x[k] * x[k]};
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) a[i][j] += p[i] * p[j];
            a[i][4] += p[i] * y[k];
        }
    }
    for (int c = 0; c < 4; ++c) {
        int piv = c;
        for (int r = c + 1; r < 4; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        for (int j = 0; j < 5; ++j) std::swap(a[c][j], a[piv][j]);
        for (int r = 0; r < 4; ++r) {
            if (r == c) continue;
            const long double f = a[r][c] / a[c][c];
            for (int j = 0; j < 5; ++j) a[r][j] -= f * a[c][j];
        }
    }
    return {a[0][4] / a[0][0], a[1][4] / a[1][1], a[2][4] / a[2][2], a[3][4] / a[3][3]};
}

inline long double oracle_eval(const std::vector<long double>& c, long double x) {
    return c[0] + x * (c[1] + x * (c[2] + x * c[3]));
}

inline double oracle_bd_rate(const std::vector<std::pair<double, double>>& anchor,
                             const std::vector<std::pair<double, double>>& test) {
    std::vector<double> qa, ra, qt, rt;
    for (auto [r, q] : anchor) qa.push_back(q), ra.push_back(std::log10(r));
    for (auto [r, q] : test) qt.push_back(q), rt.push_back(std::log10(r));
    const double lo = std::max(*std::min_element(qa.begin(), qa.end()), *std::min_element(qt.begin(), qt.end()));
    const double hi = std::min(*std::max_element(qa.begin(), qa.end()), *std::max_element(qt.begin(), qt.end()));
    if (!(lo < hi)) return std::nan("");
    // shift abscissae to keep the normal equations well conditioned
    const double mid = 0.5 * (lo + hi);
    for (auto& q : qa) q -= mid;
    for (auto& q : qt) q -= mid;
    const auto ca = oracle_cubic(qa, ra), ct = oracle_cubic(qt, rt);
    const int n = 2000; // even
    const long double h = (hi - lo) / (long double)n;
    long double s = 0;
    for (int i = 0; i <= n; ++i) {
        const long double x = lo - mid + h * i;
        const long double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        s += w * (oracle_eval(ct, x) - oracle_eval(ca, x));
    }
    const long double mean = s * h / 3 / (hi - lo);
    return (double)(std::pow(10.0L, mean) - 1);
}

inline double oracle_label(const OracleModel& m, const std::vector<double>& levels, const std::vector<int>& crfs) {
    auto curve = [&](double level) {
        std::vector<std::pair<double, double>> pts;
        for (int crf : crfs) pts.push_back(oracle_point(m, level, crf));
        return pts;
    };
    const auto anchor = curve(0.0);
    double best = 0.0, best_value = 0.0;
    for (double l : levels) {
        if (l == 0.0) continue;
        const double v = oracle_bd_rate(anchor, curve(l));
        if (!std::isnan(v) && v < best_value - 1e-12) best = l, best_value = v;
    }
    return best;
}

} // namespace testutil
