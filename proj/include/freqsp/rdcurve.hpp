#pragma once

// Rate-distortion curves and Bjontegaard deltas.
//
// Each curve is fitted with a least-squares cubic mapping quality to
// log10(bitrate) (or the reverse for bd_quality). The fit runs in a
// normalized variable t = (x - center) / scale so that the normal equations
// stay well conditioned whatever the quality units are. The two fits are
// integrated analytically over the overlap of their ranges.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "freqsp/error.hpp"

namespace freqsp::rd {

struct RdPoint {
    double bitrate_kbps = 0.0;
    double quality = 0.0;
};

class RdCurve {
public:
    RdCurve() = default;
    RdCurve(std::vector<RdPoint> points, double level = 0.0) : points_(std::move(points)), level_(level) {
        validate();
        std::sort(points_.begin(), points_.end(),
                  [](const RdPoint& a, const RdPoint& b) { return a.quality < b.quality; });
    }

    const std::vector<RdPoint>& points() const noexcept { return points_; }
    double level() const noexcept { return level_; }

    double min_quality() const { return points_.front().quality; }
    double max_quality() const { return points_.back().quality; }

    std::vector<double> qualities() const {
        std::vector<double> q;
        for (const auto& p : points_) q.push_back(p.quality);
        return q;
    }

    std::vector<double> log_rates() const {
        std::vector<double> r;
        for (const auto& p : points_) r.push_back(std::log10(p.bitrate_kbps));
        return r;
    }

private:
    void validate() const {
        if (points_.size() < 4) throw ContractError("RD curve needs at least 4 points for a cubic fit");
        for (const auto& p : points_) {
            if (!(p.bitrate_kbps > 0.0) || !std::isfinite(p.bitrate_kbps))
                throw ContractError("RD curve bitrates must be positive and finite");
            if (!std::isfinite(p.quality)) throw ContractError("RD curve qualities must be finite");
        }
        auto q = qualities();
        std::sort(q.begin(), q.end());
        if (std::adjacent_find(q.begin(), q.end()) != q.end())
            throw ContractError("RD curve has duplicate quality values");
    }

    std::vector<RdPoint> points_;
    double level_ = 0.0;
};

// Cubic p(t) = c0 + c1 t + c2 t^2 + c3 t^3 in t = (x - center) / scale.
struct CubicFit {
    std::array<double, 4> coeffs{};
    double center = 0.0;
    double scale = 1.0;

    double operator()(double x) const {
        const double t = (x - center) / scale;
        return coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3]));
    }

    // Exact integral over [a, b] from the antiderivative.
    double integral(double a, double b) const {
        auto prim = [&](double x) {
            const double t = (x - center) / scale;
            return scale * t *
                   (coeffs[0] + t * (coeffs[1] / 2 + t * (coeffs[2] / 3 + t * coeffs[3] / 4)));
        };
        return prim(b) - prim(a);
    }

    // Coefficients in powers of the raw variable x.
    std::array<double, 4> monomial() const {
        const double s = 1.0 / scale, m = -center / scale; // t = s x + m
        const auto& c = coeffs;
        return {c[0] + c[1] * m + c[2] * m * m + c[3] * m * m * m,
                c[1] * s + 2 * c[2] * m * s + 3 * c[3] * m * m * s,
                c[2] * s * s + 3 * c[3] * m * s * s,
                c[3] * s * s * s};
    }
};

inline constexpr double kMaxCondition = 1e10;

namespace detail_rd {

// Inverse of a small dense matrix by Gauss-Jordan with partial pivoting.
// Returns false when a pivot vanishes.
template <size_t N>
bool invert(std::array<std::array<double, N>, N> a, std::array<std::array<double, N>, N>& inv) {
    for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < N; ++j) inv[i][j] = i == j ? 1.0 : 0.0;
    for (size_t col = 0; col < N; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < N; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (a[piv][col] == 0.0) return false;
        std::swap(a[piv], a[col]);
        std::swap(inv[piv], inv[col]);
        const double d = a[col][col];
        for (size_t j = 0; j < N; ++j) {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for (size_t r = 0; r < N; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            if (f == 0.0) continue;
            for (size_t j = 0; j < N; ++j) {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    return true;
}

template <size_t N>
double norm1(const std::array<std::array<double, N>, N>& a) {
    double best = 0.0;
    for (size_t j = 0; j < N; ++j) {
        double s = 0.0;
        for (size_t i = 0; i < N; ++i) s += std::abs(a[i][j]);
        best = std::max(best, s);
    }
    return best;
}

} // namespace detail_rd

// Least-squares cubic y(x). Exact interpolation for 4 points.
inline CubicFit fit_cubic(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ContractError("fit_cubic: x and y lengths differ");
    if (xs.size() < 4) throw FitError("cubic fit needs at least 4 points");
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw FitError("cubic fit needs distinct abscissae");

    CubicFit fit;
    fit.center = 0.5 * (sorted.front() + sorted.back());
    fit.scale = 0.5 * (sorted.back() - sorted.front());

    std::array<std::array<double, 4>, 4> normal{};
    std::array<double, 4> rhs{};
    for (size_t k = 0; k < xs.size(); ++k) {
        const double t = (xs[k] - fit.center) / fit.scale;
        const std::array<double, 4> row{1.0, t, t * t, t * t * t};
        for (int i = 0; i < 4; ++i) {
            rhs[i] += row[i] * ys[k];
            for (int j = 0; j < 4; ++j) normal[i][j] += row[i] * row[j];
        }
    }
    std::array<std::array<double, 4>, 4> inv{};
    if (!detail_rd::invert(normal, inv)) throw FitError("cubic fit is rank deficient");
    const double cond = detail_rd::norm1(normal) * detail_rd::norm1(inv);
    if (!(cond <= kMaxCondition))
        throw FitError("cubic fit is ill-conditioned (condition number " + std::to_string(cond) + ")");
    for (int i = 0; i < 4; ++i) {
        fit.coeffs[i] = 0.0;
        for (int j = 0; j < 4; ++j) fit.coeffs[i] += inv[i][j] * rhs[j];
    }
    return fit;
}

// Cubic mapping quality -> log10(bitrate).
inline CubicFit fit_log_poly(const RdCurve& c) { return fit_cubic(c.qualities(), c.log_rates()); }

inline CubicFit fit_log_poly(const std::vector<RdPoint>& points) {
    std::vector<double> q, r;
    for (const auto& p : points) {
        if (!(p.bitrate_kbps > 0.0)) throw ContractError("bitrates must be positive");
        q.push_back(p.quality);
        r.push_back(std::log10(p.bitrate_kbps));
    }
    return fit_cubic(q, r);
}

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

struct BdRateResult {
    double value = 0.0; // fractional bitrate change, -0.3 means 30% fewer bits
    Interval overlap;
    double anchor_level = 0.0;
    double test_level = 0.0;
};

inline Interval overlap(const std::vector<double>& a, const std::vector<double>& b) {
    const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
    const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
    const Interval iv{std::max(*amin, *bmin), std::min(*amax, *bmax)};
    if (!(iv.high > iv.low)) throw NoOverlapError("RD curves have no overlapping range");
    return iv;
}

// Mean of log10-rate difference (test - anchor) over the shared quality range.
inline double bd_log_rate_delta(const RdCurve& anchor, const RdCurve& test, Interval* range = nullptr) {
    const Interval iv = overlap(anchor.qualities(), test.qualities());
    const CubicFit fa = fit_log_poly(anchor), ft = fit_log_poly(test);
    if (range) *range = iv;
    return (ft.integral(iv.low, iv.high) - fa.integral(iv.low, iv.high)) / (iv.high - iv.low);
}

inline BdRateResult bd_rate(const RdCurve& anchor, const RdCurve& test) {
    BdRateResult r;
    const double delta = bd_log_rate_delta(anchor, test, &r.overlap);
    r.value = std::pow(10.0, delta) - 1.0;
    r.anchor_level = anchor.level();
    r.test_level = test.level();
    return r;
}

struct BdQualityResult {
    double value = 0.0;
    Interval overlap; // in log10(bitrate)
};

// Mean quality difference (test - anchor) over the shared log-rate range.
inline BdQualityResult bd_quality(const RdCurve& anchor, const RdCurve& test) {
    BdQualityResult r;
    r.overlap = overlap(anchor.log_rates(), test.log_rates());
    const CubicFit fa = fit_cubic(anchor.log_rates(), anchor.qualities());
    const CubicFit ft = fit_cubic(test.log_rates(), test.qualities());
    r.value = (ft.integral(r.overlap.low, r.overlap.high) - fa.integral(r.overlap.low, r.overlap.high)) /
              (r.overlap.high - r.overlap.low);
    return r;
}

// ---------------------------------------------------------------------------
// CSV with header `bitrate_kbps,quality`

inline std::vector<RdPoint> parse_csv(std::istream& in, const std::string& source = "<csv>") {
    std::vector<RdPoint> pts;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("bitrate", 0) == 0) continue;
        std::istringstream ls(line);
        RdPoint p;
        char comma = 0;
        std::string rest;
        if (!(ls >> p.bitrate_kbps >> comma >> p.quality) || comma != ',' || (ls >> rest))
            throw IoError(source + ":" + std::to_string(lineno) + ": expected 'bitrate_kbps,quality'");
        pts.push_back(p);
    }
    return pts;
}

inline std::vector<RdPoint> load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_csv(in, path);
}

// ---------------------------------------------------------------------------
// SVG plot: one polyline per curve, bitrate on x, quality on y.

struct NamedCurve {
    std::string name;
    std::vector<RdPoint> points;
};

inline std::string plot_svg(const std::vector<NamedCurve>& curves, int width = 640, int height = 480) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& c : curves)
        for (const auto& p : c.points) {
            xmin = std::min(xmin, p.bitrate_kbps);
            xmax = std::max(xmax, p.bitrate_kbps);
            ymin = std::min(ymin, p.quality);
            ymax = std::max(ymax, p.quality);
        }
    if (!(xmax > xmin)) xmax = xmin + 1, xmin -= 1;
    if (!(ymax > ymin)) ymax = ymin + 1, ymin -= 1;
    const double ml = 60, mr = 120, mt = 20, mb = 50;
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto sy = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ostringstream o;
    o.precision(6);
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\">bitrate (kbps) " << xmin << " - " << xmax << "</text>\n";
    o << "<text x=\"15\" y=\"" << (mt + height - mb) / 2 << "\" transform=\"rotate(-90 15 "
      << (mt + height - mb) / 2 << ")\" text-anchor=\"middle\">quality " << ymin << " - " << ymax
      << "</text>\n";
    for (size_t i = 0; i < curves.size(); ++i) {
        auto pts = curves[i].points;
        std::sort(pts.begin(), pts.end(),
                  [](const RdPoint& a, const RdPoint& b) { return a.bitrate_kbps < b.bitrate_kbps; });
        const char* color = palette[i % std::size(palette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : pts) o << sx(p.bitrate_kbps) << ',' << sy(p.quality) << ' ';
        o << "\"/>\n";
        o << "<text x=\"" << width - mr + 10 << "\" y=\"" << mt + 16 * (i + 1) << "\" fill=\"" << color
          << "\">" << curves[i].name << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

} // namespace freqsp::rd
