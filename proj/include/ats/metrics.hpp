// Agreement between predicted and gold scores: Spearman's rho, Pearson's r,
// RMSE and quadratic-weighted Cohen's kappa.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ats/common.hpp"
#include "ats/corpus.hpp"

namespace ats::metrics {

/// Correlation is undefined for a constant sequence.
class UndefinedCorrelation : public DataError {
public:
    using DataError::DataError;
};

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    if (a.size() < min_n) throw ShapeError(std::string(what) + ": needs at least " + std::to_string(min_n) + " values");
}

}  // namespace detail

/// Fractional ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson_r(std::span<const double> a, std::span<const double> b) {
    detail::check_pair(a, b, 2, "pearson_r");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelation("correlation undefined: an input has zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Pearson correlation of the average ranks.
inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
    detail::check_pair(a, b, 2, "spearman_rho");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    return pearson_r(ra, rb);
}

inline double rmse(std::span<const double> pred, std::span<const double> gold) {
    detail::check_pair(pred, gold, 1, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - gold[i]) * (pred[i] - gold[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

/// Integer category for a continuous prediction: round half away from
/// zero, then clamp into [lo, hi].
inline long discretize(double v, long lo, long hi) { return std::clamp(static_cast<long>(std::lround(v)), lo, hi); }

/// 1 - sum(w O) / sum(w E), w_ij = (i-j)^2/(R-1)^2, E the outer product of
/// the marginals scaled to sum(O). Predictions are discretized; gold
/// scores must already be integers inside the range.
inline double quadratic_weighted_kappa(std::span<const double> pred, std::span<const double> gold,
                                       const ScoreRange& range) {
    detail::check_pair(pred, gold, 1, "quadratic_weighted_kappa");
    const long lo = std::lround(range.min), hi = std::lround(range.max);
    if (hi <= lo) throw DataError("quadratic_weighted_kappa: score range needs at least two categories");
    const auto R = static_cast<std::size_t>(hi - lo + 1);
    std::vector<double> observed(R * R, 0.0), hist_p(R, 0.0), hist_g(R, 0.0);
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double gv = gold[k];
        if (gv != std::round(gv) || gv < static_cast<double>(lo) || gv > static_cast<double>(hi))
            throw DataError("quadratic_weighted_kappa: gold score " + format_double(gv) + " is not an integer in range");
        const auto i = static_cast<std::size_t>(discretize(pred[k], lo, hi) - lo);
        const auto j = static_cast<std::size_t>(static_cast<long>(gv) - lo);
        observed[i * R + j] += 1.0;
        hist_p[i] += 1.0;
        hist_g[j] += 1.0;
    }
    const double n = static_cast<double>(pred.size());
    const double denom_w = static_cast<double>((R - 1) * (R - 1));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < R; ++j) {
            const double d = static_cast<double>(i) - static_cast<double>(j);
            const double w = d * d / denom_w;
            num += w * observed[i * R + j];
            den += w * hist_p[i] * hist_g[j] / n;
        }
    if (den == 0.0) throw DataError("quadratic_weighted_kappa: expected disagreement is zero");
    return 1.0 - num / den;
}

struct MetricsReport {
    std::size_t n = 0;
    double spearman_rho = 0.0;
    double pearson_r = 0.0;
    double rmse = 0.0;
    double qwk = 0.0;
};

inline MetricsReport report(std::span<const double> pred, std::span<const double> gold, const ScoreRange& range) {
    MetricsReport r;
    r.n = pred.size();
    r.spearman_rho = spearman_rho(pred, gold);
    r.pearson_r = pearson_r(pred, gold);
    r.rmse = rmse(pred, gold);
    r.qwk = quadratic_weighted_kappa(pred, gold, range);
    return r;
}

inline constexpr const char* kCsvHeader = "model,n,spearman,pearson,rmse,qwk";

inline std::string csv_row(const std::string& model, const MetricsReport& r) {
    return model + "," + std::to_string(r.n) + "," + format_double(r.spearman_rho) + "," + format_double(r.pearson_r) +
           "," + format_double(r.rmse) + "," + format_double(r.qwk);
}

inline std::string pretty(const std::string& model, const MetricsReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s (n=%zu)\n  Spearman rho  %.4f\n  Pearson r     %.4f\n  RMSE          %.4f\n  QW kappa      %.4f\n",
                  model.c_str(), r.n, r.spearman_rho, r.pearson_r, r.rmse, r.qwk);
    return buf;
}

}  // namespace ats::metrics
