// Oracles shared by the unit tests and the acceptance runner.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "ats/corpus.hpp"
#include "ats/metrics.hpp"
#include "ats/seqmodel.hpp"
#include "ats/sswe.hpp"

namespace ats::oracle {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdFloor = 1e-6;

inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
}

template <typename Loss>
double central_difference(double& x, Loss&& loss) {
    const double saved = x;
    x = saved + kFdStep;
    const double up = loss();
    x = saved - kFdStep;
    const double down = loss();
    x = saved;
    return (up - down) / (2.0 * kFdStep);
}

// ---------------------------------------------------------------------------
// SSWE
// ---------------------------------------------------------------------------

struct SsweCase {
    sswe::Params params;
    WindowSample sample;
    std::vector<TokenId> corruptions;
    double gold = 0.0;
};

inline SsweCase random_sswe_case(Rng& rng, int dim, int hidden, int window, int corruptions, int vocab,
                                 double scale = 0.3) {
    SsweCase c;
    c.params = sswe::Params::random(dim, vocab, hidden, window, rng, scale);
    fill_uniform(c.params.hidden_b, rng, -scale, scale);
    c.params.context_b = rng.uniform(-scale, scale);
    c.params.score_b = rng.uniform(-scale, scale);
    for (int j = 0; j < window; ++j)
        c.sample.context.push_back(static_cast<TokenId>(rng.index(static_cast<std::uint64_t>(vocab))));
    c.sample.center_index = static_cast<std::size_t>(window / 2);
    c.sample.context[c.sample.center_index] =
        static_cast<TokenId>(Vocabulary::kFirstWord + rng.index(static_cast<std::uint64_t>(vocab - 3)));
    for (int k = 0; k < corruptions; ++k)
        c.corruptions.push_back(draw_corruption(c.sample.center(), static_cast<std::size_t>(vocab), rng));
    c.gold = rng.uniform();
    return c;
}

/// Max relative error between `sswe::backward` and central differences of
/// `sswe::evaluate` over every parameter, embedding columns included.
inline double sswe_gradient_error(SsweCase c, double alpha) {
    auto& p = c.params;
    const auto g = sswe::backward(p, c.sample, c.corruptions, c.gold, alpha);
    auto loss = [&] { return sswe::evaluate(p, c.sample, c.corruptions, c.gold, alpha).overall; };
    double worst = 0.0;
    auto check = [&](double& x, double analytic) { worst = std::max(worst, rel_error(analytic, central_difference(x, loss))); };
    const Matrix emb = g.embeddings_dense(p.dim(), p.vocab_size());
    for (Eigen::Index j = 0; j < p.embeddings.cols(); ++j)
        for (Eigen::Index i = 0; i < p.embeddings.rows(); ++i) check(p.embeddings(i, j), emb(i, j));
    for (Eigen::Index j = 0; j < p.hidden_w.cols(); ++j)
        for (Eigen::Index i = 0; i < p.hidden_w.rows(); ++i) check(p.hidden_w(i, j), g.hidden_w(i, j));
    for (Eigen::Index i = 0; i < p.hidden_b.size(); ++i) check(p.hidden_b(i), g.hidden_b(i));
    for (Eigen::Index i = 0; i < p.context_w.size(); ++i) check(p.context_w(i), g.context_w(i));
    for (Eigen::Index i = 0; i < p.score_w.size(); ++i) check(p.score_w(i), g.score_w(i));
    check(p.context_b, g.context_b);
    check(p.score_b, g.score_b);
    return worst;
}

// ---------------------------------------------------------------------------
// Sequence model
// ---------------------------------------------------------------------------

inline seq::SeqModel random_seq_model(const seq::Architecture& a, Eigen::Index vocab, Rng& rng, double scale = 0.5) {
    auto m = seq::SeqModel::random(a, vocab, rng, nullptr, scale, 0.5);
    m.weights.visit([&](std::string_view name, seq::FlatMap t) {
        if (name.starts_with("b_"))
            for (Eigen::Index i = 0; i < t.size(); ++i) t(i) += rng.uniform(-scale, scale);
    });
    return m;
}

/// Max relative error of `seq::bptt` against central differences over all
/// weights and all embedding entries.
inline double seq_gradient_error(seq::SeqModel m, const std::vector<TokenId>& tokens, double gold,
                                 const seq::DropoutMasks& masks = {}) {
    auto g = seq::zero_gradients(m);
    seq::bptt(m, tokens, gold, g, masks);
    auto loss = [&] {
        const double e = seq::forward_essay(m, tokens, masks).output - gold;
        return e * e;
    };
    double worst = 0.0;
    std::vector<double> analytic;
    g.weights.visit([&](std::string_view, seq::FlatMap t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) analytic.push_back(t(i));
    });
    std::size_t k = 0;
    m.weights.visit([&](std::string_view, seq::FlatMap t) {
        for (Eigen::Index i = 0; i < t.size(); ++i)
            worst = std::max(worst, rel_error(analytic[k++], central_difference(t(i), loss)));
    });
    for (Eigen::Index j = 0; j < m.embeddings.cols(); ++j) {
        auto it = g.embeddings.find(static_cast<TokenId>(j));
        for (Eigen::Index i = 0; i < m.embeddings.rows(); ++i) {
            const double a = it == g.embeddings.end() ? 0.0 : it->second(i);
            worst = std::max(worst, rel_error(a, central_difference(m.embeddings(i, j), loss)));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Brute-force metrics: O(n^2) ranks and a pairwise form of kappa.
// ---------------------------------------------------------------------------

namespace brute {

inline std::vector<long double> ranks(const std::vector<double>& v) {
    std::vector<long double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        long double less = 0, equal = 0;
        for (double x : v) {
            if (x < v[i]) ++less;
            if (x == v[i]) ++equal;
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

inline double pearson(const std::vector<long double>& a, const std::vector<long double>& b) {
    const auto n = static_cast<long double>(a.size());
    long double sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    long double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - sa / n) * (b[i] - sb / n);
        va += (a[i] - sa / n) * (a[i] - sa / n);
        vb += (b[i] - sb / n) * (b[i] - sb / n);
    }
    return static_cast<double>(cov / std::sqrt(va * vb));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(std::vector<long double>(a.begin(), a.end()), std::vector<long double>(b.begin(), b.end()));
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) { return pearson(ranks(a), ranks(b)); }

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<long double>(a[i]) - b[i]) * (static_cast<long double>(a[i]) - b[i]);
    return static_cast<double>(std::sqrt(s / a.size()));
}

/// 1 - mean_k w(p_k, g_k) / mean_{k,l} w(p_k, g_l), predictions rounded half
/// away from zero and clamped.
inline double qwk(const std::vector<double>& pred, const std::vector<double>& gold, int lo, int hi) {
    auto cat = [&](double v) {
        const double r = v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5);
        return std::clamp(static_cast<int>(r), lo, hi);
    };
    const long double span2 = static_cast<long double>(hi - lo) * (hi - lo);
    auto w = [&](int i, int j) { return static_cast<long double>(i - j) * (i - j) / span2; };
    const auto n = pred.size();
    long double obs = 0, exp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        obs += w(cat(pred[k]), static_cast<int>(gold[k]));
        for (std::size_t l = 0; l < n; ++l) exp += w(cat(pred[k]), static_cast<int>(gold[l]));
    }
    return static_cast<double>(1 - (obs / n) / (exp / (static_cast<long double>(n) * n)));
}

}  // namespace brute

// ---------------------------------------------------------------------------

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ats_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace ats::oracle
