// Score-specific word embeddings: a window network with a shared hard-tanh
// hidden layer and two linear heads. The context head ranks true windows
// above center-corrupted ones (hinge); the score head regresses the essay
// score (squared error). Both losses backpropagate into the embedding
// matrix, weighted by alpha.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ats/common.hpp"
#include "ats/corpus.hpp"

namespace ats::sswe {

struct Hyper {
    int dim = 200;          // D
    int hidden = 100;       // H
    int window = 9;         // n
    int corruptions = 200;  // E
    double alpha = 0.1;
    double eta = 1e-7;
    int epochs = 1;
    std::uint64_t seed = 1;
    double init_scale = 0.05;

    void validate() const {
        if (dim < 1 || hidden < 1) throw ConfigError("embedding and hidden widths must be >= 1");
        if (window < 1 || window % 2 == 0) throw ConfigError("window size must be odd");
        if (corruptions < 1) throw ConfigError("corruption count must be >= 1");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
        if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("learning rate must be finite and >= 0");
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
    }
};

struct Params {
    Matrix embeddings;     // D x |V|, one column per word
    Matrix hidden_w;       // H x nD
    Vector hidden_b;       // H
    Vector context_w;      // H, context (ranking) head
    double context_b = 0.0;
    Vector score_w;        // H, score head
    double score_b = 0.0;

    Eigen::Index dim() const { return embeddings.rows(); }
    Eigen::Index vocab_size() const { return embeddings.cols(); }
    Eigen::Index hidden() const { return hidden_w.rows(); }
    Eigen::Index window() const { return dim() == 0 ? 0 : hidden_w.cols() / dim(); }

    static Params zeros(Eigen::Index dim, Eigen::Index vocab, Eigen::Index hidden, Eigen::Index window) {
        Params p;
        p.embeddings = Matrix::Zero(dim, vocab);
        p.hidden_w = Matrix::Zero(hidden, window * dim);
        p.hidden_b = Vector::Zero(hidden);
        p.context_w = Vector::Zero(hidden);
        p.score_w = Vector::Zero(hidden);
        return p;
    }

    /// Weights uniform in [-scale, scale], biases zero. Draw order: M, W_hi,
    /// context head, score head.
    static Params random(Eigen::Index dim, Eigen::Index vocab, Eigen::Index hidden, Eigen::Index window, Rng& rng,
                         double scale = 0.05) {
        auto p = zeros(dim, vocab, hidden, window);
        fill_uniform(p.embeddings, rng, -scale, scale);
        fill_uniform(p.hidden_w, rng, -scale, scale);
        fill_uniform(p.context_w, rng, -scale, scale);
        fill_uniform(p.score_w, rng, -scale, scale);
        return p;
    }

    bool finite() const {
        return embeddings.allFinite() && hidden_w.allFinite() && hidden_b.allFinite() && context_w.allFinite() &&
               score_w.allFinite() && std::isfinite(context_b) && std::isfinite(score_b);
    }

    bool operator==(const Params& o) const {
        return embeddings == o.embeddings && hidden_w == o.hidden_w && hidden_b == o.hidden_b &&
               context_w == o.context_w && context_b == o.context_b && score_w == o.score_w && score_b == o.score_b;
    }
};

/// Same shapes as Params except the embedding gradient, which only holds
/// the columns that were touched.
struct Gradients {
    std::map<TokenId, Vector> embeddings;
    Matrix hidden_w;
    Vector hidden_b;
    Vector context_w;
    double context_b = 0.0;
    Vector score_w;
    double score_b = 0.0;

    explicit Gradients(const Params& p)
        : hidden_w(Matrix::Zero(p.hidden_w.rows(), p.hidden_w.cols())),
          hidden_b(Vector::Zero(p.hidden_b.size())),
          context_w(Vector::Zero(p.context_w.size())),
          score_w(Vector::Zero(p.score_w.size())) {}

    Vector& column(TokenId id, Eigen::Index dim) {
        auto [it, fresh] = embeddings.try_emplace(id);
        if (fresh) it->second = Vector::Zero(dim);
        return it->second;
    }

    /// Dense view of the embedding gradient, for tests.
    Matrix embeddings_dense(Eigen::Index dim, Eigen::Index vocab) const {
        Matrix g = Matrix::Zero(dim, vocab);
        for (const auto& [id, col] : embeddings) g.col(id) = col;
        return g;
    }
};

struct Losses {
    double overall = 0.0;
    double context = 0.0;
    double score = 0.0;
};

// ---------------------------------------------------------------------------
// Elementary pieces
// ---------------------------------------------------------------------------

inline double htanh(double x) { return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x); }

inline Vector htanh(const Vector& x) { return x.unaryExpr([](double v) { return htanh(v); }); }

/// Subgradient; 0 at the kinks.
inline Vector htanh_grad(const Vector& x) {
    return x.unaryExpr([](double v) { return std::abs(v) < 1.0 ? 1.0 : 0.0; });
}

/// In-order concatenation of the embedding columns named by `ids`.
inline Vector embed_window(std::span<const TokenId> ids, const Matrix& embeddings) {
    const auto d = embeddings.rows();
    Vector s(static_cast<Eigen::Index>(ids.size()) * d);
    for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto id = ids[j];
        if (id < 0 || id >= embeddings.cols())
            throw LookupError("token id " + std::to_string(id) + " outside embedding matrix of " +
                              std::to_string(embeddings.cols()) + " columns");
        s.segment(static_cast<Eigen::Index>(j) * d, d) = embeddings.col(id);
    }
    return s;
}

struct Activations {
    Vector pre;     // W_hi s + b_h
    Vector hidden;  // htanh(pre)
    double context = 0.0;
    double score = 0.0;
};

inline Activations forward_full(const Params& p, const Vector& s) {
    if (s.size() != p.hidden_w.cols())
        throw ShapeError("window vector has " + std::to_string(s.size()) + " entries, network expects " +
                         std::to_string(p.hidden_w.cols()));
    Activations a;
    a.pre = p.hidden_w * s + p.hidden_b;
    a.hidden = htanh(a.pre);
    a.context = p.context_w.dot(a.hidden) + p.context_b;
    a.score = p.score_w.dot(a.hidden) + p.score_b;
    return a;
}

struct HeadOutputs {
    double context = 0.0;
    double score = 0.0;
};

/// Both heads; the score is not clamped here.
inline HeadOutputs forward(const Params& p, const Vector& s) {
    const auto a = forward_full(p, s);
    return {a.context, a.score};
}

/// Score head output clamped into [0, 1], for reporting only.
inline double predict_score(const Params& p, const Vector& s) { return std::clamp(forward(p, s).score, 0.0, 1.0); }

/// Mean over the corruptions of max(0, 1 - f_target + f_corrupt).
inline double loss_context(double f_target, std::span<const double> f_corrupts) {
    if (f_corrupts.empty()) throw ConfigError("loss_context needs at least one corruption");
    double sum = 0.0;
    for (double fc : f_corrupts) sum += std::max(0.0, 1.0 - f_target + fc);
    return sum / static_cast<double>(f_corrupts.size());
}

inline double loss_score(std::span<const double> predictions, std::span<const double> golds) {
    if (predictions.size() != golds.size())
        throw ShapeError("loss_score: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(golds.size()) + " golds");
    if (predictions.empty()) throw ShapeError("loss_score: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) sum += (predictions[i] - golds[i]) * (predictions[i] - golds[i]);
    return sum / static_cast<double>(predictions.size());
}

inline double loss_overall(double alpha, double context, double score) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    return alpha * context + (1.0 - alpha) * score;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Loss of one training example: a true window, its corruptions (same
/// context, different centers) and the gold scaled score.
inline Losses evaluate(const Params& p, const WindowSample& sample, const std::vector<TokenId>& corrupt_centers,
                       double gold, double alpha) {
    const Vector s = embed_window(sample.context, p.embeddings);
    const auto target = forward_full(p, s);
    std::vector<double> fc;
    fc.reserve(corrupt_centers.size());
    auto ctx = sample.context;
    for (auto c : corrupt_centers) {
        ctx[sample.center_index] = c;
        fc.push_back(forward(p, embed_window(ctx, p.embeddings)).context);
    }
    Losses l;
    l.context = loss_context(target.context, fc);
    const double err = target.score - gold;
    l.score = err * err;
    l.overall = loss_overall(alpha, l.context, l.score);
    return l;
}

/// Exact gradient of `evaluate(...).overall`. Corrupted windows are
/// evaluated incrementally: only their center block differs from the true
/// window, so W_hi s' = W_hi s + W_center (x_c - x_t).
inline Losses backward(const Params& p, const WindowSample& sample, const std::vector<TokenId>& corrupt_centers,
                       double gold, double alpha, Gradients& g) {
    if (corrupt_centers.empty()) throw ConfigError("backward needs at least one corruption");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    const auto d = p.dim();
    const auto n = static_cast<Eigen::Index>(sample.context.size());
    if (n * d != p.hidden_w.cols()) throw ShapeError("window length does not match the network input width");
    const auto center_off = static_cast<Eigen::Index>(sample.center_index) * d;
    const auto e = static_cast<double>(corrupt_centers.size());

    const Vector s = embed_window(sample.context, p.embeddings);
    const auto target = forward_full(p, s);
    const Vector x_t = s.segment(center_off, d);
    const auto w_center = p.hidden_w.middleCols(center_off, d);

    Losses l;
    const double err = target.score - gold;
    l.score = err * err;

    const double d_score = 2.0 * (1.0 - alpha) * err;
    double d_context_t = 0.0;
    Vector da_sum = Vector::Zero(p.hidden());  // sum of pre-activation grads over all windows
    Vector d_center_t_extra = Vector::Zero(d);

    for (auto c : corrupt_centers) {
        if (c < 0 || c >= p.vocab_size()) throw LookupError("corruption id out of range");
        const Vector delta = p.embeddings.col(c) - x_t;
        const Vector pre_k = target.pre + w_center * delta;
        const Vector hid_k = htanh(pre_k);
        const double f_k = p.context_w.dot(hid_k) + p.context_b;
        const double margin = 1.0 - target.context + f_k;
        if (margin <= 0.0) continue;
        l.context += margin;
        const double d_f_k = alpha / e;
        d_context_t -= d_f_k;
        g.context_w += d_f_k * hid_k;
        g.context_b += d_f_k;
        const Vector da_k = (d_f_k * p.context_w).cwiseProduct(htanh_grad(pre_k));
        da_sum += da_k;
        g.hidden_b += da_k;
        // center block of s' is x_c, not x_t
        g.hidden_w.middleCols(center_off, d) += da_k * delta.transpose();
        const Vector dx_c = w_center.transpose() * da_k;
        g.column(c, d) += dx_c;
        d_center_t_extra -= dx_c;  // the true center is absent from s'
    }
    l.context /= e;
    l.overall = loss_overall(alpha, l.context, l.score);

    g.context_w += d_context_t * target.hidden;
    g.context_b += d_context_t;
    g.score_w += d_score * target.hidden;
    g.score_b += d_score;
    const Vector da_t = (d_context_t * p.context_w + d_score * p.score_w).cwiseProduct(htanh_grad(target.pre));
    da_sum += da_t;
    g.hidden_b += da_t;
    g.hidden_w += da_sum * s.transpose();

    // Every window shares the non-center blocks, so their input gradient is W^T da_sum.
    const Vector ds = p.hidden_w.transpose() * da_sum;
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto id = sample.context[static_cast<std::size_t>(j)];
        Vector block = ds.segment(j * d, d);
        if (j * d == center_off) block += d_center_t_extra;
        if (!block.isZero(0.0)) g.column(id, d) += block;
    }
    return l;
}

inline Gradients backward(const Params& p, const WindowSample& sample, const std::vector<TokenId>& corrupt_centers,
                          double gold, double alpha) {
    Gradients g(p);
    backward(p, sample, corrupt_centers, gold, alpha, g);
    return g;
}

inline void sgd_step(Params& p, const Gradients& g, double eta) {
    for (const auto& [id, col] : g.embeddings) p.embeddings.col(id) -= eta * col;
    p.hidden_w -= eta * g.hidden_w;
    p.hidden_b -= eta * g.hidden_b;
    p.context_w -= eta * g.context_w;
    p.context_b -= eta * g.context_b;
    p.score_w -= eta * g.score_w;
    p.score_b -= eta * g.score_b;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLoss {
    int epoch = 0;
    Losses mean;
};

struct TrainResult {
    Params params;
    std::vector<EpochLoss> history;
};

/// Per-window SGD over shuffled windows of `essays`. The essays' scaled
/// scores feed the score head.
inline TrainResult train(const std::vector<Essay>& essays, std::size_t vocab_size, const Hyper& hyper,
                         const Params* init = nullptr) {
    hyper.validate();
    if (essays.empty()) throw DataError("cannot train embeddings on an empty corpus");
    Rng rng(hyper.seed);

    TrainResult out;
    if (init) {
        if (init->vocab_size() != static_cast<Eigen::Index>(vocab_size) || init->dim() != hyper.dim ||
            init->hidden() != hyper.hidden || init->window() != hyper.window)
            throw ShapeError("initial SSWE parameters do not match the hyperparameters");
        out.params = *init;
    } else {
        out.params = Params::random(hyper.dim, static_cast<Eigen::Index>(vocab_size), hyper.hidden, hyper.window, rng,
                                    hyper.init_scale);
    }
    auto& p = out.params;

    std::vector<WindowSample> windows;
    for (const auto& e : essays) {
        auto w = hyper.window >= 3 ? extract_windows(e, hyper.window) : std::vector<WindowSample>{};
        if (hyper.window == 1)
            for (auto t : e.tokens) w.push_back(WindowSample{{t}, 0, e.scaled_score, e.essay_id});
        windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    if (windows.empty()) throw DataError("corpus produced no training windows");

    std::vector<std::size_t> order(windows.size());
    std::vector<TokenId> centers(static_cast<std::size_t>(hyper.corruptions));
    Gradients g(p);
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        Losses sum;
        for (auto idx : order) {
            const auto& w = windows[idx];
            for (auto& c : centers) c = draw_corruption(w.center(), vocab_size, rng);
            g.embeddings.clear();
            g.hidden_w.setZero();
            g.hidden_b.setZero();
            g.context_w.setZero();
            g.score_w.setZero();
            g.context_b = g.score_b = 0.0;
            const auto l = backward(p, w, centers, w.scaled_score, hyper.alpha, g);
            if (!std::isfinite(l.overall)) throw NumericalError("non-finite SSWE loss in epoch " + std::to_string(epoch));
            sum.overall += l.overall;
            sum.context += l.context;
            sum.score += l.score;
            sgd_step(p, g, hyper.eta);
        }
        const auto count = static_cast<double>(windows.size());
        out.history.push_back({epoch, {sum.overall / count, sum.context / count, sum.score / count}});
        if (!p.finite()) throw NumericalError("SSWE parameters became non-finite in epoch " + std::to_string(epoch));
    }
    return out;
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochLoss>& history) {
    os << "epoch,loss_overall,loss_context,loss_score\n";
    for (const auto& h : history)
        os << h.epoch << ',' << format_double(h.mean.overall) << ',' << format_double(h.mean.context) << ','
           << format_double(h.mean.score) << '\n';
}

// ---------------------------------------------------------------------------
// Inspection
// ---------------------------------------------------------------------------

inline double cosine(const Vector& a, const Vector& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

struct Neighbor {
    std::string word;
    TokenId id = 0;
    double cosine = 0.0;
};

/// k most cosine-similar words, excluding the query and reserved tokens.
inline std::vector<Neighbor> nearest_neighbors(const Matrix& embeddings, const Vocabulary& vocab, std::string_view word,
                                               std::size_t k) {
    const auto q = vocab.id_of(word);
    if (static_cast<std::size_t>(embeddings.cols()) != vocab.size())
        throw ShapeError("embedding matrix and vocabulary sizes differ");
    std::vector<Neighbor> all;
    for (TokenId id = Vocabulary::kFirstWord; id < static_cast<TokenId>(vocab.size()); ++id) {
        if (id == q) continue;
        all.push_back({vocab.decode(id), id, cosine(embeddings.col(q), embeddings.col(id))});
    }
    std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.cosine != b.cosine ? a.cosine > b.cosine : a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMagic = "SSWE";
inline constexpr std::uint32_t kFormatVersion = 1;

struct EmbeddingFile {
    Vocabulary vocab;
    Params params;
};

/// magic, version, |V|, D, tokens, M (column-major), then H, nD, W_hi,
/// b_h, context head (w, b), score head (w, b). All numbers little-endian.
inline void write_embeddings(std::ostream& os, const Vocabulary& vocab, const Params& p) {
    if (static_cast<std::size_t>(p.vocab_size()) != vocab.size())
        throw ShapeError("embedding matrix has " + std::to_string(p.vocab_size()) + " columns, vocabulary has " +
                         std::to_string(vocab.size()) + " entries");
    BinaryWriter w(os);
    w.bytes(kMagic);
    w.u32(kFormatVersion);
    w.u64(vocab.size());
    w.u64(static_cast<std::uint64_t>(p.dim()));
    for (const auto& t : vocab.tokens()) w.str(t);
    w.matrix(p.embeddings);
    w.u64(static_cast<std::uint64_t>(p.hidden()));
    w.u64(static_cast<std::uint64_t>(p.hidden_w.cols()));
    w.matrix(p.hidden_w);
    w.vector(p.hidden_b);
    w.vector(p.context_w);
    w.f64(p.context_b);
    w.vector(p.score_w);
    w.f64(p.score_b);
}

inline EmbeddingFile read_embeddings(std::istream& is) {
    BinaryReader r(is);
    if (r.bytes(4) != kMagic) throw FormatError("not an SSWE embedding file (bad magic)");
    if (const auto v = r.u32(); v != kFormatVersion)
        throw FormatError("unsupported SSWE format version " + std::to_string(v));
    const auto vocab_size = r.u64();
    const auto dim = r.u64();
    if (vocab_size < 3 || vocab_size > (1ull << 26) || dim == 0 || dim > (1ull << 16))
        throw FormatError("implausible SSWE header");
    std::vector<std::string> tokens;
    tokens.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) tokens.push_back(r.str());
    EmbeddingFile f;
    f.vocab = Vocabulary::from_tokens(tokens);
    f.params.embeddings.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(vocab_size));
    r.matrix(f.params.embeddings);
    const auto hidden = r.u64();
    const auto input = r.u64();
    if (hidden == 0 || hidden > (1ull << 16) || input % dim != 0 || input > (1ull << 24))
        throw FormatError("implausible SSWE layer sizes");
    f.params.hidden_w.resize(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(input));
    r.matrix(f.params.hidden_w);
    f.params.hidden_b.resize(static_cast<Eigen::Index>(hidden));
    r.vector(f.params.hidden_b);
    f.params.context_w.resize(static_cast<Eigen::Index>(hidden));
    r.vector(f.params.context_w);
    f.params.context_b = r.f64();
    f.params.score_w.resize(static_cast<Eigen::Index>(hidden));
    r.vector(f.params.score_w);
    f.params.score_b = r.f64();
    return f;
}

inline void save_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, const Params& p) {
    write_file_atomic(path, [&](std::ostream& os) { write_embeddings(os, vocab, p); }, true);
}

inline EmbeddingFile load_embeddings(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open embedding file '" + path.string() + "'");
    return read_embeddings(is);
}

/// One `token v1 ... vD` line per vocabulary entry.
inline void export_text(std::ostream& os, const Vocabulary& vocab, const Matrix& embeddings) {
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        os << vocab.tokens()[id];
        for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
            os << ' ' << format_double(embeddings(i, static_cast<Eigen::Index>(id)));
        os << '\n';
    }
}

}  // namespace ats::sswe
