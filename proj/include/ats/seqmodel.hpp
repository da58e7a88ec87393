// Essay regressor: stacked (optionally bidirectional) peephole LSTMs read
// the word vectors of an essay, the hidden state at the last word is the
// essay embedding, and a linear unit maps it to a score. Trained with
// RMSprop; gradients reach the word embeddings.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ats/common.hpp"
#include "ats/corpus.hpp"

namespace ats::seq {

using FlatMap = Eigen::Map<Vector>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// One LSTM layer (one direction)
// ---------------------------------------------------------------------------

/// Gate order inside the arrays: input, forget, cell candidate, output.
/// Peepholes exist for input, forget and output only.
struct LstmLayer {
    enum Gate { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };
    enum Peep { kPeepInput = 0, kPeepForget = 1, kPeepOutput = 2 };

    std::array<Matrix, 4> w_in;     // units x in
    std::array<Matrix, 4> w_rec;    // units x units
    std::array<Matrix, 3> w_peep;   // units x units (only the diagonal in diagonal mode)
    std::array<Vector, 4> bias;     // units
    bool diagonal_peepholes = false;

    Eigen::Index units() const { return w_rec[0].rows(); }
    Eigen::Index inputs() const { return w_in[0].cols(); }

    static LstmLayer zeros(Eigen::Index in, Eigen::Index units, bool diagonal = false) {
        LstmLayer l;
        for (auto& m : l.w_in) m = Matrix::Zero(units, in);
        for (auto& m : l.w_rec) m = Matrix::Zero(units, units);
        for (auto& m : l.w_peep) m = Matrix::Zero(units, units);
        for (auto& b : l.bias) b = Vector::Zero(units);
        l.diagonal_peepholes = diagonal;
        return l;
    }

    /// Calls f(name, flat view) for every tensor in a fixed order.
    template <typename F>
    void visit(F&& f) {
        static constexpr std::array<std::string_view, 4> in_names{"W_is", "W_fs", "W_cs", "W_os"};
        static constexpr std::array<std::string_view, 4> rec_names{"W_ih", "W_fh", "W_ch", "W_oh"};
        static constexpr std::array<std::string_view, 3> peep_names{"W_ic", "W_fc", "W_oc"};
        static constexpr std::array<std::string_view, 4> bias_names{"b_i", "b_f", "b_c", "b_o"};
        for (int k = 0; k < 4; ++k) f(in_names[k], FlatMap(w_in[k].data(), w_in[k].size()));
        for (int k = 0; k < 4; ++k) f(rec_names[k], FlatMap(w_rec[k].data(), w_rec[k].size()));
        for (int k = 0; k < 3; ++k) f(peep_names[k], FlatMap(w_peep[k].data(), w_peep[k].size()));
        for (int k = 0; k < 4; ++k) f(bias_names[k], FlatMap(bias[k].data(), bias[k].size()));
    }

    Vector peep(int k, const Vector& c) const {
        return diagonal_peepholes ? Vector(w_peep[k].diagonal().cwiseProduct(c)) : Vector(w_peep[k] * c);
    }
    Vector peep_transposed(int k, const Vector& d) const {
        return diagonal_peepholes ? Vector(w_peep[k].diagonal().cwiseProduct(d)) : Vector(w_peep[k].transpose() * d);
    }
};

/// Everything one timestep needs to be differentiated.
struct StepCache {
    Vector x, h_prev, c_prev;
    Vector i, f, g, o, c, tanh_c, h;
};

/// One step of the peephole cell. The input and forget gates look at the
/// previous cell state; the output gate looks at the new one.
inline StepCache lstm_step_cached(const LstmLayer& l, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
    if (x.size() != l.inputs() || h_prev.size() != l.units() || c_prev.size() != l.units())
        throw ShapeError("lstm_step: input " + std::to_string(x.size()) + "/state " + std::to_string(h_prev.size()) +
                         " do not match layer " + std::to_string(l.inputs()) + "x" + std::to_string(l.units()));
    using L = LstmLayer;
    StepCache s;
    s.x = x;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    auto sig = [](const Vector& v) { return Vector(v.unaryExpr([](double z) { return sigmoid(z); })); };
    s.i = sig(l.w_in[L::kInput] * x + l.w_rec[L::kInput] * h_prev + l.peep(L::kPeepInput, c_prev) + l.bias[L::kInput]);
    s.f = sig(l.w_in[L::kForget] * x + l.w_rec[L::kForget] * h_prev + l.peep(L::kPeepForget, c_prev) +
              l.bias[L::kForget]);
    s.g = (l.w_in[L::kCell] * x + l.w_rec[L::kCell] * h_prev + l.bias[L::kCell]).array().tanh().matrix();
    s.c = s.i.cwiseProduct(s.g) + s.f.cwiseProduct(c_prev);
    s.o = sig(l.w_in[L::kOutput] * x + l.w_rec[L::kOutput] * h_prev + l.peep(L::kPeepOutput, s.c) +
              l.bias[L::kOutput]);
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = s.o.cwiseProduct(s.tanh_c);
    return s;
}

struct StepResult {
    Vector h, c;
};

inline StepResult lstm_step(const LstmLayer& l, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
    auto s = lstm_step_cached(l, x, h_prev, c_prev);
    return {std::move(s.h), std::move(s.c)};
}

/// Runs a layer over `inputs` in the given order from zero state.
inline std::vector<StepCache> run_layer(const LstmLayer& l, const std::vector<Vector>& inputs) {
    std::vector<StepCache> steps;
    steps.reserve(inputs.size());
    Vector h = Vector::Zero(l.units()), c = Vector::Zero(l.units());
    for (const auto& x : inputs) {
        steps.push_back(lstm_step_cached(l, x, h, c));
        h = steps.back().h;
        c = steps.back().c;
    }
    return steps;
}

/// BPTT through one direction. `dh_ext[t]` is the loss gradient arriving at
/// h_t from outside the recurrence (processing order). Parameter gradients
/// are accumulated into `grad`; the per-step input gradients are returned.
inline std::vector<Vector> backprop_layer(const LstmLayer& l, const std::vector<StepCache>& steps,
                                          const std::vector<Vector>& dh_ext, LstmLayer& grad) {
    using L = LstmLayer;
    const auto n = l.units();
    std::vector<Vector> dx(steps.size());
    Vector dh_next = Vector::Zero(n), dc_next = Vector::Zero(n);
    auto outer = [&](int peep, const Vector& da, const Vector& c) {
        if (l.diagonal_peepholes)
            grad.w_peep[peep].diagonal() += da.cwiseProduct(c);
        else
            grad.w_peep[peep] += da * c.transpose();
    };
    for (std::size_t k = steps.size(); k-- > 0;) {
        const auto& s = steps[k];
        const Vector dh = dh_ext[k] + dh_next;
        const Vector d_o = dh.cwiseProduct(s.tanh_c);
        const Vector da_o = d_o.cwiseProduct(s.o.cwiseProduct(Vector::Ones(n) - s.o));
        const Vector dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct(Vector::Ones(n) - s.tanh_c.cwiseAbs2()) +
                          l.peep_transposed(L::kPeepOutput, da_o);
        const Vector da_i = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct(Vector::Ones(n) - s.i));
        const Vector da_f = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct(Vector::Ones(n) - s.f));
        const Vector da_g = dc.cwiseProduct(s.i).cwiseProduct(Vector::Ones(n) - s.g.cwiseAbs2());

        const std::array<const Vector*, 4> da{&da_i, &da_f, &da_g, &da_o};
        for (int gate = 0; gate < 4; ++gate) {
            grad.w_in[gate] += *da[gate] * s.x.transpose();
            grad.w_rec[gate] += *da[gate] * s.h_prev.transpose();
            grad.bias[gate] += *da[gate];
        }
        outer(L::kPeepInput, da_i, s.c_prev);
        outer(L::kPeepForget, da_f, s.c_prev);
        outer(L::kPeepOutput, da_o, s.c);

        Vector dxk = Vector::Zero(l.inputs());
        dh_next = Vector::Zero(n);
        for (int gate = 0; gate < 4; ++gate) {
            dxk.noalias() += l.w_in[gate].transpose() * *da[gate];
            dh_next.noalias() += l.w_rec[gate].transpose() * *da[gate];
        }
        dx[k] = std::move(dxk);
        dc_next = dc.cwiseProduct(s.f) + l.peep_transposed(L::kPeepInput, da_i) +
                  l.peep_transposed(L::kPeepForget, da_f);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Architecture {
    int layers = 1;
    bool bidirectional = false;
    bool diagonal_peepholes = false;
    Eigen::Index embedding_dim = 200;
    Eigen::Index units = 10;  // D_LSTM
    double dropout = 0.5;
    bool raw_targets = false;  // trained on raw scores instead of [0,1]

    Eigen::Index output_width() const { return bidirectional ? 2 * units : units; }

    void validate() const {
        if (layers < 1 || layers > 2) throw ConfigError("layers must be 1 or 2");
        if (embedding_dim < 1 || units < 1) throw ConfigError("embedding and LSTM widths must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    }
};

/// Trainable tensors other than the embedding matrix.
struct Weights {
    std::vector<LstmLayer> forward;   // one per layer
    std::vector<LstmLayer> backward;  // empty unless bidirectional
    Matrix head_w;                    // 1 x output width
    double head_b = 0.0;

    static Weights zeros(const Architecture& a) {
        Weights w;
        for (int l = 0; l < a.layers; ++l) {
            const auto in = l == 0 ? a.embedding_dim : a.output_width();
            w.forward.push_back(LstmLayer::zeros(in, a.units, a.diagonal_peepholes));
            if (a.bidirectional) w.backward.push_back(LstmLayer::zeros(in, a.units, a.diagonal_peepholes));
        }
        w.head_w = Matrix::Zero(1, a.output_width());
        return w;
    }

    template <typename F>
    void visit(F&& f) {
        for (std::size_t l = 0; l < forward.size(); ++l) {
            forward[l].visit(f);
            if (!backward.empty()) backward[l].visit(f);
        }
        f("W_yh", FlatMap(head_w.data(), head_w.size()));
        f("b_y", FlatMap(&head_b, 1));
    }

    /// Walks two identically-shaped weight sets in lockstep.
    template <typename F>
    static void zip(Weights& a, Weights& b, F&& f) {
        std::vector<FlatMap> views;
        a.visit([&](std::string_view, FlatMap m) { views.push_back(m); });
        std::size_t k = 0;
        b.visit([&](std::string_view name, FlatMap m) {
            if (k >= views.size() || views[k].size() != m.size()) throw ShapeError("weight sets differ in shape");
            f(name, views[k++], m);
        });
        if (k != views.size()) throw ShapeError("weight sets differ in shape");
    }
};

struct SeqModel {
    Architecture arch;
    Weights weights;
    Matrix embeddings;  // D x |V|
    bool train_embeddings = true;

    static SeqModel zeros(const Architecture& a, Eigen::Index vocab_size) {
        a.validate();
        SeqModel m;
        m.arch = a;
        m.weights = Weights::zeros(a);
        m.embeddings = Matrix::Zero(a.embedding_dim, vocab_size);
        return m;
    }

    /// Weights uniform in [-scale, scale], forget-gate bias `forget_bias`,
    /// other biases 0. If `embeddings` is null the embedding matrix is drawn
    /// from the same distribution.
    static SeqModel random(const Architecture& a, Eigen::Index vocab_size, Rng& rng, const Matrix* embeddings = nullptr,
                           double scale = 0.05, double forget_bias = 1.0) {
        auto m = zeros(a, vocab_size);
        m.weights.visit([&](std::string_view name, FlatMap t) {
            if (name.starts_with("b_")) return;
            for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = rng.uniform(-scale, scale);
        });
        auto fix = [&](LstmLayer& l) {
            l.bias[LstmLayer::kForget].setConstant(forget_bias);
            if (l.diagonal_peepholes)
                for (auto& p : l.w_peep) p = Matrix(p.diagonal().asDiagonal());
        };
        for (auto& l : m.weights.forward) fix(l);
        for (auto& l : m.weights.backward) fix(l);
        if (embeddings) {
            if (embeddings->rows() != a.embedding_dim || embeddings->cols() != vocab_size)
                throw ShapeError("initial embeddings are " + std::to_string(embeddings->rows()) + "x" +
                                 std::to_string(embeddings->cols()) + ", model expects " +
                                 std::to_string(a.embedding_dim) + "x" + std::to_string(vocab_size));
            m.embeddings = *embeddings;
        } else {
            fill_uniform(m.embeddings, rng, -scale, scale);
        }
        return m;
    }

    bool operator==(const SeqModel& o) const {
        bool eq = embeddings == o.embeddings;
        auto a = weights, b = o.weights;
        Weights::zip(a, b, [&](std::string_view, FlatMap x, FlatMap y) { eq = eq && x == y; });
        return eq;
    }
};

/// Inverted-dropout masks on each layer's output sequence: masks[l] is
/// (layer output width) x T with entries 0 or 1/(1-r). Empty = no dropout.
using DropoutMasks = std::vector<Matrix>;

inline DropoutMasks sample_dropout(const Architecture& a, std::size_t length, Rng& rng) {
    DropoutMasks masks;
    if (a.dropout <= 0.0) return masks;
    const double keep = 1.0 - a.dropout;
    for (int l = 0; l < a.layers; ++l) {
        Matrix m(a.output_width(), static_cast<Eigen::Index>(length));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
        masks.push_back(std::move(m));
    }
    return masks;
}

struct LayerCache {
    std::vector<StepCache> forward;   // processing order = positions 0..T-1
    std::vector<StepCache> backward;  // processing order = positions T-1..0
};

struct ForwardCache {
    std::vector<TokenId> tokens;
    std::vector<LayerCache> layers;
    DropoutMasks masks;
    Vector embedding;     // essay embedding fed to the head (after dropout)
    double output = 0.0;  // unclamped
};

/// Layer output at position t: forward state ++ backward state, before dropout.
inline Vector layer_output(const LayerCache& lc, std::size_t t) {
    const auto& f = lc.forward[t].h;
    if (lc.backward.empty()) return f;
    const auto& b = lc.backward[lc.backward.size() - 1 - t].h;
    Vector out(f.size() + b.size());
    out << f, b;
    return out;
}

inline ForwardCache forward_essay(const SeqModel& m, const std::vector<TokenId>& tokens, const DropoutMasks& masks = {}) {
    if (tokens.empty()) throw DataError("cannot score an empty essay");
    const auto T = tokens.size();
    if (!masks.empty() && (masks.size() != static_cast<std::size_t>(m.arch.layers) ||
                           masks[0].cols() != static_cast<Eigen::Index>(T)))
        throw ShapeError("dropout masks do not match the essay");
    ForwardCache fc;
    fc.tokens = tokens;
    fc.masks = masks;

    std::vector<Vector> inputs;
    inputs.reserve(T);
    for (auto id : tokens) {
        if (id < 0 || id >= m.embeddings.cols()) throw LookupError("token id " + std::to_string(id) + " out of range");
        inputs.emplace_back(m.embeddings.col(id));
    }
    for (int l = 0; l < m.arch.layers; ++l) {
        LayerCache lc;
        lc.forward = run_layer(m.weights.forward[static_cast<std::size_t>(l)], inputs);
        if (m.arch.bidirectional) {
            std::vector<Vector> reversed(inputs.rbegin(), inputs.rend());
            lc.backward = run_layer(m.weights.backward[static_cast<std::size_t>(l)], reversed);
        }
        std::vector<Vector> outputs;
        outputs.reserve(T);
        for (std::size_t t = 0; t < T; ++t) {
            Vector o = layer_output(lc, t);
            if (!masks.empty()) o = o.cwiseProduct(masks[static_cast<std::size_t>(l)].col(static_cast<Eigen::Index>(t)));
            outputs.push_back(std::move(o));
        }
        fc.layers.push_back(std::move(lc));
        inputs = std::move(outputs);
    }

    // Essay embedding: the forward direction's state after the last word and
    // the backward direction's state after the first word.
    const auto& top = fc.layers.back();
    const auto units = m.arch.units;
    fc.embedding = Vector(m.arch.output_width());
    fc.embedding.head(units) = top.forward.back().h;
    if (m.arch.bidirectional) fc.embedding.tail(units) = top.backward.back().h;
    if (!masks.empty()) {
        const auto& mask = masks.back();
        fc.embedding.head(units) = fc.embedding.head(units).cwiseProduct(mask.col(static_cast<Eigen::Index>(T - 1)).head(units));
        if (m.arch.bidirectional)
            fc.embedding.tail(units) = fc.embedding.tail(units).cwiseProduct(mask.col(0).tail(units));
    }
    fc.output = (m.weights.head_w * fc.embedding)(0) + m.weights.head_b;
    return fc;
}

inline double predict_scaled(const SeqModel& m, const std::vector<TokenId>& tokens) {
    return forward_essay(m, tokens).output;
}

struct Gradients {
    Weights weights;
    std::map<TokenId, Vector> embeddings;  // touched columns only
};

inline Gradients zero_gradients(const SeqModel& m) { return {Weights::zeros(m.arch), {}}; }

/// Backpropagates dL/d(output) = `d_output` through the cached forward pass.
/// Returns dL/dx_t for every position (the input word vectors).
inline std::vector<Vector> backward_essay(const SeqModel& m, const ForwardCache& fc, double d_output, Gradients& g) {
    const auto T = fc.tokens.size();
    const auto units = m.arch.units;
    const auto L = static_cast<std::size_t>(m.arch.layers);
    const bool bi = m.arch.bidirectional;

    g.weights.head_w += d_output * fc.embedding.transpose();
    g.weights.head_b += d_output;
    Vector d_emb = d_output * m.weights.head_w.transpose();

    // gradient w.r.t. the (post-dropout) outputs of the current layer, by position
    const auto width = m.arch.output_width();
    std::vector<Vector> d_out(T, Vector::Zero(width));
    d_out[T - 1].head(units) += d_emb.head(units);
    if (bi) d_out[0].tail(units) += d_emb.tail(units);

    std::vector<Vector> d_inputs;
    for (std::size_t l = L; l-- > 0;) {
        if (!fc.masks.empty())
            for (std::size_t t = 0; t < T; ++t)
                d_out[t] = d_out[t].cwiseProduct(fc.masks[l].col(static_cast<Eigen::Index>(t)));
        const auto& lc = fc.layers[l];
        std::vector<Vector> dh_f(T), dh_b;
        for (std::size_t t = 0; t < T; ++t) dh_f[t] = d_out[t].head(units);
        d_inputs = backprop_layer(m.weights.forward[l], lc.forward, dh_f, g.weights.forward[l]);
        if (bi) {
            dh_b.resize(T);
            for (std::size_t k = 0; k < T; ++k) dh_b[k] = d_out[T - 1 - k].tail(units);
            auto dx_b = backprop_layer(m.weights.backward[l], lc.backward, dh_b, g.weights.backward[l]);
            for (std::size_t k = 0; k < T; ++k) d_inputs[T - 1 - k] += dx_b[k];
        }
        d_out = d_inputs;
    }
    if (m.train_embeddings) {
        for (std::size_t t = 0; t < T; ++t) {
            auto [it, fresh] = g.embeddings.try_emplace(fc.tokens[t]);
            if (fresh) it->second = Vector::Zero(m.arch.embedding_dim);
            it->second += d_inputs[t];
        }
    }
    return d_inputs;
}

/// Squared error (output - gold)^2 and its gradient into `g`.
inline double bptt(const SeqModel& m, const std::vector<TokenId>& tokens, double gold, Gradients& g,
                   const DropoutMasks& masks = {}) {
    const auto fc = forward_essay(m, tokens, masks);
    const double err = fc.output - gold;
    backward_essay(m, fc, 2.0 * err, g);
    return err * err;
}

// ---------------------------------------------------------------------------
// RMSprop
// ---------------------------------------------------------------------------

struct RmsProp {
    double eta = 1e-3;
    double rho = 0.9;
    double epsilon = 1e-8;
    Weights acc;
    Matrix embedding_acc;

    static RmsProp for_model(const SeqModel& m, double eta, double rho = 0.9, double epsilon = 1e-8) {
        RmsProp s;
        s.eta = eta;
        s.rho = rho;
        s.epsilon = epsilon;
        s.acc = Weights::zeros(m.arch);
        s.embedding_acc = Matrix::Zero(m.embeddings.rows(), m.embeddings.cols());
        return s;
    }

    static void update(double& param, double& acc, double g, double eta, double rho, double eps) {
        acc = rho * acc + (1.0 - rho) * g * g;
        param -= eta * g / std::sqrt(acc + eps);
    }

    /// acc <- rho acc + (1-rho) g^2 ; param <- param - eta g / sqrt(acc + eps),
    /// element-wise over every tensor including the whole embedding matrix.
    void step(SeqModel& m, Gradients& g) {
        std::vector<FlatMap> accs;
        acc.visit([&](std::string_view, FlatMap a) { accs.push_back(a); });
        std::size_t k = 0;
        Weights::zip(m.weights, g.weights, [&](std::string_view, FlatMap p, FlatMap gr) {
            auto& a = accs[k++];
            for (Eigen::Index i = 0; i < p.size(); ++i) update(p(i), a(i), gr(i), eta, rho, epsilon);
        });
        if (!m.train_embeddings) return;
        embedding_acc *= rho;
        for (const auto& [id, col] : g.embeddings) {
            for (Eigen::Index i = 0; i < col.size(); ++i) {
                double& a = embedding_acc(i, id);
                a += (1.0 - rho) * col(i) * col(i);
                m.embeddings(i, id) -= eta * col(i) / std::sqrt(a + epsilon);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Training and prediction
// ---------------------------------------------------------------------------

struct TrainOptions {
    int epochs = 50;
    int batch_size = 32;
    std::uint64_t seed = 1;
    double eta = 1e-3;
    double rho = 0.9;
    double epsilon = 1e-8;
    int patience = 25;          // <= 0 disables early stopping
    bool select_best = true;    // keep the best-validation snapshot
    double clip_norm = 0.0;     // global gradient-norm clipping, 0 = off

    void validate() const {
        if (epochs < 0) throw ConfigError("epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("learning rate must be finite and >= 0");
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho_rms must lie in [0, 1)");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
        if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_mse = 0.0;
    double val_rmse = 0.0;
};

struct TrainResult {
    SeqModel model;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
};

/// Raw-scale prediction: unscale the clamped output and clamp into the set's range.
inline double to_raw(const SeqModel& m, double output, const ScoreRange& range) {
    if (m.arch.raw_targets) return range.clamp(output);
    return range.clamp(range.unscale(std::clamp(output, 0.0, 1.0)));
}

inline std::vector<double> predict(const SeqModel& m, const std::vector<Essay>& essays, const ScoreRanges& ranges) {
    std::vector<double> out;
    out.reserve(essays.size());
    for (const auto& e : essays) out.push_back(to_raw(m, predict_scaled(m, e.tokens), range_for(ranges, e.set_id)));
    return out;
}

inline double target_of(const SeqModel& m, const Essay& e) { return m.arch.raw_targets ? e.raw_score : e.scaled_score; }

/// Raw-scale RMSE of clamped predictions.
inline double rmse_raw(const SeqModel& m, const std::vector<Essay>& essays, const ScoreRanges& ranges) {
    if (essays.empty()) throw DataError("cannot compute RMSE of an empty set");
    const auto pred = predict(m, essays, ranges);
    double sum = 0.0;
    for (std::size_t i = 0; i < essays.size(); ++i) sum += (pred[i] - essays[i].raw_score) * (pred[i] - essays[i].raw_score);
    return std::sqrt(sum / static_cast<double>(essays.size()));
}

inline double global_norm(Gradients& g) {
    double sq = 0.0;
    g.weights.visit([&](std::string_view, FlatMap t) { sq += t.squaredNorm(); });
    for (const auto& [id, col] : g.embeddings) sq += col.squaredNorm();
    return std::sqrt(sq);
}

inline void scale_gradients(Gradients& g, double factor) {
    g.weights.visit([&](std::string_view, FlatMap t) { t *= factor; });
    for (auto& [id, col] : g.embeddings) col *= factor;
}

/// Mini-batch RMSprop on squared error with per-epoch validation RMSE
/// (raw scale) and best-snapshot selection.
inline TrainResult train_scorer(const SeqModel& initial, const std::vector<Essay>& train,
                                const std::vector<Essay>& validation, const ScoreRanges& ranges,
                                const TrainOptions& opt) {
    opt.validate();
    if (train.empty()) throw DataError("training set is empty");
    if (validation.empty()) throw DataError("validation set is empty");
    Rng rng(opt.seed);
    TrainResult out;
    SeqModel model = initial;
    out.model = model;
    auto rms = RmsProp::for_model(model, opt.eta, opt.rho, opt.epsilon);

    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<std::size_t> order(train.size());
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        double sse = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
            const auto stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            auto g = zero_gradients(model);
            for (std::size_t k = start; k < stop; ++k) {
                const auto& e = train[order[k]];
                const auto masks = sample_dropout(model.arch, e.tokens.size(), rng);
                sse += bptt(model, e.tokens, target_of(model, e), g, masks);
            }
            scale_gradients(g, 1.0 / static_cast<double>(stop - start));
            if (opt.clip_norm > 0.0) {
                const double norm = global_norm(g);
                if (norm > opt.clip_norm) scale_gradients(g, opt.clip_norm / norm);
            }
            rms.step(model, g);
        }
        const double train_mse = sse / static_cast<double>(train.size());
        if (!std::isfinite(train_mse)) throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch));
        const double val = rmse_raw(model, validation, ranges);
        out.history.push_back({epoch, train_mse, val});
        if (!opt.select_best || val < best) {
            best = std::min(best, val);
            out.model = model;
            out.best_epoch = epoch;
            since_best = 0;
        } else if (opt.patience > 0 && ++since_best >= opt.patience) {
            break;
        }
    }
    return out;
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
    os << "epoch,train_mse,val_rmse\n";
    for (const auto& h : history) os << h.epoch << ',' << format_double(h.train_mse) << ',' << format_double(h.val_rmse) << '\n';
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMagic = "SATS";
inline constexpr std::uint32_t kFormatVersion = 1;

struct ModelFile {
    SeqModel model;
    Vocabulary vocab;
    ScoreRanges ranges;
    std::string config_hash;
};

/// magic "SATS", version, architecture (layers, bidirectional, diagonal
/// peepholes, raw targets, train embeddings, D, D_LSTM, dropout), config
/// hash, vocabulary, score ranges, then every weight tensor in visit order
/// and finally the embedding matrix; all numbers little-endian.
inline void write_model(std::ostream& os, const SeqModel& m, const Vocabulary& vocab, const ScoreRanges& ranges,
                        const std::string& config_hash = {}) {
    if (static_cast<std::size_t>(m.embeddings.cols()) != vocab.size())
        throw ShapeError("model embeddings have " + std::to_string(m.embeddings.cols()) + " columns, vocabulary has " +
                         std::to_string(vocab.size()));
    BinaryWriter w(os);
    w.bytes(kMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(m.arch.layers));
    w.u32(m.arch.bidirectional ? 1 : 0);
    w.u32(m.arch.diagonal_peepholes ? 1 : 0);
    w.u32(m.arch.raw_targets ? 1 : 0);
    w.u32(m.train_embeddings ? 1 : 0);
    w.u64(static_cast<std::uint64_t>(m.arch.embedding_dim));
    w.u64(static_cast<std::uint64_t>(m.arch.units));
    w.f64(m.arch.dropout);
    w.str(config_hash);
    w.u64(vocab.size());
    for (const auto& t : vocab.tokens()) w.str(t);
    w.u32(static_cast<std::uint32_t>(ranges.size()));
    for (const auto& [set, r] : ranges) {
        w.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(set)));
        w.f64(r.min);
        w.f64(r.max);
    }
    auto weights = m.weights;
    weights.visit([&](std::string_view, FlatMap t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t(i));
    });
    w.matrix(m.embeddings);
}

inline ModelFile read_model(std::istream& is) {
    BinaryReader r(is);
    if (r.bytes(4) != kMagic) throw FormatError("not a scorer model file (bad magic)");
    if (const auto v = r.u32(); v != kFormatVersion) throw FormatError("unsupported model format version " + std::to_string(v));
    ModelFile f;
    Architecture a;
    a.layers = static_cast<int>(r.u32());
    a.bidirectional = r.u32() != 0;
    a.diagonal_peepholes = r.u32() != 0;
    a.raw_targets = r.u32() != 0;
    const bool train_embeddings = r.u32() != 0;
    a.embedding_dim = static_cast<Eigen::Index>(r.u64());
    a.units = static_cast<Eigen::Index>(r.u64());
    a.dropout = r.f64();
    if (a.layers < 1 || a.layers > 2 || a.embedding_dim < 1 || a.embedding_dim > (1 << 16) || a.units < 1 ||
        a.units > (1 << 14) || !(a.dropout >= 0.0 && a.dropout < 1.0))
        throw FormatError("implausible model architecture");
    f.config_hash = r.str(256);
    const auto vocab_size = r.u64();
    if (vocab_size < 3 || vocab_size > (1ull << 26)) throw FormatError("implausible vocabulary size");
    std::vector<std::string> tokens;
    tokens.reserve(vocab_size);
    for (std::uint64_t i = 0; i < vocab_size; ++i) tokens.push_back(r.str());
    f.vocab = Vocabulary::from_tokens(tokens);
    const auto n_ranges = r.u32();
    for (std::uint32_t i = 0; i < n_ranges; ++i) {
        const auto set = static_cast<int>(static_cast<std::int64_t>(r.u64()));
        const double lo = r.f64(), hi = r.f64();
        f.ranges[set] = ScoreRange{lo, hi};
    }
    f.model = SeqModel::zeros(a, static_cast<Eigen::Index>(vocab_size));
    f.model.train_embeddings = train_embeddings;
    f.model.weights.visit([&](std::string_view, FlatMap t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = r.f64();
    });
    r.matrix(f.model.embeddings);
    return f;
}

inline void save_model(const std::filesystem::path& path, const SeqModel& m, const Vocabulary& vocab,
                       const ScoreRanges& ranges, const std::string& config_hash = {}) {
    write_file_atomic(path, [&](std::ostream& os) { write_model(os, m, vocab, ranges, config_hash); }, true);
}

inline ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open model file '" + path.string() + "'");
    return read_model(is);
}

}  // namespace ats::seq
