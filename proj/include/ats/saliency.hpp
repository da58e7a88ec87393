// Token quality from input-gradient magnitudes. The trained scorer is
// given the set's maximum (then minimum) score as a pseudo-gold target; the
// norm of dL/dx_t under each target says how far word t would have to move
// to reach it. Nothing is updated.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ats/common.hpp"
#include "ats/corpus.hpp"
#include "ats/seqmodel.hpp"

namespace ats::saliency {

inline constexpr int kBins = 8;

struct TokenQuality {
    std::string word;
    double mag_max = 0.0;
    double mag_min = 0.0;
    double quality = 0.0;  // mag_min - mag_max, larger is better
    int bin = 0;           // 0 = worst octile ... 7 = best
};

struct QualityMap {
    std::int64_t essay_id = 0;
    double predicted = 0.0;  // raw scale
    std::vector<TokenQuality> tokens;

    double mean_quality() const {
        if (tokens.empty()) return 0.0;
        double s = 0.0;
        for (const auto& t : tokens) s += t.quality;
        return s / static_cast<double>(tokens.size());
    }
};

inline void require_usable(const seq::SeqModel& m) {
    if (m.embeddings.size() == 0) throw DataError("saliency needs a model with an embedding matrix");
    if (m.weights.head_w.isZero(0.0)) throw DataError("model looks untrained: regression head is all zero");
}

/// dL/dx_t for L = (output - pseudo)^2, one vector per position.
inline std::vector<Vector> input_gradients(const seq::SeqModel& m, const std::vector<TokenId>& tokens, double pseudo) {
    require_usable(m);
    const auto fc = seq::forward_essay(m, tokens);
    auto scratch = seq::zero_gradients(m);
    return seq::backward_essay(m, fc, 2.0 * (fc.output - pseudo), scratch);
}

/// Pseudo-score targets in the model's output space: the set maximum and minimum.
struct PseudoScores {
    double max = 1.0;
    double min = 0.0;
};

inline PseudoScores pseudo_scores(const seq::SeqModel& m, const ScoreRange& range) {
    if (m.arch.raw_targets) return {range.max, range.min};
    return {1.0, 0.0};
}

/// Bins are per-essay octiles of quality; ties are ordered by position.
inline void assign_bins(std::vector<TokenQuality>& tokens) {
    std::vector<std::size_t> order(tokens.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return tokens[a].quality < tokens[b].quality; });
    const auto n = tokens.size();
    for (std::size_t rank = 0; rank < n; ++rank)
        tokens[order[rank]].bin = static_cast<int>(rank * kBins / n);
}

/// Quality of each token of `words`/`ids` scored as one unit.
inline std::vector<TokenQuality> score_tokens(const seq::SeqModel& m, const std::vector<TokenId>& ids,
                                              const std::vector<std::string>& words, const PseudoScores& pseudo) {
    const auto fc = seq::forward_essay(m, ids);
    auto scratch = seq::zero_gradients(m);
    // One backward pass suffices: dL/dx scales linearly with (output - target).
    const auto unit = seq::backward_essay(m, fc, 1.0, scratch);
    const double to_max = 2.0 * (fc.output - pseudo.max);
    const double to_min = 2.0 * (fc.output - pseudo.min);
    std::vector<TokenQuality> out(ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        const double norm = unit[t].norm();
        out[t].word = t < words.size() ? words[t] : std::string();
        out[t].mag_max = std::abs(to_max) * norm;
        out[t].mag_min = std::abs(to_min) * norm;
        out[t].quality = out[t].mag_min - out[t].mag_max;
    }
    return out;
}

/// Essay-level map. With `span_len` > 0 the essay is cut into consecutive
/// spans of that many tokens and each span is scored as its own text;
/// bins are still assigned across the whole essay.
inline QualityMap quality_map(const seq::SeqModel& m, const Essay& essay, const ScoreRange& range,
                              std::size_t span_len = 0) {
    require_usable(m);
    if (essay.tokens.empty()) throw DataError("cannot build a quality map for an empty essay");
    const auto pseudo = pseudo_scores(m, range);
    QualityMap map;
    map.essay_id = essay.essay_id;
    map.predicted = seq::to_raw(m, seq::predict_scaled(m, essay.tokens), range);
    const auto T = essay.tokens.size();
    if (span_len == 0 || span_len >= T) {
        map.tokens = score_tokens(m, essay.tokens, essay.words, pseudo);
    } else {
        for (std::size_t start = 0; start < T; start += span_len) {
            const auto stop = std::min(T, start + span_len);
            std::vector<TokenId> ids(essay.tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                     essay.tokens.begin() + static_cast<std::ptrdiff_t>(stop));
            std::vector<std::string> words;
            if (essay.words.size() == T)
                words.assign(essay.words.begin() + static_cast<std::ptrdiff_t>(start),
                             essay.words.begin() + static_cast<std::ptrdiff_t>(stop));
            auto part = score_tokens(m, ids, words, pseudo);
            map.tokens.insert(map.tokens.end(), part.begin(), part.end());
        }
    }
    assign_bins(map.tokens);
    return map;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// 256-color palette: four reds from darkest, then four greens to darkest.
inline constexpr std::array<int, kBins> kAnsiColors{52, 88, 124, 160, 40, 34, 28, 22};
inline constexpr std::array<const char*, kBins> kHtmlColors{"#7f0000", "#b22222", "#d9534f", "#f2a7a7",
                                                            "#b7e1b7", "#6fc26f", "#2e8b2e", "#005f00"};

inline std::string render_ansi(const QualityMap& map, bool monochrome = false) {
    std::string out;
    for (std::size_t i = 0; i < map.tokens.size(); ++i) {
        const auto& t = map.tokens[i];
        if (i) out += ' ';
        if (monochrome) {
            out += t.word + "[" + std::to_string(t.bin) + "]";
        } else {
            out += "\x1b[48;5;" + std::to_string(kAnsiColors[static_cast<std::size_t>(t.bin)]) + "m\x1b[38;5;15m";
            out += t.word;
            out += "\x1b[0m";
        }
    }
    return out;
}

inline std::string html_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string render_html(const QualityMap& map, const std::string& config_hash = {}) {
    if (map.tokens.empty()) throw DataError("cannot render an empty quality map");
    char score[32];
    std::snprintf(score, sizeof score, "%.2f", map.predicted);
    const std::string title = "Essay " + std::to_string(map.essay_id) + " - predicted score " + score;
    std::ostringstream os;
    os << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
    if (!config_hash.empty()) os << "<meta name=\"config-hash\" content=\"" << html_escape(config_hash) << "\">\n";
    os << "<title>" << html_escape(title)
       << "</title>\n<style>body{font-family:serif;line-height:1.8;max-width:48em;margin:2em auto}"
          "span.t{padding:0 2px;border-radius:2px}</style>\n</head>\n<body>\n<h1>"
       << html_escape(title) << "</h1>\n<p>\n";
    for (std::size_t i = 0; i < map.tokens.size(); ++i) {
        const auto& t = map.tokens[i];
        const bool dark = t.bin <= 2 || t.bin >= 6;
        os << (i ? " " : "") << "<span class=\"t\" data-bin=\"" << t.bin << "\" style=\"background-color:"
           << kHtmlColors[static_cast<std::size_t>(t.bin)] << (dark ? ";color:#ffffff" : "") << "\">"
           << html_escape(t.word) << "</span>";
    }
    os << "\n</p>\n</body>\n</html>\n";
    return os.str();
}

inline void render_html(const QualityMap& map, const std::filesystem::path& path, const std::string& config_hash = {}) {
    const auto html = render_html(map, config_hash);
    write_file_atomic(path, [&](std::ostream& os) { os << html; });
}

}  // namespace ats::saliency
