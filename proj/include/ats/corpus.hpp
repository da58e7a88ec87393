// Tokenization, vocabulary, ASAP-style TSV ingestion, score scaling,
// stratified splits and window extraction for embedding training.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ats/common.hpp"

namespace ats {

using TokenId = std::int32_t;

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
inline bool is_ascii_space(unsigned char c) { return c < 128 && std::isspace(c); }
inline bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

// Length of an anonymisation placeholder (@[A-Z]+[0-9]*) starting at pos, or 0.
inline std::size_t placeholder_length(std::string_view text, std::size_t pos) {
    if (pos >= text.size() || text[pos] != '@') return 0;
    std::size_t i = pos + 1;
    while (i < text.size() && is_upper(static_cast<unsigned char>(text[i]))) ++i;
    if (i == pos + 1) return 0;
    while (i < text.size() && is_digit(static_cast<unsigned char>(text[i]))) ++i;
    return i - pos;
}

}  // namespace detail

/// Lowercases ASCII letters, splits on whitespace, emits every ASCII
/// punctuation character as its own token and keeps `@CAPS3`-style
/// placeholders verbatim. Non-ASCII bytes are left untouched.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (detail::is_ascii_space(c)) {
            flush();
            ++i;
        } else if (const auto len = detail::placeholder_length(text, i); len > 0) {
            flush();
            out.emplace_back(text.substr(i, len));
            i += len;
        } else if (detail::is_ascii_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
            ++i;
        } else {
            cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
            ++i;
        }
    }
    flush();
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kBoundary = 2;
    static constexpr TokenId kFirstWord = 3;

    static constexpr std::string_view kPadToken = "<pad>";
    static constexpr std::string_view kUnkToken = "<unk>";
    static constexpr std::string_view kBoundaryToken = "<s>";

    Vocabulary() {
        for (auto t : {kPadToken, kUnkToken, kBoundaryToken}) push(std::string(t));
    }

    /// Builds from a full id-ordered token list (specials first), as stored on disk.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens, int min_count = 1) {
        if (tokens.size() < 3 || tokens[0] != kPadToken || tokens[1] != kUnkToken ||
            tokens[2] != kBoundaryToken)
            throw DataError("vocabulary does not start with the reserved tokens");
        Vocabulary v;
        v.min_count_ = min_count;
        for (std::size_t i = 3; i < tokens.size(); ++i) {
            if (v.token_to_id_.count(tokens[i])) throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
            v.push(tokens[i]);
        }
        return v;
    }

    std::size_t size() const { return id_to_token_.size(); }
    std::size_t word_count() const { return size() - static_cast<std::size_t>(kFirstWord); }
    int min_count() const { return min_count_; }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    static bool is_special(TokenId id) { return id >= 0 && id < kFirstWord; }

    bool contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

    /// Out-of-vocabulary tokens map to UNK. Text spelling a PAD or boundary
    /// marker is also UNK so essays never contain those ids.
    TokenId encode(std::string_view token) const {
        auto it = token_to_id_.find(std::string(token));
        if (it == token_to_id_.end() || it->second == kPad || it->second == kBoundary) return kUnk;
        return it->second;
    }

    std::vector<TokenId> encode(const std::vector<std::string>& tokens) const {
        std::vector<TokenId> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(encode(t));
        return ids;
    }

    /// Lookup that rejects unknown tokens instead of mapping them to UNK.
    TokenId id_of(std::string_view token) const {
        auto it = token_to_id_.find(std::string(token));
        if (it == token_to_id_.end()) throw LookupError("unknown token '" + std::string(token) + "'");
        return it->second;
    }

    const std::string& decode(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= size())
            throw LookupError("token id " + std::to_string(id) + " out of range");
        return id_to_token_[static_cast<std::size_t>(id)];
    }

    friend Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>&, int);

private:
    void push(std::string token) {
        token_to_id_.emplace(token, static_cast<TokenId>(id_to_token_.size()));
        id_to_token_.push_back(std::move(token));
    }

    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
    int min_count_ = 1;
};

/// Ids are assigned by descending frequency, ties broken lexicographically.
/// Tokens seen fewer than `min_count` times are left out and encode to UNK.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& documents, int min_count) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::map<std::string, std::size_t> freq;
    for (const auto& doc : documents)
        for (const auto& t : doc) ++freq[t];
    for (auto special : {Vocabulary::kPadToken, Vocabulary::kUnkToken, Vocabulary::kBoundaryToken})
        freq.erase(std::string(special));

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : freq)
        if (n >= static_cast<std::size_t>(min_count)) kept.emplace_back(tok, n);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    v.min_count_ = min_count;
    for (auto& [tok, n] : kept) v.push(tok);
    return v;
}

// ---------------------------------------------------------------------------
// Scores and essays
// ---------------------------------------------------------------------------

struct ScoreRange {
    double min = 0.0;
    double max = 1.0;

    double scale(double raw) const { return (raw - min) / (max - min); }
    double unscale(double scaled) const { return min + scaled * (max - min); }
    double clamp(double raw) const { return std::clamp(raw, min, max); }
};

using ScoreRanges = std::map<int, ScoreRange>;

inline const ScoreRange& range_for(const ScoreRanges& ranges, int set_id) {
    auto it = ranges.find(set_id);
    if (it == ranges.end()) throw LookupError("no score range for essay set " + std::to_string(set_id));
    return it->second;
}

/// An essay whose tokens have been mapped through a vocabulary. `words`
/// keeps the surface tokens for display (same length as `tokens`).
struct Essay {
    std::int64_t essay_id = 0;
    int set_id = 0;
    std::vector<TokenId> tokens;
    std::vector<std::string> words;
    double raw_score = 0.0;
    double scaled_score = 0.0;
};

/// One row of an ASAP-format file before vocabulary encoding.
struct RawEssay {
    std::int64_t essay_id = 0;
    int set_id = 0;
    std::vector<std::string> words;
    double raw_score = 0.0;
};

struct RowError {
    std::size_t line = 0;
    std::string message;
};

struct IngestResult {
    std::vector<RawEssay> essays;
    ScoreRanges ranges;
    std::vector<RowError> errors;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::string tmp(s);
    char* end = nullptr;
    const long long v = std::strtoll(tmp.c_str(), &end, 10);
    if (end != tmp.c_str() + tmp.size()) return std::nullopt;
    return static_cast<std::int64_t>(v);
}

}  // namespace detail

/// Parses `set_id<TAB>min<TAB>max` lines; `#` starts a comment.
inline ScoreRanges parse_score_ranges(std::istream& is) {
    ScoreRanges out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        auto f = detail::split_tabs(body);
        if (f.size() != 3) throw DataError("score range table line " + std::to_string(lineno) + ": expected 3 fields");
        auto set = detail::parse_int(f[0]);
        auto lo = detail::parse_double(f[1]);
        auto hi = detail::parse_double(f[2]);
        if (!set || !lo || !hi || !(*hi > *lo))
            throw DataError("score range table line " + std::to_string(lineno) + ": invalid entry");
        out[static_cast<int>(*set)] = ScoreRange{*lo, *hi};
    }
    return out;
}

inline ScoreRanges load_score_ranges(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    return parse_score_ranges(is);
}

/// Reads an ASAP-style TSV. Row-level problems (bad score, wrong field
/// count) are collected in `errors` and the row is skipped; a missing
/// required column aborts. Without `supplied_ranges`, each set's range is
/// its observed min/max.
inline IngestResult ingest_asap_tsv(std::istream& is, const ScoreRanges* supplied_ranges = nullptr) {
    IngestResult result;
    std::string line;
    if (!std::getline(is, line)) throw DataError("input is empty: missing header row");
    const auto header = detail::split_tabs(detail::trim(line));
    auto column = [&](std::string_view name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::trim(header[i]) == name) return i;
        throw DataError("missing required column '" + std::string(name) + "'");
    };
    const std::size_t c_id = column("essay_id");
    const std::size_t c_set = column("essay_set");
    const std::size_t c_text = column("essay");
    const std::size_t c_score = column("domain1_score");
    const std::size_t needed = std::max({c_id, c_set, c_text, c_score}) + 1;

    std::set<std::int64_t> seen_ids;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_tabs(line);
        if (f.size() < needed) {
            result.errors.push_back({lineno, "expected at least " + std::to_string(needed) + " fields, got " +
                                                 std::to_string(f.size())});
            continue;
        }
        const auto id = detail::parse_int(f[c_id]);
        const auto set = detail::parse_int(f[c_set]);
        const auto score = detail::parse_double(f[c_score]);
        if (!id) {
            result.errors.push_back({lineno, "non-numeric essay_id"});
            continue;
        }
        if (!set) {
            result.errors.push_back({lineno, "non-numeric essay_set"});
            continue;
        }
        if (!score) {
            result.errors.push_back({lineno, "non-numeric domain1_score '" + std::string(detail::trim(f[c_score])) + "'"});
            continue;
        }
        if (!seen_ids.insert(*id).second) {
            result.errors.push_back({lineno, "duplicate essay_id " + std::to_string(*id)});
            continue;
        }
        auto words = tokenize(f[c_text]);
        if (words.empty()) {
            result.errors.push_back({lineno, "essay text is empty"});
            continue;
        }
        result.essays.push_back(RawEssay{*id, static_cast<int>(*set), std::move(words), *score});
    }

    if (supplied_ranges) {
        for (const auto& e : result.essays) {
            const auto& r = range_for(*supplied_ranges, e.set_id);
            if (e.raw_score < r.min || e.raw_score > r.max)
                throw DataError("essay " + std::to_string(e.essay_id) + " score outside the supplied range of set " +
                                std::to_string(e.set_id));
            result.ranges[e.set_id] = r;
        }
    } else {
        for (const auto& e : result.essays) {
            auto [it, fresh] = result.ranges.try_emplace(e.set_id, ScoreRange{e.raw_score, e.raw_score});
            if (!fresh) {
                it->second.min = std::min(it->second.min, e.raw_score);
                it->second.max = std::max(it->second.max, e.raw_score);
            }
        }
        for (const auto& [set, r] : result.ranges)
            if (!(r.max > r.min))
                throw DataError("essay set " + std::to_string(set) +
                                " has a single observed score; supply a score range table");
    }
    return result;
}

inline IngestResult ingest_asap_tsv(const std::filesystem::path& path, const ScoreRanges* supplied_ranges = nullptr) {
    std::istringstream is(read_file(path));
    return ingest_asap_tsv(is, supplied_ranges);
}

/// Maps surface tokens through `vocab` and scales the score into [0, 1].
inline Essay encode_essay(const RawEssay& raw, const Vocabulary& vocab, const ScoreRanges& ranges) {
    Essay e;
    e.essay_id = raw.essay_id;
    e.set_id = raw.set_id;
    e.words = raw.words;
    e.tokens = vocab.encode(raw.words);
    e.raw_score = raw.raw_score;
    e.scaled_score = range_for(ranges, raw.set_id).scale(raw.raw_score);
    return e;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train = 0.64;
    double validation = 0.16;
    double test = 0.20;
    std::uint64_t seed = 0;

    void validate() const {
        if (train < 0 || validation < 0 || test < 0)
            throw ConfigError("split ratios must be non-negative");
        if (std::abs(train + validation + test - 1.0) > 1e-9)
            throw ConfigError("split ratios must sum to 1");
    }
};

struct SplitIds {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> validation;
    std::vector<std::int64_t> test;
};

/// Sort key for an essay under a split seed.
inline std::uint64_t split_key(std::int64_t essay_id, std::uint64_t seed) {
    return Rng::splitmix(static_cast<std::uint64_t>(essay_id) ^ Rng::splitmix(seed));
}

/// Stratified by set: inside each set essays are ordered by `split_key`, the
/// first floor(n*test) go to test, the next floor(n*validation) to
/// validation, the remainder to train. Output id lists are sorted.
template <typename EssayT>
SplitIds split_corpus(const std::vector<EssayT>& essays, const SplitSpec& spec) {
    spec.validate();
    std::map<int, std::vector<std::int64_t>> by_set;
    for (const auto& e : essays) by_set[e.set_id].push_back(e.essay_id);

    SplitIds out;
    for (auto& [set, ids] : by_set) {
        std::sort(ids.begin(), ids.end(), [&](std::int64_t a, std::int64_t b) {
            const auto ka = split_key(a, spec.seed), kb = split_key(b, spec.seed);
            return ka != kb ? ka < kb : a < b;
        });
        const auto n = static_cast<double>(ids.size());
        const auto n_test = static_cast<std::size_t>(std::floor(n * spec.test + 1e-9));
        const auto n_val = static_cast<std::size_t>(std::floor(n * spec.validation + 1e-9));
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i < n_test)
                out.test.push_back(ids[i]);
            else if (i < n_test + n_val)
                out.validation.push_back(ids[i]);
            else
                out.train.push_back(ids[i]);
        }
    }
    for (auto* v : {&out.train, &out.validation, &out.test}) std::sort(v->begin(), v->end());
    return out;
}

/// One id per line; lines starting with `#` are comments.
inline void write_manifest(const std::filesystem::path& path, const std::vector<std::int64_t>& ids,
                           const std::string& config_hash = {}) {
    write_file_atomic(path, [&](std::ostream& os) {
        if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
        for (auto id : ids) os << id << '\n';
    });
}

inline std::vector<std::int64_t> read_manifest(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    std::vector<std::int64_t> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        auto id = detail::parse_int(body);
        if (!id) throw DataError(path.string() + ":" + std::to_string(lineno) + ": not an essay id");
        ids.push_back(*id);
    }
    return ids;
}

// ---------------------------------------------------------------------------
// Windows and corruption
// ---------------------------------------------------------------------------

struct WindowSample {
    std::vector<TokenId> context;
    std::size_t center_index = 0;
    double scaled_score = 0.0;
    std::int64_t source_essay = 0;

    TokenId center() const { return context[center_index]; }
};

/// One window per token position, BOUNDARY-padded at the edges.
inline std::vector<WindowSample> extract_windows(const Essay& essay, int n) {
    if (n < 3 || n % 2 == 0) throw ConfigError("window size must be odd and >= 3, got " + std::to_string(n));
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    const auto len = static_cast<std::ptrdiff_t>(essay.tokens.size());
    std::vector<WindowSample> out;
    out.reserve(essay.tokens.size());
    for (std::ptrdiff_t t = 0; t < len; ++t) {
        WindowSample w;
        w.center_index = static_cast<std::size_t>(half);
        w.scaled_score = essay.scaled_score;
        w.source_essay = essay.essay_id;
        w.context.reserve(static_cast<std::size_t>(n));
        for (std::ptrdiff_t k = t - half; k <= t + half; ++k)
            w.context.push_back(k < 0 || k >= len ? Vocabulary::kBoundary : essay.tokens[static_cast<std::size_t>(k)]);
        out.push_back(std::move(w));
    }
    return out;
}

/// Draws one replacement id uniformly from the non-special vocabulary,
/// excluding `target`.
inline TokenId draw_corruption(TokenId target, std::size_t vocab_size, Rng& rng) {
    const auto words = vocab_size > 3 ? vocab_size - 3 : 0;
    if (words < 2) throw DataError("vocabulary needs at least 2 non-special words to draw corruptions");
    if (Vocabulary::is_special(target) || static_cast<std::size_t>(target) >= vocab_size)
        return static_cast<TokenId>(Vocabulary::kFirstWord + static_cast<TokenId>(rng.index(words)));
    auto r = static_cast<TokenId>(Vocabulary::kFirstWord + static_cast<TokenId>(rng.index(words - 1)));
    return r >= target ? r + 1 : r;
}

/// E copies of the window's context, each with a different random center.
inline std::vector<std::vector<TokenId>> corrupt_window(const WindowSample& sample, int count,
                                                        std::size_t vocab_size, Rng& rng) {
    if (count < 1) throw ConfigError("corruption count must be >= 1");
    std::vector<std::vector<TokenId>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        auto ctx = sample.context;
        ctx[sample.center_index] = draw_corruption(sample.center(), vocab_size, rng);
        out.push_back(std::move(ctx));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus cache: vocabulary, ranges and encoded essays in one text file.
// ---------------------------------------------------------------------------

struct Corpus {
    Vocabulary vocab;
    ScoreRanges ranges;
    std::vector<Essay> essays;

    const Essay& by_id(std::int64_t id) const {
        for (const auto& e : essays)
            if (e.essay_id == id) return e;
        throw LookupError("unknown essay id " + std::to_string(id));
    }

    std::vector<Essay> select(const std::vector<std::int64_t>& ids) const {
        std::unordered_map<std::int64_t, const Essay*> index;
        for (const auto& e : essays) index.emplace(e.essay_id, &e);
        std::vector<Essay> out;
        out.reserve(ids.size());
        for (auto id : ids) {
            auto it = index.find(id);
            if (it == index.end()) throw LookupError("unknown essay id " + std::to_string(id));
            out.push_back(*it->second);
        }
        return out;
    }
};

inline void save_corpus(const std::filesystem::path& path, const Corpus& c, const std::string& config_hash = {}) {
    write_file_atomic(path, [&](std::ostream& os) {
        if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
        os << "ATSCORPUS\t1\n";
        os << "ranges\t" << c.ranges.size() << '\n';
        for (const auto& [set, r] : c.ranges) os << set << '\t' << format_double(r.min) << '\t' << format_double(r.max) << '\n';
        os << "vocab\t" << c.vocab.size() << '\t' << c.vocab.min_count() << '\n';
        for (const auto& t : c.vocab.tokens()) os << t << '\n';
        os << "essays\t" << c.essays.size() << '\n';
        for (const auto& e : c.essays) {
            os << e.essay_id << '\t' << e.set_id << '\t' << format_double(e.raw_score) << '\t';
            for (std::size_t i = 0; i < e.tokens.size(); ++i) os << (i ? " " : "") << e.tokens[i];
            os << '\t';
            for (std::size_t i = 0; i < e.words.size(); ++i) os << (i ? " " : "") << e.words[i];
            os << '\n';
        }
    });
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    std::istringstream is(read_file(path));
    std::string line;
    auto next = [&]() -> const std::string& {
        while (std::getline(is, line))
            if (line.empty() || line.front() != '#') return line;
        throw DataError(path.string() + ": truncated corpus cache");
    };
    auto expect_section = [&](std::string_view name) {
        auto f = detail::split_tabs(next());
        if (f.empty() || f[0] != name) throw DataError(path.string() + ": expected section '" + std::string(name) + "'");
        return std::vector<std::string>(f.begin(), f.end());
    };
    auto to_size = [&](const std::string& s) {
        auto v = detail::parse_int(s);
        if (!v || *v < 0) throw DataError(path.string() + ": bad count '" + s + "'");
        return static_cast<std::size_t>(*v);
    };

    auto head = expect_section("ATSCORPUS");
    if (head.size() < 2 || head[1] != "1") throw DataError(path.string() + ": unsupported corpus cache version");

    Corpus c;
    auto rs = expect_section("ranges");
    for (std::size_t i = 0, n = to_size(rs.at(1)); i < n; ++i) {
        auto f = detail::split_tabs(next());
        if (f.size() != 3) throw DataError(path.string() + ": bad range line");
        c.ranges[static_cast<int>(*detail::parse_int(f[0]))] = ScoreRange{*detail::parse_double(f[1]), *detail::parse_double(f[2])};
    }
    auto vs = expect_section("vocab");
    std::vector<std::string> tokens;
    for (std::size_t i = 0, n = to_size(vs.at(1)); i < n; ++i) {
        if (!std::getline(is, line)) throw DataError(path.string() + ": truncated vocabulary");
        tokens.push_back(line);
    }
    c.vocab = Vocabulary::from_tokens(tokens, vs.size() > 2 ? static_cast<int>(to_size(vs[2])) : 1);
    auto es = expect_section("essays");
    for (std::size_t i = 0, n = to_size(es.at(1)); i < n; ++i) {
        auto f = detail::split_tabs(next());
        if (f.size() != 5) throw DataError(path.string() + ": bad essay line");
        Essay e;
        e.essay_id = *detail::parse_int(f[0]);
        e.set_id = static_cast<int>(*detail::parse_int(f[1]));
        e.raw_score = *detail::parse_double(f[2]);
        std::istringstream ids{std::string(f[3])};
        for (TokenId id; ids >> id;) {
            if (id < 0 || static_cast<std::size_t>(id) >= c.vocab.size() || id == Vocabulary::kPad)
                throw DataError(path.string() + ": token id out of range in essay " + std::to_string(e.essay_id));
            e.tokens.push_back(id);
        }
        std::istringstream ws{std::string(f[4])};
        for (std::string w; ws >> w;) e.words.push_back(w);
        if (e.tokens.empty() || e.words.size() != e.tokens.size())
            throw DataError(path.string() + ": malformed essay " + std::to_string(e.essay_id));
        e.scaled_score = range_for(c.ranges, e.set_id).scale(e.raw_score);
        c.essays.push_back(std::move(e));
    }
    return c;
}

}  // namespace ats
