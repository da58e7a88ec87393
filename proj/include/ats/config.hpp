// Pipeline configuration: `key = value` text with `#` comments. Every key
// is also accepted as a `--key value` command-line flag.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ats/common.hpp"
#include "ats/corpus.hpp"
#include "ats/seqmodel.hpp"
#include "ats/sswe.hpp"

namespace ats {

struct Config {
    // embeddings (defaults: best configuration reported for the full dataset)
    int dim = 200;
    int hidden = 100;
    double eta = 1e-7;
    int window = 9;
    int corruptions = 200;
    double alpha = 0.1;
    int sswe_epochs = 1;

    // scorer
    int lstm_units = 10;
    double dropout = 0.5;
    int layers = 1;
    bool bidirectional = false;
    bool diagonal_peepholes = false;
    int batch_size = 32;
    int epochs = 50;
    int patience = 25;
    bool select_best = true;
    double scorer_eta = 1e-3;
    double rho_rms = 0.9;
    double epsilon = 1e-8;
    double clip_norm = 0.0;
    bool train_embeddings = true;

    // data
    std::uint64_t seed = 1;
    int min_count = 2;
    double split_train = 0.64;
    double split_validation = 0.16;
    double split_test = 0.20;
    bool raw_scores = false;

    // paths
    std::string workdir = "ats_work";
    std::string data;
    std::string score_ranges;
    std::string splits_dir;
    std::string corpus_cache;
    std::string embeddings = "learned";  // embedding file for the scorer, or "learned"
    std::string embeddings_out;
    std::string model;
    std::string reports_dir;
    std::string heatmaps_dir;

    std::filesystem::path work() const { return workdir; }
    std::filesystem::path splits_path() const { return splits_dir.empty() ? work() / "splits" : std::filesystem::path(splits_dir); }
    std::filesystem::path corpus_path() const { return corpus_cache.empty() ? work() / "corpus.txt" : std::filesystem::path(corpus_cache); }
    std::filesystem::path embeddings_out_path() const {
        return embeddings_out.empty() ? work() / "embeddings.sswe" : std::filesystem::path(embeddings_out);
    }
    std::filesystem::path model_path() const { return model.empty() ? work() / "model.sats" : std::filesystem::path(model); }
    std::filesystem::path reports_path() const { return reports_dir.empty() ? work() / "reports" : std::filesystem::path(reports_dir); }
    std::filesystem::path heatmaps_path() const { return heatmaps_dir.empty() ? work() / "heatmaps" : std::filesystem::path(heatmaps_dir); }

    sswe::Hyper sswe_hyper() const {
        sswe::Hyper h;
        h.dim = dim;
        h.hidden = hidden;
        h.window = window;
        h.corruptions = corruptions;
        h.alpha = alpha;
        h.eta = eta;
        h.epochs = sswe_epochs;
        h.seed = Rng::splitmix(seed ^ 0x5357u);
        return h;
    }

    seq::Architecture architecture(Eigen::Index embedding_dim) const {
        seq::Architecture a;
        a.layers = layers;
        a.bidirectional = bidirectional;
        a.diagonal_peepholes = diagonal_peepholes;
        a.embedding_dim = embedding_dim;
        a.units = lstm_units;
        a.dropout = dropout;
        a.raw_targets = raw_scores;
        return a;
    }

    seq::TrainOptions train_options() const {
        seq::TrainOptions o;
        o.epochs = epochs;
        o.batch_size = batch_size;
        o.seed = Rng::splitmix(seed ^ 0x4c53u);
        o.eta = scorer_eta;
        o.rho = rho_rms;
        o.epsilon = epsilon;
        o.patience = patience;
        o.select_best = select_best;
        o.clip_norm = clip_norm;
        return o;
    }

    SplitSpec split_spec() const { return SplitSpec{split_train, split_validation, split_test, seed}; }

    void validate() const {
        sswe_hyper().validate();
        architecture(dim).validate();
        train_options().validate();
        split_spec().validate();
        if (sswe_epochs < 0) throw ConfigError("sswe_epochs must be >= 0");
        if (min_count < 1) throw ConfigError("min_count must be >= 1");
        if (window < 3) throw ConfigError("window must be >= 3");
    }
};

namespace config_detail {

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
    bool hyper = true;  // part of the config hash
};

inline int parse_int(const std::string& key, const std::string& v) {
    auto r = detail::parse_int(v);
    if (!r || *r < std::numeric_limits<int>::min() || *r > std::numeric_limits<int>::max())
        throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    return static_cast<int>(*r);
}

inline double parse_real(const std::string& key, const std::string& v) {
    auto r = detail::parse_double(v);
    if (!r) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return *r;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + v + "'");
}

inline const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto i = [&](const char* k, int Config::*m) {
            t[k] = {[=](Config& c, const std::string& v) { c.*m = parse_int(k, v); },
                    [=](const Config& c) { return std::to_string(c.*m); }};
        };
        auto d = [&](const char* k, double Config::*m) {
            t[k] = {[=](Config& c, const std::string& v) { c.*m = parse_real(k, v); },
                    [=](const Config& c) { return format_double(c.*m); }};
        };
        auto b = [&](const char* k, bool Config::*m) {
            t[k] = {[=](Config& c, const std::string& v) { c.*m = parse_bool(k, v); },
                    [=](const Config& c) { return std::string(c.*m ? "true" : "false"); }};
        };
        auto s = [&](const char* k, std::string Config::*m, bool hyper) {
            t[k] = {[=](Config& c, const std::string& v) { c.*m = v; }, [=](const Config& c) { return c.*m; }, hyper};
        };
        i("dim", &Config::dim);
        i("hidden", &Config::hidden);
        d("eta", &Config::eta);
        i("window", &Config::window);
        i("corruptions", &Config::corruptions);
        d("alpha", &Config::alpha);
        i("sswe_epochs", &Config::sswe_epochs);
        i("lstm_units", &Config::lstm_units);
        d("dropout", &Config::dropout);
        i("layers", &Config::layers);
        b("bidirectional", &Config::bidirectional);
        b("diagonal_peepholes", &Config::diagonal_peepholes);
        i("batch_size", &Config::batch_size);
        i("epochs", &Config::epochs);
        i("patience", &Config::patience);
        b("select_best", &Config::select_best);
        d("scorer_eta", &Config::scorer_eta);
        d("rho_rms", &Config::rho_rms);
        d("epsilon", &Config::epsilon);
        d("clip_norm", &Config::clip_norm);
        b("train_embeddings", &Config::train_embeddings);
        t["seed"] = {[](Config& c, const std::string& v) {
                         auto r = detail::parse_int(v);
                         if (!r || *r < 0) throw ConfigError("'seed' expects a non-negative integer, got '" + v + "'");
                         c.seed = static_cast<std::uint64_t>(*r);
                     },
                     [](const Config& c) { return std::to_string(c.seed); }};
        i("min_count", &Config::min_count);
        d("split_train", &Config::split_train);
        d("split_validation", &Config::split_validation);
        d("split_test", &Config::split_test);
        b("raw_scores", &Config::raw_scores);
        s("workdir", &Config::workdir, false);
        s("data", &Config::data, false);
        s("score_ranges", &Config::score_ranges, false);
        s("splits_dir", &Config::splits_dir, false);
        s("corpus_cache", &Config::corpus_cache, false);
        s("embeddings", &Config::embeddings, true);
        s("embeddings_out", &Config::embeddings_out, false);
        s("model", &Config::model, false);
        s("reports_dir", &Config::reports_dir, false);
        s("heatmaps_dir", &Config::heatmaps_dir, false);
        return t;
    }();
    return table;
}

inline std::string trim_copy(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : config_detail::fields()) keys.push_back(k);
    return keys;
}

inline void set_config_value(Config& c, const std::string& key, const std::string& value) {
    const auto& f = config_detail::fields();
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, value);
}

inline std::string get_config_value(const Config& c, const std::string& key) {
    const auto& f = config_detail::fields();
    auto it = f.find(key);
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.get(c);
}

/// Applies `key = value` lines on top of `c`.
inline void parse_config(std::istream& is, Config& c, const std::string& origin = "config") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = config_detail::trim_copy(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = config_detail::trim_copy(std::string_view(body).substr(0, eq));
        const auto value = config_detail::trim_copy(std::string_view(body).substr(eq + 1));
        try {
            set_config_value(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline Config load_config(const std::filesystem::path& path, Config base = {}) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError&) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    std::istringstream is(text);
    parse_config(is, base, path.string());
    return base;
}

inline std::string serialize_config(const Config& c) {
    std::string out;
    for (const auto& [k, f] : config_detail::fields()) out += k + " = " + f.get(c) + "\n";
    return out;
}

/// Hash over the hyperparameter keys (paths excluded), hex encoded.
inline std::string config_hash(const Config& c) {
    Fnv1a h;
    for (const auto& [k, f] : config_detail::fields()) {
        if (!f.hyper) continue;
        h.update(k);
        h.update("=");
        h.update(f.get(c));
        h.update("\n");
    }
    return hex64(h.digest());
}

// ---------------------------------------------------------------------------
// Random-search space
// ---------------------------------------------------------------------------

/// One dimension of the search space: a choice list, or a uniform /
/// log-uniform range. Integer keys draw integers; `window` draws odd values.
struct ParamSpec {
    enum class Kind { Choice, Uniform, LogUniform };
    Kind kind = Kind::Uniform;
    std::vector<std::string> choices;
    double lo = 0.0, hi = 0.0;
};

struct SearchSpace {
    std::map<std::string, ParamSpec> params;
    int trials = 10;
    std::uint64_t seed = 1;

    static SearchSpace defaults() {
        SearchSpace s;
        auto range = [&](const char* k, double lo, double hi, ParamSpec::Kind kind = ParamSpec::Kind::Uniform) {
            ParamSpec p;
            p.kind = kind;
            p.lo = lo;
            p.hi = hi;
            s.params[k] = p;
        };
        range("dim", 20, 200);
        range("hidden", 20, 100);
        range("eta", 1e-7, 1e-2, ParamSpec::Kind::LogUniform);
        range("window", 3, 9);
        range("corruptions", 10, 200);
        range("alpha", 0.0, 1.0);
        range("lstm_units", 10, 50);
        range("dropout", 0.0, 0.6);
        return s;
    }
};

namespace config_detail {

inline bool is_integer_key(const std::string& key) {
    static const std::set<std::string> ints{"dim", "hidden", "window", "corruptions", "sswe_epochs", "lstm_units",
                                            "layers", "batch_size", "epochs", "patience", "min_count"};
    return ints.count(key) > 0;
}

}  // namespace config_detail

/// Lines: `trials = N`, `seed = S`, and `key = spec` where spec is
/// `a|b|c` (choices), `lo..hi` (uniform) or `log:lo..hi` (log-uniform).
/// A plain single value fixes that key for every trial.
inline SearchSpace parse_search_space(std::istream& is) {
    SearchSpace s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto body = config_detail::trim_copy(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("search space line " + std::to_string(lineno) + ": expected 'key = spec'");
        const auto key = config_detail::trim_copy(std::string_view(body).substr(0, eq));
        auto spec = config_detail::trim_copy(std::string_view(body).substr(eq + 1));
        if (key == "trials") {
            s.trials = config_detail::parse_int(key, spec);
            continue;
        }
        if (key == "seed") {
            s.seed = static_cast<std::uint64_t>(config_detail::parse_int(key, spec));
            continue;
        }
        if (!config_detail::fields().count(key)) throw ConfigError("search space: unknown key '" + key + "'");
        ParamSpec p;
        if (spec.find('|') != std::string::npos || spec.find("..") == std::string::npos) {
            p.kind = ParamSpec::Kind::Choice;
            std::stringstream ss(spec);
            for (std::string item; std::getline(ss, item, '|');) p.choices.push_back(config_detail::trim_copy(item));
            Config probe;
            for (const auto& c : p.choices) set_config_value(probe, key, c);  // validates syntax
        } else {
            if (spec.rfind("log:", 0) == 0) {
                p.kind = ParamSpec::Kind::LogUniform;
                spec = spec.substr(4);
            }
            const auto dots = spec.find("..");
            p.lo = config_detail::parse_real(key, spec.substr(0, dots));
            p.hi = config_detail::parse_real(key, spec.substr(dots + 2));
            if (p.hi < p.lo) throw ConfigError("search space: empty range for '" + key + "'");
            if (p.kind == ParamSpec::Kind::LogUniform && p.lo <= 0) throw ConfigError("search space: log range must be positive");
        }
        s.params[key] = p;
    }
    return s;
}

inline void validate_space(const SearchSpace& s) {
    if (s.trials < 1) throw ConfigError("search needs at least one trial");
    for (const auto& [k, p] : s.params) {
        if (p.kind == ParamSpec::Kind::Choice && p.choices.empty()) throw ConfigError("empty choice list for '" + k + "'");
        if (p.kind != ParamSpec::Kind::Choice && p.hi < p.lo) throw ConfigError("empty range for '" + k + "'");
        if (k == "window" && p.kind != ParamSpec::Kind::Choice && std::floor(p.hi) < 3)
            throw ConfigError("window range holds no odd value >= 3");
    }
}

/// Draws one configuration; keys are visited in sorted order so the
/// sequence depends only on the rng state.
inline Config sample_config(const SearchSpace& s, const Config& base, Rng& rng) {
    Config c = base;
    for (const auto& [key, p] : s.params) {
        std::string value;
        if (p.kind == ParamSpec::Kind::Choice) {
            value = p.choices[static_cast<std::size_t>(rng.index(p.choices.size()))];
        } else if (config_detail::is_integer_key(key)) {
            auto lo = static_cast<long>(std::ceil(p.lo)), hi = static_cast<long>(std::floor(p.hi));
            if (key == "window") {
                lo = std::max(3L, lo % 2 ? lo : lo + 1);
                if (hi % 2 == 0) --hi;
                if (hi < lo) throw ConfigError("window range holds no odd value >= 3");
                value = std::to_string(lo + 2 * static_cast<long>(rng.index(static_cast<std::uint64_t>((hi - lo) / 2 + 1))));
            } else {
                if (hi < lo) throw ConfigError("empty integer range for '" + key + "'");
                value = std::to_string(lo + static_cast<long>(rng.index(static_cast<std::uint64_t>(hi - lo + 1))));
            }
        } else if (p.kind == ParamSpec::Kind::LogUniform) {
            value = format_double(std::exp(rng.uniform(std::log(p.lo), std::log(p.hi))));
        } else {
            value = format_double(rng.uniform(p.lo, p.hi));
        }
        set_config_value(c, key, value);
    }
    return c;
}

}  // namespace ats
