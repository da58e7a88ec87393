// End-to-end stages behind the CLI: ingest, train embeddings, train the
// scorer, evaluate, visualize, random search and synthetic data. Each stage
// reads its inputs from the paths in Config and writes its outputs
// atomically.
#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ats/common.hpp"
#include "ats/config.hpp"
#include "ats/corpus.hpp"
#include "ats/metrics.hpp"
#include "ats/saliency.hpp"
#include "ats/seqmodel.hpp"
#include "ats/sswe.hpp"
#include "ats/synth.hpp"

namespace ats::pipeline {

namespace fs = std::filesystem;

struct Prepared {
    Corpus corpus;
    SplitIds splits;
    std::vector<Essay> train, validation, test;

    const std::vector<Essay>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val" || name == "validation") return validation;
        if (name == "test") return test;
        throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
    }
};

inline const char* manifest_name(int k) {
    static constexpr const char* names[] = {"train.ids", "val.ids", "test.ids"};
    return names[k];
}

/// Builds vocabulary (training split only) and encodes every essay.
inline Prepared prepare(const std::vector<RawEssay>& raw, const ScoreRanges& ranges, const SplitIds& splits,
                        int min_count) {
    Prepared p;
    p.splits = splits;
    std::set<std::int64_t> train_ids(splits.train.begin(), splits.train.end());
    std::vector<std::vector<std::string>> docs;
    for (const auto& e : raw)
        if (train_ids.count(e.essay_id)) docs.push_back(e.words);
    p.corpus.vocab = build_vocabulary(docs, min_count);
    p.corpus.ranges = ranges;
    for (const auto& e : raw) p.corpus.essays.push_back(encode_essay(e, p.corpus.vocab, ranges));
    p.train = p.corpus.select(splits.train);
    p.validation = p.corpus.select(splits.validation);
    p.test = p.corpus.select(splits.test);
    return p;
}

inline Prepared prepare_from_tsv(const std::string& tsv, const Config& cfg, const SplitIds* fixed_splits = nullptr) {
    std::istringstream is(tsv);
    auto ing = ingest_asap_tsv(is);
    if (!ing.errors.empty())
        throw DataError("line " + std::to_string(ing.errors.front().line) + ": " + ing.errors.front().message);
    const auto splits = fixed_splits ? *fixed_splits : split_corpus(ing.essays, cfg.split_spec());
    return prepare(ing.essays, ing.ranges, splits, cfg.min_count);
}

/// Essays whose score fields carry what the networks are trained on.
inline std::vector<Essay> training_view(const std::vector<Essay>& essays, bool raw_scores) {
    if (!raw_scores) return essays;
    auto out = essays;
    for (auto& e : out) e.scaled_score = e.raw_score;
    return out;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestSummary {
    std::size_t essays = 0;
    std::size_t vocabulary = 0;
    std::size_t train = 0, validation = 0, test = 0;
    bool reused_manifests = false;
    std::vector<RowError> row_errors;
};

inline void check_partition(const std::vector<RawEssay>& essays, const SplitIds& s) {
    std::set<std::int64_t> all;
    for (const auto& e : essays) all.insert(e.essay_id);
    std::set<std::int64_t> seen;
    for (const auto* v : {&s.train, &s.validation, &s.test})
        for (auto id : *v) {
            if (!all.count(id)) throw DataError("manifest lists essay " + std::to_string(id) + " which is not in the data");
            if (!seen.insert(id).second) throw DataError("essay " + std::to_string(id) + " appears in two manifests");
        }
    if (seen.size() != all.size())
        throw DataError("manifests cover " + std::to_string(seen.size()) + " of " + std::to_string(all.size()) + " essays");
}

/// Reads the TSV, splits (or reuses manifests already present in the
/// splits directory), builds the vocabulary and writes the corpus cache.
/// With `skip_bad_rows` false any row error aborts before writing anything.
inline IngestSummary cmd_ingest(const Config& cfg, bool skip_bad_rows = false, std::ostream* log = nullptr) {
    cfg.validate();
    if (cfg.data.empty()) throw ConfigError("ingest needs 'data' (path to an ASAP-format TSV)");
    std::optional<ScoreRanges> table;
    if (!cfg.score_ranges.empty()) table = load_score_ranges(cfg.score_ranges);
    auto ing = ingest_asap_tsv(fs::path(cfg.data), table ? &*table : nullptr);

    IngestSummary s;
    s.row_errors = ing.errors;
    if (!ing.errors.empty()) {
        std::string msg = std::to_string(ing.errors.size()) + " unparseable row(s) in " + cfg.data;
        for (const auto& e : ing.errors) {
            msg += "\n  line " + std::to_string(e.line) + ": " + e.message;
            if (log && skip_bad_rows) *log << "warning: line " << e.line << ": " << e.message << '\n';
        }
        if (!skip_bad_rows) throw DataError(msg);
    }
    if (ing.essays.empty()) throw DataError(cfg.data + " contains no essays");

    const auto dir = cfg.splits_path();
    SplitIds splits;
    const bool have = fs::exists(dir / manifest_name(0)) && fs::exists(dir / manifest_name(1)) &&
                      fs::exists(dir / manifest_name(2));
    if (have) {
        splits = {read_manifest(dir / manifest_name(0)), read_manifest(dir / manifest_name(1)),
                  read_manifest(dir / manifest_name(2))};
        check_partition(ing.essays, splits);
        s.reused_manifests = true;
    } else {
        splits = split_corpus(ing.essays, cfg.split_spec());
    }
    auto prepared = prepare(ing.essays, ing.ranges, splits, cfg.min_count);

    const auto hash = config_hash(cfg);
    save_corpus(cfg.corpus_path(), prepared.corpus, hash);
    if (!have) {
        write_manifest(dir / manifest_name(0), splits.train, hash);
        write_manifest(dir / manifest_name(1), splits.validation, hash);
        write_manifest(dir / manifest_name(2), splits.test, hash);
    }
    s.essays = prepared.corpus.essays.size();
    s.vocabulary = prepared.corpus.vocab.size();
    s.train = splits.train.size();
    s.validation = splits.validation.size();
    s.test = splits.test.size();
    return s;
}

/// Corpus cache plus the three manifests.
inline Prepared load_prepared(const Config& cfg) {
    const auto cache = cfg.corpus_path();
    if (!fs::exists(cache))
        throw DataError("corpus cache '" + cache.string() + "' not found; run `ats ingest --data <file.tsv>` first");
    Prepared p;
    p.corpus = load_corpus(cache);
    const auto dir = cfg.splits_path();
    for (int k = 0; k < 3; ++k)
        if (!fs::exists(dir / manifest_name(k)))
            throw DataError("split manifest '" + (dir / manifest_name(k)).string() + "' not found; run `ats ingest` first");
    p.splits = {read_manifest(dir / manifest_name(0)), read_manifest(dir / manifest_name(1)),
                read_manifest(dir / manifest_name(2))};
    p.train = p.corpus.select(p.splits.train);
    p.validation = p.corpus.select(p.splits.validation);
    p.test = p.corpus.select(p.splits.test);
    return p;
}

// ---------------------------------------------------------------------------
// train-embeddings
// ---------------------------------------------------------------------------

inline sswe::TrainResult train_embeddings(const Prepared& p, const Config& cfg) {
    return sswe::train(training_view(p.train, cfg.raw_scores), p.corpus.vocab.size(), cfg.sswe_hyper());
}

inline fs::path sswe_history_path(const Config& cfg) { return cfg.work() / "sswe_history.csv"; }
inline fs::path scorer_history_path(const Config& cfg) { return cfg.work() / "scorer_history.csv"; }

inline sswe::TrainResult cmd_train_embeddings(const Config& cfg) {
    cfg.validate();
    const auto p = load_prepared(cfg);
    auto result = train_embeddings(p, cfg);
    const auto hash = config_hash(cfg);
    sswe::save_embeddings(cfg.embeddings_out_path(), p.corpus.vocab, result.params);
    write_file_atomic(sswe_history_path(cfg), [&](std::ostream& os) {
        os << "# config_hash=" << hash << '\n';
        sswe::write_history_csv(os, result.history);
    });
    return result;
}

// ---------------------------------------------------------------------------
// train-scorer
// ---------------------------------------------------------------------------

inline void require_same_vocab(const Vocabulary& a, const Vocabulary& b, const std::string& what) {
    if (a.size() != b.size())
        throw DataError(what + " vocabulary has " + std::to_string(a.size()) + " entries but the corpus has " +
                        std::to_string(b.size()));
    if (a.tokens() != b.tokens()) throw DataError(what + " vocabulary differs from the corpus vocabulary (same size " +
                                                  std::to_string(a.size()) + ")");
}

/// Initial model: word vectors from `embeddings` when given, otherwise
/// drawn at random and learned with the scorer.
inline seq::SeqModel initial_model(const Prepared& p, const Config& cfg, const Matrix* embeddings) {
    const Eigen::Index dim = embeddings ? embeddings->rows() : cfg.dim;
    Rng rng(Rng::splitmix(cfg.seed ^ 0x494e4954u));
    auto m = seq::SeqModel::random(cfg.architecture(dim), static_cast<Eigen::Index>(p.corpus.vocab.size()), rng, embeddings);
    m.train_embeddings = cfg.train_embeddings;
    return m;
}

inline seq::TrainResult train_scorer(const Prepared& p, const Config& cfg, const Matrix* embeddings) {
    const auto init = initial_model(p, cfg, embeddings);
    const auto train = training_view(p.train, cfg.raw_scores);
    const auto& val = p.validation.empty() ? p.train : p.validation;
    return seq::train_scorer(init, train, training_view(val, cfg.raw_scores), p.corpus.ranges, cfg.train_options());
}

inline seq::TrainResult cmd_train_scorer(const Config& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    const auto p = load_prepared(cfg);
    std::optional<sswe::EmbeddingFile> emb;
    if (cfg.embeddings != "learned") {
        emb = sswe::load_embeddings(cfg.embeddings);
        require_same_vocab(emb->vocab, p.corpus.vocab, "embedding file '" + cfg.embeddings + "'");
    }
    if (p.validation.empty() && log) *log << "warning: validation split is empty; selecting on the training split\n";
    auto result = train_scorer(p, cfg, emb ? &emb->params.embeddings : nullptr);
    const auto hash = config_hash(cfg);
    seq::save_model(cfg.model_path(), result.model, p.corpus.vocab, p.corpus.ranges, hash);
    write_file_atomic(scorer_history_path(cfg), [&](std::ostream& os) {
        os << "# config_hash=" << hash << '\n';
        seq::write_history_csv(os, result.history);
    });
    return result;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// rho, r and RMSE over all essays on the raw scale; kappa is computed per
/// essay set and averaged weighted by set size.
inline metrics::MetricsReport evaluate_predictions(const std::vector<double>& pred, const std::vector<Essay>& essays,
                                                   const ScoreRanges& ranges) {
    if (pred.size() != essays.size()) throw ShapeError("prediction count differs from essay count");
    std::vector<double> gold;
    for (const auto& e : essays) gold.push_back(e.raw_score);
    metrics::MetricsReport r;
    r.n = pred.size();
    r.spearman_rho = metrics::spearman_rho(pred, gold);
    r.pearson_r = metrics::pearson_r(pred, gold);
    r.rmse = metrics::rmse(pred, gold);
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_set;
    for (std::size_t i = 0; i < essays.size(); ++i) {
        by_set[essays[i].set_id].first.push_back(pred[i]);
        by_set[essays[i].set_id].second.push_back(gold[i]);
    }
    double kappa = 0.0, weight = 0.0;
    for (const auto& [set, pg] : by_set) {
        const double k = metrics::quadratic_weighted_kappa(pg.first, pg.second, range_for(ranges, set));
        kappa += k * static_cast<double>(pg.first.size());
        weight += static_cast<double>(pg.first.size());
    }
    r.qwk = kappa / weight;
    return r;
}

inline metrics::MetricsReport evaluate(const seq::SeqModel& m, const std::vector<Essay>& essays, const ScoreRanges& ranges) {
    return evaluate_predictions(seq::predict(m, essays, ranges), essays, ranges);
}

inline seq::ModelFile load_checked_model(const Config& cfg, const Prepared& p) {
    const auto path = cfg.model_path();
    if (!fs::exists(path)) throw DataError("model file '" + path.string() + "' not found; run `ats train-scorer` first");
    auto mf = seq::load_model(path);
    require_same_vocab(mf.vocab, p.corpus.vocab, "model");
    return mf;
}

inline metrics::MetricsReport cmd_evaluate(const Config& cfg, const std::string& split) {
    const auto p = load_prepared(cfg);
    const auto& essays = p.split(split);
    if (essays.empty()) throw DataError("split '" + split + "' is empty");
    const auto mf = load_checked_model(cfg, p);
    const auto r = evaluate(mf.model, essays, p.corpus.ranges);
    const auto name = cfg.model_path().stem().string();
    const auto hash = config_hash(cfg);
    write_file_atomic(cfg.reports_path() / (split + ".csv"), [&](std::ostream& os) {
        os << "# config_hash=" << hash << '\n' << metrics::kCsvHeader << '\n' << metrics::csv_row(name, r) << '\n';
    });
    write_file_atomic(cfg.reports_path() / (split + ".txt"), [&](std::ostream& os) {
        os << "# config_hash=" << hash << "\nsplit: " << split << '\n' << metrics::pretty(name, r);
    });
    return r;
}

// ---------------------------------------------------------------------------
// visualize
// ---------------------------------------------------------------------------

struct VisualizeOptions {
    std::vector<std::int64_t> essay_ids;
    std::size_t span_len = 0;  // 0 = essay mode
    bool monochrome = false;
    bool ansi = true;
};

inline std::vector<saliency::QualityMap> cmd_visualize(const Config& cfg, const VisualizeOptions& opt, std::ostream& out) {
    if (opt.essay_ids.empty()) throw ConfigError("visualize needs at least one essay id");
    const auto p = load_prepared(cfg);
    const auto mf = load_checked_model(cfg, p);
    std::vector<saliency::QualityMap> maps;
    for (auto id : opt.essay_ids) {
        const auto& essay = p.corpus.by_id(id);
        maps.push_back(saliency::quality_map(mf.model, essay, range_for(p.corpus.ranges, essay.set_id), opt.span_len));
    }
    const auto hash = config_hash(cfg);
    const auto dir = cfg.heatmaps_path();
    for (const auto& m : maps) {
        saliency::render_html(m, dir / ("essay_" + std::to_string(m.essay_id) + ".html"), hash);
        if (opt.ansi) out << "essay " << m.essay_id << " (predicted " << format_double(m.predicted) << ")\n"
                          << saliency::render_ansi(m, opt.monochrome) << "\n";
    }
    write_file_atomic(dir / "index.tsv", [&](std::ostream& os) {
        os << "# config_hash=" << hash << "\nessay_id\tpredicted\tmean_quality\tfile\n";
        for (const auto& m : maps)
            os << m.essay_id << '\t' << format_double(m.predicted) << '\t' << format_double(m.mean_quality()) << "\tessay_"
               << m.essay_id << ".html\n";
    });
    return maps;
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

struct Trial {
    int index = 0;
    Config config;
    double val_rmse = 0.0;
};

struct SearchResult {
    std::vector<Trial> trials;
    std::size_t best = 0;
};

/// Embeddings and scorer for one configuration; returns the best validation RMSE.
inline double run_trial(const Prepared& p, const Config& c) {
    c.validate();
    const auto emb = train_embeddings(p, c);
    const auto scorer = train_scorer(p, c, &emb.params.embeddings);
    const auto& val = p.validation.empty() ? p.train : p.validation;
    return seq::rmse_raw(scorer.model, val, p.corpus.ranges);
}

inline SearchResult search(const Prepared& p, const Config& base, const SearchSpace& space) {
    validate_space(space);
    Rng rng(space.seed);
    SearchResult r;
    for (int t = 0; t < space.trials; ++t) {
        Trial trial;
        trial.index = t + 1;
        trial.config = sample_config(space, base, rng);
        trial.config.seed = Rng::splitmix(space.seed + static_cast<std::uint64_t>(t)) >> 1;
        trial.val_rmse = run_trial(p, trial.config);
        r.trials.push_back(trial);
        if (trial.val_rmse < r.trials[r.best].val_rmse) r.best = r.trials.size() - 1;
    }
    return r;
}

inline SearchResult cmd_search(const Config& cfg, const SearchSpace& space, const fs::path& out_dir) {
    validate_space(space);
    const auto p = load_prepared(cfg);
    auto r = search(p, cfg, space);
    std::vector<std::string> keys;
    for (const auto& [k, spec] : space.params) keys.push_back(k);
    const auto hash = config_hash(cfg);
    write_file_atomic(out_dir / "trials.csv", [&](std::ostream& os) {
        os << "# config_hash=" << hash << "\ntrial,seed";
        for (const auto& k : keys) os << ',' << k;
        os << ",val_rmse\n";
        for (const auto& t : r.trials) {
            os << t.index << ',' << t.config.seed;
            for (const auto& k : keys) os << ',' << get_config_value(t.config, k);
            os << ',' << format_double(t.val_rmse) << '\n';
        }
    });
    write_file_atomic(out_dir / "best.conf", [&](std::ostream& os) {
        os << "# best of " << r.trials.size() << " trial(s), val_rmse=" << format_double(r.trials[r.best].val_rmse)
           << "\n# config_hash=" << config_hash(r.trials[r.best].config) << '\n'
           << serialize_config(r.trials[r.best].config);
    });
    return r;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline void cmd_synth(const std::string& profile, std::uint64_t seed, const fs::path& out) {
    const auto corpus = synth::generate(profile, seed);
    write_file_atomic(out, [&](std::ostream& os) { synth::write_tsv(os, corpus); });
}

}  // namespace ats::pipeline
