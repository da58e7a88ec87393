#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ats/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

struct Options {
    std::string config_path;
    std::map<std::string, std::string> overrides;
};

ats::Config resolve(const Options& o) {
    ats::Config cfg;
    std::string path = o.config_path;
    if (path.empty())
        if (const char* env = std::getenv("ATS_CONFIG")) path = env;
    if (!path.empty()) cfg = ats::load_config(path);
    for (const auto& [k, v] : o.overrides)
        if (!v.empty()) ats::set_config_value(cfg, k, v);
    cfg.validate();
    return cfg;
}

void print_report(const std::string& split, const ats::metrics::MetricsReport& r) {
    std::cout << "split: " << split << '\n' << ats::metrics::pretty("model", r);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ats: score-specific word embeddings and LSTM essay scoring"};
    app.require_subcommand(1);
    app.fallthrough();

    Options opt;
    app.add_option("-c,--config", opt.config_path, "config file (key = value); default from $ATS_CONFIG");
    for (const auto& key : ats::config_keys()) {
        opt.overrides[key];
        app.add_option("--" + key, opt.overrides[key], "override config key '" + key + "'");
    }

    auto* ingest = app.add_subcommand("ingest", "tokenize a TSV, split it and write the corpus cache");
    bool skip_bad_rows = false;
    ingest->add_flag("--skip-bad-rows", skip_bad_rows, "warn about unparseable rows instead of failing");

    auto* embed = app.add_subcommand("train-embeddings", "train score-specific word embeddings");
    auto* scorer = app.add_subcommand("train-scorer", "train the LSTM scorer");

    auto* eval = app.add_subcommand("evaluate", "score a split and write metric reports");
    std::string split = "test";
    eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

    auto* vis = app.add_subcommand("visualize", "per-token quality heatmaps");
    ats::pipeline::VisualizeOptions vopt;
    bool no_ansi = false;
    vis->add_option("--essay", vopt.essay_ids, "essay id (repeatable)")->required();
    vis->add_option("--span-len", vopt.span_len, "score consecutive spans of this many tokens (0 = whole essay)");
    vis->add_flag("--monochrome", vopt.monochrome, "print word[bin] instead of colors");
    vis->add_flag("--no-ansi", no_ansi, "write HTML only");

    auto* search = app.add_subcommand("search", "seeded random hyperparameter search");
    std::string space_path, search_out;
    search->add_option("--space", space_path, "search-space file")->required();
    search->add_option("--out", search_out, "output directory (default <workdir>/search)");

    auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
    std::string profile, synth_out;
    synth->add_option("--profile", profile, "overfit16, misspell or ablation")->required();
    synth->add_option("--out", synth_out, "output TSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        const auto cfg = resolve(opt);
        if (*ingest) {
            const auto s = ats::pipeline::cmd_ingest(cfg, skip_bad_rows, &std::cerr);
            std::cout << "essays " << s.essays << ", vocabulary " << s.vocabulary << ", split " << s.train << "/"
                      << s.validation << "/" << s.test << (s.reused_manifests ? " (existing manifests)" : "") << '\n'
                      << "corpus: " << cfg.corpus_path().string() << '\n';
        } else if (*embed) {
            const auto r = ats::pipeline::cmd_train_embeddings(cfg);
            for (const auto& h : r.history)
                std::cout << "epoch " << h.epoch << " loss " << ats::format_double(h.mean.overall) << '\n';
            std::cout << "embeddings: " << cfg.embeddings_out_path().string() << '\n';
        } else if (*scorer) {
            const auto r = ats::pipeline::cmd_train_scorer(cfg, &std::cerr);
            for (const auto& h : r.history)
                std::cout << "epoch " << h.epoch << " train_mse " << ats::format_double(h.train_mse) << " val_rmse "
                          << ats::format_double(h.val_rmse) << '\n';
            std::cout << "best epoch " << r.best_epoch << "\nmodel: " << cfg.model_path().string() << '\n';
        } else if (*eval) {
            print_report(split, ats::pipeline::cmd_evaluate(cfg, split));
        } else if (*vis) {
            vopt.ansi = !no_ansi;
            ats::pipeline::cmd_visualize(cfg, vopt, std::cout);
            std::cout << "heatmaps: " << cfg.heatmaps_path().string() << '\n';
        } else if (*search) {
            std::ifstream in(space_path);
            if (!in) throw ats::ConfigError("cannot read search space '" + space_path + "'");
            const auto space = ats::parse_search_space(in);
            const std::filesystem::path out = search_out.empty() ? cfg.work() / "search" : std::filesystem::path(search_out);
            const auto r = ats::pipeline::cmd_search(cfg, space, out);
            for (const auto& t : r.trials)
                std::cout << "trial " << t.index << " val_rmse " << ats::format_double(t.val_rmse) << '\n';
            std::cout << "best trial " << r.trials[r.best].index << "\nbest config: " << (out / "best.conf").string() << '\n';
        } else if (*synth) {
            ats::pipeline::cmd_synth(profile, cfg.seed, synth_out);
            std::cout << synth_out << '\n';
        }
    } catch (const ats::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ats::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
