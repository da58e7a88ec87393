// Deterministic synthetic corpora in ASAP TSV layout, for checking the
// pipeline at desk scale.
//
//   overfit16  16 short essays scored 0-10 by their share of "good" words;
//              the two score-0 essays also carry words seen nowhere else.
//   misspell   correct/misspelled word pairs in identical contexts, with the
//              misspellings confined to bottom-quartile essays.
//   ablation   200 essays whose score follows the share of good vs bad
//              words drawn from large pools sharing identical contexts.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ats/common.hpp"

namespace ats::synth {

struct SynthEssay {
    std::int64_t essay_id = 0;
    int set_id = 1;
    std::string text;
    double score = 0.0;
};

struct SynthCorpus {
    std::vector<SynthEssay> essays;
    // misspell profile: (correct, misspelled)
    std::vector<std::pair<std::string, std::string>> pairs;
    // overfit16 profile: tokens that occur only in minimum-score essays
    std::vector<std::string> min_only;
};

inline const std::vector<std::string>& profiles() {
    static const std::vector<std::string> p{"overfit16", "misspell", "ablation"};
    return p;
}

namespace detail {

inline std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.index(v.size()))];
}

}  // namespace detail

inline SynthCorpus overfit16(std::uint64_t seed) {
    Rng rng(seed);
    const std::vector<std::string> good{"excellent", "vivid", "precise", "thoughtful",
                                        "coherent", "eloquent", "insightful", "compelling"};
    const std::vector<std::string> bad{"stuff", "thing", "dumb", "whatever", "lots", "gonna", "kinda", "okay"};
    const std::vector<std::string> nouns{"story", "idea", "reason", "point", "example", "detail"};
    const std::vector<int> scores{0, 0, 1, 2, 3, 3, 4, 5, 5, 6, 7, 7, 8, 9, 10, 10};
    SynthCorpus c;
    c.min_only = {"teh", "becuz", "wich"};
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const int s = scores[k];
        std::vector<std::string> slots;
        for (int i = 0; i < 10; ++i) slots.push_back(i < s ? detail::pick(good, rng) : detail::pick(bad, rng));
        if (s == 0)
            for (std::size_t i = 0; i < c.min_only.size(); ++i) slots[i] = c.min_only[i];
        rng.shuffle(slots);
        std::vector<std::string> words;
        for (const auto& q : slots) {
            words.push_back(q);
            words.push_back(detail::pick(nouns, rng));
            words.push_back(".");
        }
        c.essays.push_back({static_cast<std::int64_t>(k + 1), 1, detail::join(words), static_cast<double>(s)});
    }
    return c;
}

inline SynthCorpus misspell(std::uint64_t seed) {
    Rng rng(seed);
    SynthCorpus c;
    c.pairs = {{"computer", "copmuter"}, {"laptop", "labtop"},   {"because", "becuase"},
               {"really", "realy"},      {"believe", "beleive"}, {"friends", "freinds"}};
    const std::vector<std::vector<std::string>> templates{
        {"i", "use", "my", "_", "every", "day", "."},
        {"the", "_", "is", "very", "useful", "."},
        {"we", "talk", "about", "the", "_", "at", "school", "."},
        {"people", "say", "the", "_", "helps", "them", "learn", "."},
        {"a", "_", "can", "change", "your", "life", "."},
    };
    const int n = 80;
    // Scores cycle through 0..10 with ids interleaved; bottom quartile is score <= 2.
    for (int k = 0; k < n; ++k) {
        const int s = (k * 7) % 11;
        const bool low = s <= 2;
        std::vector<std::string> words;
        for (int sent = 0; sent < 8; ++sent) {
            const auto& pair = detail::pick(c.pairs, rng);
            for (const auto& w : detail::pick(templates, rng)) words.push_back(w == "_" ? (low ? pair.second : pair.first) : w);
        }
        c.essays.push_back({k + 1, 1, detail::join(words), static_cast<double>(s)});
    }
    return c;
}

inline SynthCorpus ablation(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> good, bad;
    for (int i = 1; i <= 24; ++i) {
        good.push_back("gw" + std::to_string(i));
        bad.push_back("bw" + std::to_string(i));
    }
    const std::vector<std::string> nouns{"story", "idea", "reason", "point", "example", "detail", "part", "topic"};
    const std::vector<std::string> dets{"the", "a", "this", "that"};
    SynthCorpus c;
    const int n = 200, slots = 12;
    for (int k = 0; k < n; ++k) {
        const int n_good = static_cast<int>(rng.index(slots + 1));
        std::vector<std::string> q;
        for (int i = 0; i < slots; ++i) q.push_back(i < n_good ? detail::pick(good, rng) : detail::pick(bad, rng));
        rng.shuffle(q);
        std::vector<std::string> words;
        for (const auto& w : q) {
            words.push_back(detail::pick(dets, rng));
            words.push_back(w);
            words.push_back(detail::pick(nouns, rng));
            words.push_back(".");
        }
        const double score = std::round(10.0 * n_good / slots);
        c.essays.push_back({k + 1, 1, detail::join(words), score});
    }
    return c;
}

inline SynthCorpus generate(const std::string& profile, std::uint64_t seed) {
    if (profile == "overfit16") return overfit16(seed);
    if (profile == "misspell") return misspell(seed);
    if (profile == "ablation") return ablation(seed);
    throw ConfigError("unknown synthetic profile '" + profile + "' (expected overfit16, misspell or ablation)");
}

inline void write_tsv(std::ostream& os, const SynthCorpus& c) {
    os << "essay_id\tessay_set\tessay\tdomain1_score\n";
    for (const auto& e : c.essays) os << e.essay_id << '\t' << e.set_id << '\t' << e.text << '\t' << format_double(e.score) << '\n';
}

inline std::string to_tsv(const SynthCorpus& c) {
    std::ostringstream os;
    write_tsv(os, c);
    return os.str();
}

}  // namespace ats::synth
