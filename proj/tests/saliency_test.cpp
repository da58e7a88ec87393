#include <gtest/gtest.h>

#include <regex>

#include "ats/saliency.hpp"
#include "support.hpp"

using namespace ats;

namespace {

seq::SeqModel model(std::uint64_t seed, bool bi = true) {
    seq::Architecture a;
    a.layers = 1;
    a.bidirectional = bi;
    a.embedding_dim = 4;
    a.units = 3;
    a.dropout = 0.0;
    Rng rng(seed);
    return oracle::random_seq_model(a, 12, rng, 0.8);
}

Essay essay(std::vector<TokenId> tokens) {
    Essay e;
    e.essay_id = 42;
    e.set_id = 1;
    e.tokens = std::move(tokens);
    for (std::size_t i = 0; i < e.tokens.size(); ++i) e.words.push_back("w" + std::to_string(i));
    return e;
}

saliency::QualityMap flat_map(std::size_t n) {
    saliency::QualityMap m;
    m.essay_id = 7;
    m.tokens.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.tokens[i].word = "t" + std::to_string(i);
    return m;
}

}  // namespace

TEST(InputGradients, ZeroWhenPredictionEqualsPseudoScore) {
    const auto m = model(1);
    const std::vector<TokenId> tokens{3, 4, 5};
    const double y = seq::predict_scaled(m, tokens);
    for (const auto& g : saliency::input_gradients(m, tokens, y)) EXPECT_TRUE(g.isZero(0.0));
}

TEST(InputGradients, MaxAndMinGradientsAreScalarMultiples) {
    const auto m = model(2);
    const std::vector<TokenId> tokens{3, 7, 4, 9};
    const double y = seq::predict_scaled(m, tokens);
    const auto to_max = saliency::input_gradients(m, tokens, 1.0);
    const auto to_min = saliency::input_gradients(m, tokens, 0.0);
    for (std::size_t t = 0; t < tokens.size(); ++t)
        EXPECT_LT((to_max[t] * y - to_min[t] * (y - 1.0)).norm(), 1e-12);
}

TEST(InputGradients, MatchFiniteDifferences) {
    auto m = model(3);
    const std::vector<TokenId> tokens{3, 5, 8};
    const double pseudo = 1.0;
    const auto g = saliency::input_gradients(m, tokens, pseudo);
    auto loss = [&] {
        const double e = seq::predict_scaled(m, tokens) - pseudo;
        return e * e;
    };
    for (std::size_t t = 0; t < tokens.size(); ++t)
        for (Eigen::Index i = 0; i < m.embeddings.rows(); ++i) {
            const double fd = oracle::central_difference(m.embeddings(i, tokens[t]), loss);
            EXPECT_LT(oracle::rel_error(g[t](i), fd), 1e-5) << t << "," << i;
        }
}

TEST(Quality, MagnitudesAreGradientNorms) {
    const auto m = model(4);
    const auto e = essay({3, 4, 9, 6, 5});
    const auto map = saliency::quality_map(m, e, {0, 1});
    const auto to_max = saliency::input_gradients(m, e.tokens, 1.0);
    const auto to_min = saliency::input_gradients(m, e.tokens, 0.0);
    ASSERT_EQ(map.tokens.size(), 5u);
    for (std::size_t t = 0; t < 5; ++t) {
        EXPECT_NEAR(map.tokens[t].mag_max, to_max[t].norm(), 1e-13);
        EXPECT_NEAR(map.tokens[t].mag_min, to_min[t].norm(), 1e-13);
        EXPECT_EQ(map.tokens[t].quality, map.tokens[t].mag_min - map.tokens[t].mag_max);
        EXPECT_EQ(map.tokens[t].word, e.words[t]);
    }
}

TEST(Quality, ModelIsNotModified) {
    const auto m = model(5);
    const auto copy = m;
    saliency::quality_map(m, essay({3, 4, 5, 6}), {0, 10});
    EXPECT_TRUE(m == copy);
}

TEST(Quality, UntrainedHeadIsRejected) {
    auto m = model(5);
    m.weights.head_w.setZero();
    EXPECT_THROW(saliency::quality_map(m, essay({3, 4}), {0, 1}), DataError);
    EXPECT_THROW(saliency::quality_map(model(5), essay({}), {0, 1}), DataError);
}

TEST(Quality, SpanLongerThanEssayEqualsWholeEssay) {
    const auto m = model(6);
    const auto e = essay({3, 4, 5, 6, 7});
    const auto whole = saliency::quality_map(m, e, {0, 1});
    const auto span = saliency::quality_map(m, e, {0, 1}, 5);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(whole.tokens[t].quality, span.tokens[t].quality);
}

TEST(Quality, SpansAreScoredIndependently) {
    const auto m = model(6);
    const auto e = essay({3, 4, 5, 6, 7});
    const auto map = saliency::quality_map(m, e, {0, 1}, 2);
    ASSERT_EQ(map.tokens.size(), 5u);
    const auto tail = saliency::quality_map(m, essay({7}), {0, 1});
    EXPECT_EQ(map.tokens[4].quality, tail.tokens[0].quality);
}

TEST(Bins, TiesAreOrderedByPosition) {
    auto map = flat_map(16);
    saliency::assign_bins(map.tokens);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(map.tokens[i].bin, static_cast<int>(i / 2));
}

TEST(Bins, InvariantUnderPositiveRescaling) {
    Rng rng(8);
    auto a = flat_map(37);
    for (auto& t : a.tokens) t.quality = rng.uniform(-1, 1);
    auto b = a;
    for (auto& t : b.tokens) t.quality = 3.5 * t.quality + 2.0;
    saliency::assign_bins(a.tokens);
    saliency::assign_bins(b.tokens);
    for (std::size_t i = 0; i < a.tokens.size(); ++i) EXPECT_EQ(a.tokens[i].bin, b.tokens[i].bin);
}

TEST(Bins, EveryOctileUsedAndBestGetsTopBin) {
    auto map = flat_map(8);
    for (std::size_t i = 0; i < 8; ++i) map.tokens[i].quality = -static_cast<double>(i);
    saliency::assign_bins(map.tokens);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(map.tokens[i].bin, 7 - static_cast<int>(i));
}

TEST(Render, AnsiEndpointsAndStripping) {
    auto map = flat_map(8);
    saliency::assign_bins(map.tokens);
    const auto s = saliency::render_ansi(map);
    EXPECT_NE(s.find("\x1b[48;5;52m\x1b[38;5;15mt0"), std::string::npos);
    EXPECT_NE(s.find("\x1b[48;5;22m\x1b[38;5;15mt7"), std::string::npos);
    const auto plain = std::regex_replace(s, std::regex("\x1b\\[[0-9;]*m"), "");
    EXPECT_EQ(plain, "t0 t1 t2 t3 t4 t5 t6 t7");
}

TEST(Render, MonochromeSuffixes) {
    auto map = flat_map(3);
    map.tokens[0].quality = 1;
    saliency::assign_bins(map.tokens);
    EXPECT_EQ(saliency::render_ansi(map, true), "t0[5] t1[0] t2[2]");
}

TEST(Render, HtmlEscapesAndIsWellFormed) {
    auto map = flat_map(3);
    map.tokens[1].word = "<b>&\"";
    saliency::assign_bins(map.tokens);
    const auto html = saliency::render_html(map, std::string("h1"));
    EXPECT_EQ(html.find("<b>"), std::string::npos);
    EXPECT_NE(html.find("&lt;b&gt;&amp;&quot;"), std::string::npos);
    EXPECT_EQ(html.rfind("<!DOCTYPE html>", 0), 0u);
    EXPECT_NE(html.find("</html>"), std::string::npos);
    EXPECT_NE(html.find("content=\"h1\""), std::string::npos);
    std::size_t open = 0, close = 0;
    for (auto p = html.find("<span"); p != std::string::npos; p = html.find("<span", p + 1)) ++open;
    for (auto p = html.find("</span>"); p != std::string::npos; p = html.find("</span>", p + 1)) ++close;
    EXPECT_EQ(open, 3u);
    EXPECT_EQ(close, 3u);
    EXPECT_THROW(saliency::render_html(flat_map(0)), DataError);
}
