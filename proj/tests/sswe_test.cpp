#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ats/sswe.hpp"
#include "support.hpp"

using namespace ats;

namespace {

constexpr double kGradTol = 1e-4;

Essay toy_essay(std::int64_t id, std::vector<TokenId> tokens, double scaled) {
    Essay e;
    e.essay_id = id;
    e.set_id = 1;
    e.tokens = std::move(tokens);
    e.words.assign(e.tokens.size(), "w");
    e.scaled_score = scaled;
    return e;
}

std::vector<Essay> toy_corpus() {
    return {toy_essay(1, {3, 4, 5, 6, 3, 4}, 0.9), toy_essay(2, {7, 8, 5, 9, 7}, 0.1),
            toy_essay(3, {3, 5, 6, 4}, 0.8), toy_essay(4, {8, 9, 7, 5, 8}, 0.2)};
}

sswe::Hyper toy_hyper() {
    sswe::Hyper h;
    h.dim = 4;
    h.hidden = 5;
    h.window = 3;
    h.corruptions = 3;
    h.eta = 0.05;
    h.epochs = 3;
    h.seed = 11;
    h.init_scale = 0.3;
    return h;
}

}  // namespace

TEST(Htanh, Branches) {
    EXPECT_EQ(sswe::htanh(-2.0), -1.0);
    EXPECT_EQ(sswe::htanh(0.5), 0.5);
    EXPECT_EQ(sswe::htanh(3.0), 1.0);
    EXPECT_EQ(sswe::htanh(-1.0), -1.0);
}

TEST(EmbedWindow, SingleColumn) {
    Matrix m(2, 4);
    m << 1, 2, 3, 4, 5, 6, 7, 8;
    const std::vector<TokenId> ids{2};
    const Vector s = sswe::embed_window(ids, m);
    ASSERT_EQ(s.size(), 2);
    EXPECT_EQ(s(0), 3);
    EXPECT_EQ(s(1), 7);
}

TEST(EmbedWindow, ZeroMatrixGivesZeros) {
    const std::vector<TokenId> ids{0, 1, 2};
    EXPECT_TRUE(sswe::embed_window(ids, Matrix::Zero(5, 3)).isZero(0.0));
}

TEST(EmbedWindow, ConcatenatesInOrder) {
    Matrix m(2, 5);
    m << 0, 1, 2, 3, 4, 10, 11, 12, 13, 14;
    const std::vector<TokenId> ids{4, 1, 3};
    Vector want(6);
    want << 4, 14, 1, 11, 3, 13;
    EXPECT_EQ(sswe::embed_window(ids, m), want);
    const std::vector<TokenId> bad{5};
    EXPECT_THROW(sswe::embed_window(bad, m), LookupError);
}

TEST(Forward, ZeroParamsGiveZeroHeads) {
    const auto p = sswe::Params::zeros(3, 10, 4, 3);
    const auto out = sswe::forward(p, Vector::Ones(9));
    EXPECT_EQ(out.context, 0.0);
    EXPECT_EQ(out.score, 0.0);
}

TEST(Forward, SingleHiddenUnitByHand) {
    auto p = sswe::Params::zeros(1, 4, 1, 3);
    p.hidden_w << 0.5, -1.0, 2.0;
    p.hidden_b << 0.1;
    p.context_w << 3.0;
    p.context_b = -0.5;
    p.score_w << -2.0;
    p.score_b = 0.25;
    Vector s(3);
    s << 0.2, 0.3, 0.1;
    // pre = 0.1 - 0.3 + 0.2 + 0.1 = 0.1
    const auto out = sswe::forward(p, s);
    EXPECT_NEAR(out.context, 3.0 * 0.1 - 0.5, 1e-15);
    EXPECT_NEAR(out.score, -2.0 * 0.1 + 0.25, 1e-15);
    // saturation clips the hidden unit at 1
    s << 4.0, 0.0, 0.0;
    EXPECT_NEAR(sswe::forward(p, s).context, 3.0 - 0.5, 1e-15);
}

TEST(Forward, HeadsAreLinearInTheirWeights) {
    Rng rng(5);
    auto p = sswe::Params::random(3, 8, 4, 3, rng, 0.5);
    Vector s(9);
    fill_uniform(s, rng, -1, 1);
    const auto base = sswe::forward(p, s);
    p.context_w *= 2.0;
    p.score_w *= -3.0;
    const auto scaled = sswe::forward(p, s);
    EXPECT_NEAR(scaled.context, 2.0 * base.context, 1e-14);
    EXPECT_NEAR(scaled.score, -3.0 * base.score, 1e-14);
    EXPECT_THROW(sswe::forward(p, Vector::Zero(8)), ShapeError);
}

TEST(Loss, ContextHinge) {
    const std::vector<double> far{0.0};
    EXPECT_EQ(sswe::loss_context(2.0, far), 0.0);
    const std::vector<double> equal{0.5};
    EXPECT_EQ(sswe::loss_context(0.5, equal), 1.0);
    const std::vector<double> two{1.2, -0.2};
    EXPECT_NEAR(sswe::loss_context(0.5, two), 1.0, 1e-15);  // mean(1.7, 0.3)
    EXPECT_THROW(sswe::loss_context(0.0, {}), ConfigError);
}

TEST(Loss, ScoreSquaredError) {
    const std::vector<double> a{0.3}, b{0.3};
    EXPECT_EQ(sswe::loss_score(a, b), 0.0);
    const std::vector<double> c{2.0}, d{0.0};
    EXPECT_EQ(sswe::loss_score(c, d), 4.0);
    const std::vector<double> e{1.0, 0.0}, f{0.0, 1.0};
    EXPECT_EQ(sswe::loss_score(e, f), 1.0);
    EXPECT_THROW(sswe::loss_score(a, f), ShapeError);
}

TEST(Loss, OverallBlend) {
    EXPECT_EQ(sswe::loss_overall(1.0, 0.7, 5.0), 0.7);
    EXPECT_EQ(sswe::loss_overall(0.0, 0.7, 5.0), 5.0);
    EXPECT_NEAR(sswe::loss_overall(0.1, 1.0, 2.0), 1.9, 1e-15);
    EXPECT_THROW(sswe::loss_overall(1.5, 0, 0), ConfigError);
}

TEST(Backward, FlatHingeGivesZeroGradientAtAlphaOne) {
    // true center saturates the hidden layer at +1, corruptions at -1
    auto p = sswe::Params::zeros(2, 6, 2, 3);
    p.hidden_b << 0.5, 0.5;
    p.context_w << 10.0, 10.0;
    p.hidden_w.col(2) << 100.0, 100.0;
    p.embeddings.col(4) << 1.0, 0.0;
    p.embeddings.col(3) << -1.0, 0.0;
    p.embeddings.col(5) << -1.0, 0.0;
    WindowSample w{{3, 4, 5}, 1, 0.5, 1};
    const std::vector<TokenId> corrupt{3, 5};
    const auto l = sswe::evaluate(p, w, corrupt, 0.5, 1.0);
    ASSERT_EQ(l.context, 0.0);
    const auto g = sswe::backward(p, w, corrupt, 0.5, 1.0);
    EXPECT_TRUE(g.embeddings.empty());
    EXPECT_TRUE(g.hidden_w.isZero(0.0));
    EXPECT_TRUE(g.context_w.isZero(0.0));
    EXPECT_TRUE(g.score_w.isZero(0.0));
    EXPECT_EQ(g.context_b, 0.0);
}

TEST(Backward, MatchesFiniteDifferencesForEveryAlpha) {
    for (double alpha : {0.0, 0.1, 0.5, 1.0}) {
        Rng rng(static_cast<std::uint64_t>(alpha * 100) + 7);
        for (int k = 0; k < 3; ++k) {
            const auto c = oracle::random_sswe_case(rng, 4, 3, 3, 2, 9);
            EXPECT_LT(oracle::sswe_gradient_error(c, alpha), kGradTol) << "alpha " << alpha << " case " << k;
        }
    }
}

TEST(Backward, OnlyWindowWordsAndCorruptionsGetEmbeddingGradient) {
    Rng rng(3);
    const auto c = oracle::random_sswe_case(rng, 4, 3, 3, 2, 30);
    const auto g = sswe::backward(c.params, c.sample, c.corruptions, c.gold, 0.5);
    std::set<TokenId> allowed(c.sample.context.begin(), c.sample.context.end());
    allowed.insert(c.corruptions.begin(), c.corruptions.end());
    for (const auto& [id, col] : g.embeddings) EXPECT_TRUE(allowed.count(id)) << id;
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
    auto h = toy_hyper();
    h.eta = 0.0;
    Rng rng(99);
    const auto init = sswe::Params::random(h.dim, 10, h.hidden, h.window, rng, 0.3);
    const auto r = sswe::train(toy_corpus(), 10, h, &init);
    EXPECT_TRUE(r.params == init);
    EXPECT_EQ(r.history.size(), 3u);
}

TEST(Train, LossDecreases) {
    auto h = toy_hyper();
    h.epochs = 30;
    const auto r = sswe::train(toy_corpus(), 10, h);
    EXPECT_LT(r.history.back().mean.overall, r.history.front().mean.overall);
    EXPECT_TRUE(r.params.finite());
}

TEST(Train, SameSeedSameResult) {
    const auto a = sswe::train(toy_corpus(), 10, toy_hyper());
    const auto b = sswe::train(toy_corpus(), 10, toy_hyper());
    EXPECT_TRUE(a.params == b.params);
    auto h = toy_hyper();
    h.seed = 12;
    EXPECT_FALSE(sswe::train(toy_corpus(), 10, h).params == a.params);
}

TEST(Train, RejectsEvenWindowAndEmptyCorpus) {
    auto h = toy_hyper();
    h.window = 4;
    EXPECT_THROW(sswe::train(toy_corpus(), 10, h), ConfigError);
    EXPECT_THROW(sswe::train({}, 10, toy_hyper()), DataError);
}

TEST(Neighbors, DuplicateColumnIsNearest) {
    const auto v = build_vocabulary({{"a", "b", "c", "d"}}, 1);
    Matrix m = Matrix::Zero(3, static_cast<Eigen::Index>(v.size()));
    m.col(v.id_of("a")) << 1, 2, 3;
    m.col(v.id_of("b")) << 0, 1, 0;
    m.col(v.id_of("c")) << 1, 2, 3;
    m.col(v.id_of("d")) << -1, -2, -3;
    const auto nn = sswe::nearest_neighbors(m, v, "a", 3);
    ASSERT_EQ(nn.size(), 3u);
    EXPECT_EQ(nn[0].word, "c");
    EXPECT_NEAR(nn[0].cosine, 1.0, 1e-15);
    EXPECT_EQ(nn[2].word, "d");
    for (const auto& n : nn) EXPECT_NE(n.word, "a");
}

TEST(Neighbors, OrthogonalColumnsHaveZeroCosine) {
    const auto v = build_vocabulary({{"x", "y"}}, 1);
    Matrix m = Matrix::Zero(2, static_cast<Eigen::Index>(v.size()));
    m.col(v.id_of("x")) << 1, 0;
    m.col(v.id_of("y")) << 0, 5;
    const auto nn = sswe::nearest_neighbors(m, v, "x", 5);
    ASSERT_EQ(nn.size(), 1u);
    EXPECT_EQ(nn[0].cosine, 0.0);
    EXPECT_THROW(sswe::nearest_neighbors(m, v, "nope", 1), LookupError);
}

TEST(Persistence, RoundTripIsBitwise) {
    const auto v = build_vocabulary({{"a", "b", "c"}}, 1);
    Rng rng(4);
    const auto p = sswe::Params::random(3, static_cast<Eigen::Index>(v.size()), 2, 3, rng, 0.4);
    std::stringstream ss;
    sswe::write_embeddings(ss, v, p);
    const auto f = sswe::read_embeddings(ss);
    EXPECT_TRUE(f.params == p);
    EXPECT_EQ(f.vocab.tokens(), v.tokens());
}

TEST(Persistence, TruncatedAndForeignFilesAreRejected) {
    const auto v = build_vocabulary({{"a"}}, 1);
    Rng rng(4);
    const auto p = sswe::Params::random(2, static_cast<Eigen::Index>(v.size()), 2, 1, rng);
    std::stringstream ss;
    sswe::write_embeddings(ss, v, p);
    const std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(sswe::read_embeddings(cut), DataError);
    std::stringstream other("ATSMxxxxxxxxxxxxxxxx");
    EXPECT_THROW(sswe::read_embeddings(other), FormatError);
}
