#include <gtest/gtest.h>

#include <random>

#include "calltide/classify.hpp"
#include "calltide/errors.hpp"
#include "oracles.hpp"

using namespace calltide;

namespace {

std::vector<TrainingDocument> tiny_corpus() {
    return {{{"good", "growth"}, Label::positive}, {{"miss", "weak"}, Label::negative}, {{"inline"}, Label::neutral}};
}

std::vector<oracle::Doc> to_oracle(const std::vector<TrainingDocument>& docs) {
    std::vector<oracle::Doc> out;
    for (const auto& d : docs) out.push_back({d.tokens, to_int(d.label)});
    return out;
}

// Words drawn from a class-specific pool, so every class is separable.
std::vector<TrainingDocument> separable_corpus(std::size_t per_class, std::mt19937_64& rng) {
    const std::array<std::vector<std::string>, 3> pools{
        std::vector<std::string>{"miss", "cut", "weak", "declin", "impair"},
        std::vector<std::string>{"inline", "steadi", "maintain", "flat", "guid"},
        std::vector<std::string>{"beat", "record", "strong", "rais", "expand"}};
    std::vector<TrainingDocument> out;
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t k = 0; k < per_class; ++k) {
            TrainingDocument d;
            d.label = static_cast<Label>(c);
            const std::size_t n = 5 + rng() % 20;
            for (std::size_t i = 0; i < n; ++i) d.tokens.push_back(pools[c][rng() % pools[c].size()]);
            out.push_back(std::move(d));
        }
    }
    return out;
}

}  // namespace

TEST(Baseline, HandComputedPosterior) {
    const auto m = train_baseline(tiny_corpus(), 1.0);
    EXPECT_EQ(m.vocabulary_size(), 5u);
    for (double p : m.priors()) EXPECT_DOUBLE_EQ(p, 1.0 / 3);
    // P(good | c) = 1/7, 1/6, 2/7 with equal priors.
    const std::vector<std::string> q{"good"};
    const Scores s = m.posterior(q);
    EXPECT_NEAR(s[0], 6.0 / 25, 1e-12);
    EXPECT_NEAR(s[1], 7.0 / 25, 1e-12);
    EXPECT_NEAR(s[2], 12.0 / 25, 1e-12);
    EXPECT_NEAR(m.log_likelihoods().at("good")[2], std::log(2.0 / 7), 1e-12);
}

TEST(Baseline, ClassifierPredictsPositive) {
    BaselineClassifier clf(train_baseline(tiny_corpus()));
    EXPECT_EQ(clf.handle().name, "builtin-nb");
    EXPECT_EQ(clf.handle().wants, InputKind::preprocessed);
    EXPECT_EQ(clf.handle().mode, ClassifierMode::builtin);
    const auto p = predict(clf, Chunk{"T", 0, {"good"}, "good"});
    EXPECT_EQ(p.label, Label::positive);
    EXPECT_EQ(predict(clf, Chunk{"T", 1, {"miss"}, "miss weak"}).label, Label::negative);
}

TEST(Baseline, EmptyOrUnknownTokensGivePriors) {
    std::vector<TrainingDocument> docs = tiny_corpus();
    docs.push_back({{"good"}, Label::positive});
    const auto m = train_baseline(docs);
    const Scores empty = m.posterior({});
    EXPECT_NEAR(empty[0], 0.25, 1e-12);
    EXPECT_NEAR(empty[2], 0.5, 1e-12);
    const std::vector<std::string> unknown{"zzz", "qqq"};
    EXPECT_EQ(m.posterior(unknown), empty);
}

TEST(Baseline, AlphaMustBePositive) {
    EXPECT_THROW(train_baseline(tiny_corpus(), 0.0), ConfigurationError);
    EXPECT_THROW(train_baseline(tiny_corpus(), -1.0), ConfigurationError);
    EXPECT_THROW(train_baseline(tiny_corpus(), std::nan("")), ConfigurationError);
}

TEST(Baseline, EveryClassNeedsADocument) {
    auto docs = tiny_corpus();
    docs.pop_back();
    EXPECT_THROW(train_baseline(docs), InsufficientExamples);
    EXPECT_THROW(train_baseline({}), InsufficientExamples);
}

TEST(Baseline, RepeatedWordsCompound) {
    const auto m = train_baseline(tiny_corpus());
    const std::vector<std::string> once{"good"}, twice{"good", "good"};
    EXPECT_GT(m.posterior(twice)[2], m.posterior(once)[2]);
    const auto o = oracle::nb_posterior(to_oracle(tiny_corpus()), 1.0, twice);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(m.posterior(twice)[c], o[c], 1e-12);
}

TEST(Baseline, MatchesOracleOnRandomCorpora) {
    std::mt19937_64 rng(17);
    const std::vector<std::string> words{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<TrainingDocument> docs;
        for (int c = 0; c < 3; ++c) {
            const int n = 1 + static_cast<int>(rng() % 4);
            for (int k = 0; k < n; ++k) {
                TrainingDocument d;
                d.label = static_cast<Label>(c);
                for (std::size_t i = rng() % 6; i > 0; --i) d.tokens.push_back(words[rng() % words.size()]);
                docs.push_back(std::move(d));
            }
        }
        const double alpha = 0.1 + double(rng() % 20) / 10;
        const auto m = train_baseline(docs, alpha);
        std::vector<std::string> q;
        for (std::size_t i = rng() % 9; i > 0; --i) q.push_back(words[rng() % words.size()]);
        q.push_back("unseen");
        const auto got = m.posterior(q);
        const auto want = oracle::nb_posterior(to_oracle(docs), alpha, q);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], want[c], 1e-9) << trial;
    }
}

TEST(Baseline, PosteriorSumsToOne) {
    std::mt19937_64 rng(4);
    const auto m = train_baseline(separable_corpus(20, rng));
    const std::vector<std::string> q(400, "beat");
    const Scores s = m.posterior(q);
    EXPECT_NEAR(s[0] + s[1] + s[2], 1.0, 1e-12);
    for (double v : s) EXPECT_TRUE(std::isfinite(v));
}

TEST(Baseline, JsonRoundTrip) {
    std::mt19937_64 rng(9);
    const auto m = train_baseline(separable_corpus(10, rng), 0.5);
    EXPECT_EQ(BaselineModel::from_json(m.to_json()), m);
    EXPECT_EQ(BaselineModel::from_json(m.to_json()).to_json(), m.to_json());
    EXPECT_THROW(BaselineModel::from_json("{"), StoreCorrupt);
    EXPECT_THROW(BaselineModel::from_json("{\"alpha\":1}"), StoreCorrupt);
}

TEST(Baseline, SeparableCorpusIsLearned) {
    std::mt19937_64 rng(21);
    const auto docs = separable_corpus(100, rng);
    BaselineClassifier clf(train_baseline(docs));
    std::size_t correct = 0;
    for (const auto& d : docs) correct += argmax_label(clf.score(join_tokens(d.tokens))) == d.label;
    EXPECT_EQ(correct, docs.size());
}

TEST(Baseline, PredictionIsDeterministic) {
    std::mt19937_64 rng(30);
    const auto docs = separable_corpus(20, rng);
    BaselineClassifier a(train_baseline(docs)), b(train_baseline(docs));
    for (const auto& d : docs) {
        const std::string text = join_tokens(d.tokens) + " noise unseen";
        EXPECT_EQ(a.score(text), b.score(text));
        EXPECT_EQ(a.score(text), a.score(text));
    }
}

TEST(Handle, Validation) {
    EXPECT_NO_THROW((ClassifierHandle{"x", "1", 16}.validate()));
    EXPECT_THROW((ClassifierHandle{"x", "1", 15}.validate()), ConfigurationError);
    EXPECT_THROW((ClassifierHandle{"", "1", 512}.validate()), ConfigurationError);
}

TEST(Handle, Names) {
    EXPECT_EQ(to_string(InputKind::raw), "raw");
    EXPECT_EQ(parse_input_kind("preprocessed"), InputKind::preprocessed);
    EXPECT_THROW(parse_input_kind("tokens"), ConfigurationError);
    EXPECT_EQ(to_string(ClassifierMode::plugin), "plugin");
}
