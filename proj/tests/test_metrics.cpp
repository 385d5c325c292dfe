#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "aqag/inference_client.hpp"
#include "aqag/metrics.hpp"
#include "support/mock_server.hpp"
#include "support/oracles.hpp"
#include "support/paths.hpp"

using namespace aqag;
using aqag::testing::fixture;
using aqag::testing::mock_tokenize;

namespace {

// In-process scorer with the mock server's tokenization and scoring rules.
struct FakeScorer {
  aqag::testing::MockServer::Scorer score = [](std::string_view, std::size_t) { return -1.0; };
  bool bos = false;
  std::atomic<std::size_t> calls{0};

  std::vector<EchoToken> echo_tokens(std::string_view text) {
    ++calls;
    auto toks = mock_tokenize(text);
    if (bos) toks.insert(toks.begin(), "<s>");
    std::vector<EchoToken> out;
    for (std::size_t i = 0; i < toks.size(); ++i)
      out.push_back({toks[i], i == 0 ? std::nullopt : std::optional<double>(score(toks[i], i))});
    return out;
  }
};

std::string words(std::size_t n, std::mt19937& rng) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += (rng() % 5 == 0) ? "\n" : " ";
    s += std::string(1 + rng() % 8, static_cast<char>('a' + rng() % 26));
  }
  return s;
}

McqItem item_with(std::array<std::string, 4> opts, Label answer) {
  McqItem item;
  item.index = 1;
  item.stem = "Which?";
  for (auto l : kLabels) item.options[l] = opts[index_of(l)];
  item.answer_label = answer;
  item.complete = true;
  return item;
}

}  // namespace

TEST(Perplexity, Examples) {
  const std::vector<double> uniform10(5, -std::log(10.0));
  EXPECT_NEAR(perplexity(uniform10), 10.0, 1e-12);
  EXPECT_EQ(perplexity(std::vector<double>{0.0, 0.0}), 1.0);
  EXPECT_NEAR(perplexity(std::vector<double>{-0.5, -1.5}), std::exp(1.0), 1e-12);
  EXPECT_THROW(perplexity(std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(perplexity(std::vector<double>{0.1}), InvalidArgument);
}

TEST(Perplexity, PermutationAndShift) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> d(-8.0, 0.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> lp(1 + rng() % 50);
    for (auto& x : lp) x = d(rng);
    const double p = perplexity(lp);
    EXPECT_GE(p, 1.0);
    auto shuffled = lp;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(perplexity(shuffled) / p, 1.0, 1e-12);
    const double c = 0.37;
    for (auto& x : shuffled) x -= c;
    EXPECT_NEAR(perplexity(shuffled) / (p * std::exp(c)), 1.0, 1e-12);
  }
}

TEST(Perplexity, TokenScoreSequenceRejectsPositiveLogprobs) {
  EXPECT_THROW(TokenScoreSequence::from_logprobs({-1.0, 0.5}), InvalidArgument);
  const auto seq = TokenScoreSequence::from_echo({{"a", std::nullopt}, {"b", -2.0}});
  EXPECT_EQ(seq.size(), 1u);
  EXPECT_NEAR(perplexity(seq), std::exp(2.0), 1e-12);
}

TEST(Windows, PlanCoversEveryTokenOnce) {
  for (std::size_t n = 1; n < 40; ++n)
    for (std::size_t w = 1; w < 12; ++w)
      for (std::size_t s = 1; s <= w; ++s) {
        const auto plan = plan_windows(n, w, s);
        std::vector<int> seen(n, 0);
        for (const auto& win : plan) {
          EXPECT_LE(win.end - win.begin, w);
          for (std::size_t p = win.tail_begin; p < win.end; ++p) ++seen[p];
        }
        for (int c : seen) EXPECT_EQ(c, 1);
        EXPECT_EQ(plan.back().end, n);
      }
}

TEST(CorpusPerplexity, ConstantScoresGiveE) {
  std::mt19937 rng(1);
  const auto text = words(60, rng);
  for (auto [w, s] : {std::pair<std::size_t, std::size_t>{4, 2}, {8, 8}, {16, 3}, {100, 50}}) {
    FakeScorer scorer;
    EXPECT_NEAR(corpus_perplexity(scorer, text, {w, s, 4000, 3}), std::exp(1.0), 1e-12);
  }
}

TEST(CorpusPerplexity, StrideLargerThanWindowIsRejected) {
  FakeScorer scorer;
  EXPECT_THROW(corpus_perplexity(scorer, "a b c", {4, 5, 4000, 1}), InvalidArgument);
  EXPECT_THROW(corpus_perplexity(scorer, "   ", {4, 2, 4000, 1}), InvalidArgument);
}

TEST(CorpusPerplexity, SingleWindowEqualsPlainPerplexity) {
  std::mt19937 rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto text = words(5 + rng() % 30, rng);
    FakeScorer scorer;
    scorer.score = aqag::testing::context_scorer();
    const auto plain = perplexity(TokenScoreSequence::from_echo(scorer.echo_tokens(text)));
    const std::size_t n = mock_tokenize(text).size();
    EXPECT_NEAR(corpus_perplexity(scorer, text, {n + rng() % 3, n, 4000, 2}) / plain, 1.0, 1e-12);
  }
}

TEST(CorpusPerplexity, MatchesBruteForceWindows) {
  std::mt19937 rng(3);
  for (bool bos : {false, true}) {
    for (int t = 0; t < 60; ++t) {
      const auto text = words(3 + rng() % 40, rng);
      const std::size_t w = 1 + rng() % 10, s = 1 + rng() % w;
      FakeScorer scorer;
      scorer.bos = bos;
      scorer.score = aqag::testing::context_scorer();
      const auto toks = mock_tokenize(text);
      const double expected = aqag::testing::oracle_windowed_perplexity(toks, w, s, bos, scorer.score);
      if (!std::isfinite(expected)) {  // no token had context
        EXPECT_THROW(corpus_perplexity(scorer, text, {w, s, 4000, 4}), InvalidArgument);
        continue;
      }
      const double got = corpus_perplexity(scorer, text, {w, s, 1 + rng() % 60, 4});
      EXPECT_NEAR(got, expected, 1e-9) << "w=" << w << " s=" << s << " bos=" << bos << " text=" << text;
    }
  }
}

TEST(CorpusPerplexity, TenTokensWindowFourStrideTwo) {
  const std::string text = "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9";
  FakeScorer scorer;
  scorer.score = [](std::string_view tok, std::size_t pos) {
    return -(static_cast<double>(tok.back() - '0') + 1.0) / 10.0 - 0.05 * static_cast<double>(pos);
  };
  // Windows [0,4) [2,6) [4,8) [6,10); tails [0,4) [4,6) [6,8) [8,10).
  // Position in window: t1..t3 -> 1..3, t4,t5 -> 2,3, t6,t7 -> 2,3, t8,t9 -> 2,3.
  const double lp[] = {-0.2 - 0.05, -0.3 - 0.10, -0.4 - 0.15, -0.5 - 0.10, -0.6 - 0.15,
                       -0.7 - 0.10, -0.8 - 0.15, -0.9 - 0.10, -1.0 - 0.15};
  const double mean = std::accumulate(std::begin(lp), std::end(lp), 0.0) / 9.0;
  EXPECT_NEAR(corpus_perplexity(scorer, text, {4, 2, 4000, 2}), std::exp(-mean), 1e-12);
}

TEST(CorpusPerplexity, OverHttpWithBos) {
  aqag::testing::MockServer server;
  server.set_bos(true);
  server.set_scorer(aqag::testing::context_scorer());
  ClientOptions opts;
  opts.retry.initial_backoff = std::chrono::milliseconds(1);
  InferenceClient client(server.url(), opts);
  std::mt19937 rng(9);
  const auto text = words(50, rng);
  const auto expected =
      aqag::testing::oracle_windowed_perplexity(mock_tokenize(text), 8, 3, true, aqag::testing::context_scorer());
  EXPECT_NEAR(corpus_perplexity(client, text, {8, 3, 37, 4}), expected, 1e-9);
}

TEST(CorpusPerplexity, ChunkingKeepsTokenStream) {
  std::mt19937 rng(6);
  const auto text = words(80, rng);
  for (std::size_t limit : {1u, 3u, 13u, 40u}) {
    std::string joined;
    std::vector<std::string> tokens;
    for (auto c : detail::chunk_on_whitespace(text, limit)) {
      const auto t = mock_tokenize(c);
      if (c.size() > limit) {
        EXPECT_EQ(t.size(), 1u) << "only a single long word may exceed the limit";
      }
      tokens.insert(tokens.end(), t.begin(), t.end());
      joined += c;
    }
    EXPECT_EQ(joined, text);
    EXPECT_EQ(tokens, mock_tokenize(text)) << limit;
  }
  EXPECT_EQ(detail::chunk_on_whitespace("abcdefgh ij", 3), (std::vector<std::string_view>{"abcdefgh", " ij"}));
  EXPECT_EQ(detail::chunk_on_whitespace("     ab cd", 3), (std::vector<std::string_view>{"     ab", " cd"}));
}

TEST(Tfidf, HandComputedExamples) {
  const auto m = tfidf_fit({"a b", "a c"});
  EXPECT_EQ(m.doc_count, 2u);
  EXPECT_DOUBLE_EQ(m.idf[m.vocabulary.at("a")], 1.0);
  EXPECT_NEAR(m.idf[m.vocabulary.at("b")], std::log(1.5) + 1.0, 1e-15);
  const auto single = tfidf_fit({"x y z"});
  for (double v : single.idf) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_THROW(tfidf_fit({}), InvalidArgument);

  const auto v = tfidf_vector(m, "a a b");
  const double wa = 2.0, wb = std::log(1.5) + 1.0, norm = std::sqrt(wa * wa + wb * wb);
  EXPECT_NEAR(v.get(m.vocabulary.at("a")), wa / norm, 1e-15);
  EXPECT_NEAR(v.get(m.vocabulary.at("b")), wb / norm, 1e-15);
  EXPECT_EQ(v.entries().size(), 2u);
  EXPECT_TRUE(tfidf_vector(m, "zzz qqq").empty());
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-9);
}

TEST(Tfidf, MatchesOracleOnRandomCorpora) {
  std::mt19937 rng(10);
  for (int t = 0; t < 200; ++t) {
    const auto docs = aqag::testing::random_corpus(rng, 8, 12);
    const auto model = tfidf_fit(docs);
    const aqag::testing::OracleTfidf oracle(docs);
    ASSERT_EQ(model.vocabulary.size(), oracle.idf.size());
    for (const auto& [term, idf] : oracle.idf) EXPECT_NEAR(model.idf[model.vocabulary.at(term)], idf, 1e-9);
    for (const auto& a : docs)
      for (const auto& b : docs) {
        const auto va = tfidf_vector(model, a);
        const auto oa = oracle.vector(a);
        for (const auto& [term, w] : oa) EXPECT_NEAR(va.get(model.vocabulary.at(term)), w, 1e-9);
        EXPECT_EQ(va.entries().size(), oa.size());
        EXPECT_NEAR(cosine_similarity(va, tfidf_vector(model, b)), oracle.cosine(oa, oracle.vector(b)), 1e-9);
      }
  }
}

TEST(Cosine, Examples) {
  WeightedVector x({{1, 1.0}});
  WeightedVector xy({{1, 1.0}, {2, 1.0}});
  WeightedVector z({{3, 2.0}});
  EXPECT_NEAR(cosine_similarity(x, xy), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(cosine_similarity(x, z), 0.0);
  EXPECT_EQ(cosine_similarity(x, WeightedVector{}), 0.0);
  EXPECT_NEAR(cosine_similarity(xy, xy), 1.0, 1e-15);
  const std::vector<double> a{1, 2}, b{1, 2, 3};
  EXPECT_THROW(cosine_similarity(std::span<const double>(a), std::span<const double>(b)), InvalidArgument);
}

TEST(Cosine, SymmetricScaleInvariantBounded) {
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (int t = 0; t < 500; ++t) {
    WeightedVector a, b;
    for (int i = 0; i < 6; ++i) {
      if (rng() % 2) a.set(rng() % 8, d(rng));
      if (rng() % 2) b.set(rng() % 8, d(rng));
    }
    const double c = cosine_similarity(a, b);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, cosine_similarity(b, a), 1e-12);
    EXPECT_NEAR(c, cosine_similarity(a.scaled(3.5), b), 1e-12);
  }
}

TEST(WeightedVectorTest, NoExplicitZeros) {
  WeightedVector v;
  v.set(1, 0.0);
  EXPECT_TRUE(v.empty());
  v.set(1, 2.0);
  v.set(1, 0.0);
  EXPECT_TRUE(v.empty());
  EXPECT_THROW(v.set(2, NAN), InvalidArgument);
}

TEST(Relevance, IdentityAndDisjoint) {
  const std::string article = "The river flows past the old mill.";
  const auto bg = tfidf_fit({article, "Which mill is old?", "Who sings?"});
  EXPECT_NEAR(relevance_score(article, article, bg), 1.0, 1e-12);
  EXPECT_EQ(relevance_score(article, "Who sings?", bg), 0.0);
  const double r = relevance_score(article, "Which mill is old?", bg);
  EXPECT_GT(r, 0.0);
  EXPECT_LT(r, 1.0);
}

TEST(WordVectorsTest, ParseAndEmbed) {
  const auto wv = WordVectors::load(fixture("toy_vectors.txt"));
  EXPECT_EQ(wv.dimension(), 3u);
  EXPECT_EQ(wv.size(), 6u);
  const auto e = wv.embed("Paris city unknownword");
  ASSERT_TRUE(e);
  EXPECT_EQ(*e, (std::vector<double>{0.75, 0.25, 0.0}));
  EXPECT_FALSE(wv.embed("nothing here"));
  EXPECT_THROW(WordVectors::parse("a 1 2\nb 1\n"), FormatError);
  EXPECT_THROW(WordVectors::parse("a 1 x\n"), FormatError);
}

TEST(OptionSimilarityTest, MeanThenCosineOracle) {
  const auto wv = WordVectors::load(fixture("toy_vectors.txt"));
  // Three-word options over the toy table.
  const auto item = item_with({"paris rome city", "oslo lima capital", "rome city oslo", "paris rome city"}, Label::A);
  const auto sim = option_similarity(item, wv.embedder());
  auto mean = [](std::vector<std::vector<double>> vs) {
    std::vector<double> m(3, 0.0);
    for (const auto& v : vs)
      for (int i = 0; i < 3; ++i) m[i] += v[i] / static_cast<double>(vs.size());
    return m;
  };
  auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (int i = 0; i < 3; ++i) {
      d += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
  };
  const std::vector<double> paris{1, 0, 0}, rome{0.8, 0.6, 0}, oslo{0, 1, 0}, lima{0, 0, 1}, city{0.5, 0.5, 0},
      capital{0, 0.5, 0.5};
  const auto a = mean({paris, rome, city}), b = mean({oslo, lima, capital}), c = mean({rome, city, oslo});
  EXPECT_NEAR(sim.scores.at(Label::A), 1.0, 1e-6);
  EXPECT_LE(sim.scores.at(Label::A), 1.0);
  EXPECT_NEAR(sim.scores.at(Label::B), cos(b, a), 1e-12);
  EXPECT_NEAR(sim.scores.at(Label::C), cos(c, a), 1e-12);
  EXPECT_NEAR(sim.scores.at(Label::D), 1.0, 1e-6);
  EXPECT_TRUE(sim.unembeddable.empty());
}

TEST(OptionSimilarityTest, OovOptionsAreFlagged) {
  const auto wv = WordVectors::load(fixture("toy_vectors.txt"));
  const auto item = item_with({"paris", "zzz", "oslo", "lima"}, Label::A);
  const auto sim = option_similarity(item, wv.embedder());
  EXPECT_EQ(sim.scores.at(Label::B), 0.0);
  EXPECT_EQ(sim.unembeddable, std::vector<Label>{Label::B});
  auto incomplete = item;
  incomplete.options.erase(Label::D);
  incomplete.complete = false;
  EXPECT_THROW(option_similarity(incomplete, wv.embedder()), InvalidArgument);
}

TEST(Distribution, Examples) {
  const std::vector<Label> all_a(7, Label::A);
  const auto r = distribution_report(std::span<const Label>(all_a));
  EXPECT_EQ(r.fractions.at(Label::A), 1.0);
  EXPECT_EQ(r.fractions.at(Label::D), 0.0);
  EXPECT_EQ(r.max_abs_deviation, 0.75);
  std::vector<Label> balanced;
  for (int k = 0; k < 5; ++k) balanced.insert(balanced.end(), kLabels.begin(), kLabels.end());
  EXPECT_EQ(distribution_report(std::span<const Label>(balanced)).max_abs_deviation, 0.0);
  EXPECT_THROW(distribution_report(std::span<const Label>()), InvalidArgument);
}

TEST(Distribution, FractionsSumToOne) {
  std::mt19937 rng(13);
  for (int t = 0; t < 200; ++t) {
    std::vector<Label> ls(1 + rng() % 50);
    for (auto& l : ls) l = kLabels[rng() % 4];
    const auto r = distribution_report(std::span<const Label>(ls));
    double s = 0;
    for (const auto& [l, f] : r.fractions) s += f;
    EXPECT_NEAR(s, 1.0, 1e-9);
    std::array<std::size_t, 4> counts{};
    for (auto l : ls) ++counts[index_of(l)];
    const bool balanced = counts[0] == counts[1] && counts[1] == counts[2] && counts[2] == counts[3];
    EXPECT_EQ(r.max_abs_deviation == 0.0, balanced);
  }
}

TEST(Quantization, MemorySaved) {
  EXPECT_EQ(memory_saved({4, 32}), 87.5);
  EXPECT_EQ(memory_saved({8, 32}), 75.0);
  EXPECT_EQ(memory_saved({16, 32}), 50.0);
  EXPECT_EQ(memory_saved({32, 32}), 0.0);
  EXPECT_THROW(memory_saved({5, 32}), InvalidArgument);
  EXPECT_THROW(memory_saved({16, 8}), InvalidArgument);
  EXPECT_GT(memory_saved({4, 32}), memory_saved({8, 32}));
  EXPECT_GT(memory_saved({8, 32}), memory_saved({16, 32}));
}

TEST(Loss, Examples) {
  auto log = [](std::vector<double> losses) {
    LossLog l;
    for (std::size_t i = 0; i < losses.size(); ++i) l.push_back({static_cast<long long>(i + 1), losses[i]});
    return l;
  };
  EXPECT_TRUE(loss_summary(log({4, 3, 2, 1}), 1).decreased);
  EXPECT_FALSE(loss_summary(log({2, 2, 2}), 2).decreased);
  const auto s = loss_summary(log({3.0, 3.4, 2.8, 3.1, 2.5, 2.6}), 3);
  ASSERT_EQ(s.smoothed.size(), 4u);
  EXPECT_NEAR(s.smoothed[0].loss, (3.0 + 3.4 + 2.8) / 3, 1e-12);
  EXPECT_NEAR(s.smoothed[1].loss, (3.4 + 2.8 + 3.1) / 3, 1e-12);
  EXPECT_NEAR(s.smoothed[2].loss, (2.8 + 3.1 + 2.5) / 3, 1e-12);
  EXPECT_NEAR(s.smoothed[3].loss, (3.1 + 2.5 + 2.6) / 3, 1e-12);
  EXPECT_EQ(s.smoothed[0].step, 3);
  EXPECT_TRUE(s.decreased);
  EXPECT_THROW(loss_summary(log({1, 2}), 3), InvalidArgument);
  EXPECT_THROW(loss_summary({{2, 1.0}, {1, 0.5}}, 1), InvalidArgument);
}

TEST(Loss, CsvFixture) {
  const auto l = parse_loss_csv(aqag::testing::slurp(fixture("loss.csv")));
  ASSERT_EQ(l.size(), 7u);
  EXPECT_EQ(l[6].step, 175);
  EXPECT_TRUE(loss_summary(l, 3).decreased);
  EXPECT_THROW(parse_loss_csv("step,loss\n1,abc\n"), FormatError);
  EXPECT_THROW(parse_loss_csv("a,b\n"), FormatError);
}
