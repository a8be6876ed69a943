#include <gtest/gtest.h>

#include <random>

#include "dgen/error.hpp"
#include "dgen/ranking.hpp"
#include "helpers.hpp"
#include "rankers.hpp"

using namespace dgen;
using namespace dgen::testing;

namespace {

Mcq with_selection(const std::string& id, std::array<double, 3> fractions) {
  Mcq q = make_mcq(id, "Stem " + id, "k" + id, {"x" + id, "y" + id, "z" + id});
  q.selection = SelectionDistribution{0.5, fractions};
  return q;
}

PreferenceItem item(OptionalTriple gen, std::array<std::string, 3> human) {
  return {RankContext{"m", "stem", "key", std::nullopt}, gen, human};
}

}  // namespace

TEST(Pairs, CountsFollowTies) {
  std::vector<Mcq> corpus{with_selection("a", {0.3, 0.2, 0.1})};
  auto d = build_pair_dataset(corpus);
  ASSERT_EQ(d.pairs.size(), 6u);
  EXPECT_EQ(d.pairs[0], (PreferencePair{"a", "xa", "ya", 1, d.pairs[0].margin}));
  EXPECT_NEAR(d.pairs[0].margin, 0.1, 1e-12);
  EXPECT_EQ(d.pairs[1].d1, "ya");
  EXPECT_EQ(d.pairs[1].label, 2);

  corpus = {with_selection("b", {0.2, 0.2, 0.1})};
  d = build_pair_dataset(corpus);
  EXPECT_EQ(d.pairs.size(), 4u);
  EXPECT_EQ(d.skipped_ties, 1u);

  corpus.clear();
  for (int i = 0; i < 100; ++i) corpus.push_back(with_selection(std::to_string(i), {0.1, 0.2, 0.3}));
  Mcq none = make_mcq("n", "s", "k", {"a", "b", "c"});
  corpus.push_back(none);
  d = build_pair_dataset(corpus);
  EXPECT_EQ(d.pairs.size(), 600u);
  EXPECT_EQ(d.skipped_no_selection, 1u);
}

TEST(Pairs, JsonRoundTripAndValidation) {
  PreferencePair p{"q", "a", "b", 2, 0.25};
  EXPECT_EQ(preference_pair_from_json(to_json(p)), p);
  auto bad = to_json(p);
  bad["label"] = 3;
  EXPECT_THROW(preference_pair_from_json(bad), DataError);
  EXPECT_THROW(preference_pair_from_json(nlohmann::json{{"mcq_id", "q"}}), DataError);
}

TEST(RankerAccuracy, SelectionEchoIsPerfectConstantIsHalf) {
  std::vector<Mcq> corpus;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  for (int i = 0; i < 40; ++i) corpus.push_back(with_selection(std::to_string(i), {u(rng), u(rng), u(rng)}));
  auto d = build_pair_dataset(corpus);
  SelectionRanker echo(corpus);
  auto a = ranker_accuracy(d.pairs, corpus, echo);
  EXPECT_EQ(a.evaluated, d.pairs.size());
  EXPECT_DOUBLE_EQ(a.accuracy, 1.0);
  ConstantRanker first(Preferred::First);
  EXPECT_DOUBLE_EQ(ranker_accuracy(d.pairs, corpus, first).accuracy, 0.5);

  auto filtered = ranker_accuracy(d.pairs, corpus, echo, 0.1);
  std::size_t expected = 0;
  for (const auto& p : d.pairs) expected += p.margin > 0.1;
  EXPECT_EQ(filtered.evaluated, expected);
  EXPECT_THROW(ranker_accuracy(d.pairs, corpus, echo, 1.0), DataError);
}

TEST(PreferenceScore, HandEnumeratedInstance) {
  LexRanker lex;
  std::vector<PreferenceItem> items{item({std::string("b"), std::string("d"), std::nullopt}, {"a", "b", "c"})};
  auto r = preference_score(items, lex);
  EXPECT_NEAR(r.score, 3.0 / 18.0, 1e-12);
  EXPECT_EQ(r.ties, 2u);
  EXPECT_EQ(r.null_terms, 6u);
  EXPECT_EQ(r.ranker_terms, 10u);
}

TEST(PreferenceScore, Laws) {
  LexRanker lex;
  ConstantRanker first(Preferred::First), second(Preferred::Second);
  RandomRanker random(9);
  std::array<std::string, 3> human{"p", "q", "r"};
  std::vector<PreferenceItem> same{item({human[0], human[1], human[2]}, human)};
  for (Ranker* r : std::initializer_list<Ranker*>{&lex, &first, &second, &random}) {
    EXPECT_DOUBLE_EQ(preference_score(same, *r).score, 0.5);
  }
  std::vector<PreferenceItem> nulls{item({std::nullopt, std::nullopt, std::nullopt}, human)};
  EXPECT_DOUBLE_EQ(preference_score(nulls, lex).score, 0.0);
  // every generated option beats every human one
  std::vector<PreferenceItem> better{item({std::string("a"), std::string("b"), std::string("c")}, human)};
  EXPECT_DOUBLE_EQ(preference_score(better, lex).score, 1.0);
  std::vector<PreferenceItem> empty;
  EXPECT_THROW(preference_score(empty, lex), DataError);
}

TEST(PreferenceScore, SwappingSidesComplementsForAntisymmetricRankers) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 300; ++trial) {
    CoinRanker coin(rng());
    std::array<std::string, 3> g, h;
    for (int i = 0; i < 3; ++i) g[i] = alphabet[rng() % alphabet.size()], h[i] = alphabet[rng() % alphabet.size()];
    std::vector<PreferenceItem> forward{item({g[0], g[1], g[2]}, h)};
    std::vector<PreferenceItem> backward{item({h[0], h[1], h[2]}, g)};
    EXPECT_NEAR(preference_score(forward, coin).score + preference_score(backward, coin).score, 1.0, 1e-12);
  }
}

TEST(PreferenceScore, ParallelMatchesSerial) {
  std::mt19937_64 rng(3);
  std::vector<PreferenceItem> items;
  for (int i = 0; i < 50; ++i) {
    items.push_back(item({std::to_string(rng() % 9), std::to_string(rng() % 9), std::nullopt},
                         {std::to_string(rng() % 9), "x", "y"}));
    items.back().context.mcq_id = std::to_string(i);
  }
  RandomRanker random(5);
  auto serial = preference_score(items, random, 1);
  auto parallel = preference_score(items, random, 4);
  EXPECT_EQ(to_json(serial).dump(), to_json(parallel).dump());
}

TEST(CachingRanker, ForwardsEachTripleOnce) {
  LexRanker lex;
  CachingRanker cache(lex);
  RankContext ctx{"m", "s", "k", std::nullopt};
  EXPECT_EQ(cache.prefer(ctx, "a", "b"), Preferred::First);
  EXPECT_EQ(cache.prefer(ctx, "a", "b"), Preferred::First);
  EXPECT_EQ(cache.prefer(ctx, "b", "a"), Preferred::Second);
  EXPECT_EQ(cache.calls_forwarded(), 2u);
}

TEST(ParsePreferred, Variants) {
  EXPECT_EQ(parse_preferred("Preferred Answer: A"), Preferred::First);
  EXPECT_EQ(parse_preferred("preferred answer: **B**"), Preferred::Second);
  EXPECT_EQ(parse_preferred("Preferred answer (B)"), Preferred::Second);
  EXPECT_EQ(parse_preferred("B"), Preferred::Second);
  EXPECT_EQ(parse_preferred("I cannot tell."), std::nullopt);
}

TEST(RankerExport, RoundTripsPairs) {
  std::vector<Mcq> corpus{with_selection("a", {0.3, 0.2, 0.1})};
  corpus[0].distractors[0].text = "Option B: tricky";
  auto d = build_pair_dataset(corpus);
  auto templates = TemplateSet::builtin();
  auto records = export_ranker_training(d.pairs, corpus, templates);
  ASSERT_EQ(records.size(), d.pairs.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto back = parse_ranker_record(records[i]);
    ASSERT_TRUE(back);
    EXPECT_EQ(back->option_a, d.pairs[i].d1);
    EXPECT_EQ(back->option_b, d.pairs[i].d2);
    EXPECT_EQ(back->label, d.pairs[i].label);
  }
}

TEST(LlmRanker, ReadsVerdictAndCountsUnparseable) {
  TempDir dir;
  class Reply : public ChatBackend {
   public:
    std::vector<std::string> send(const ChatRequest& r) override {
      const auto& u = r.messages.back().content;
      if (u.find("Option A: good") != std::string::npos) return {"Preferred Answer: A"};
      return {"hmm"};
    }
  };
  LlmClient client(std::make_shared<ResponseCache>(dir / "c"), std::make_shared<Reply>());
  auto templates = TemplateSet::builtin();
  LlmRanker ranker(client, templates, "ft:ranker");
  RankContext ctx{"m", "Stem", "Key", std::string("Why")};
  EXPECT_EQ(ranker.prefer(ctx, "good", "bad"), Preferred::First);
  EXPECT_EQ(ranker.prefer(ctx, "bad", "good"), Preferred::Second);
  EXPECT_EQ(ranker.unparseable(), 1u);
}
