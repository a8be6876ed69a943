#include <gtest/gtest.h>

#include <random>

#include "dgen/error.hpp"
#include "dgen/generation.hpp"
#include "dgen/io.hpp"
#include "helpers.hpp"

using namespace dgen;
using dgen::testing::make_mcq;
using dgen::testing::TempDir;

namespace {

std::optional<std::string> s(const char* v) { return std::string(v); }

class ScriptedBackend : public ChatBackend {
 public:
  std::function<std::string(const ChatRequest&, int)> reply;
  std::vector<ChatRequest> seen;
  std::vector<std::string> send(const ChatRequest& r) override {
    seen.push_back(r);
    std::vector<std::string> out;
    for (int i = 0; i < r.config.n_samples; ++i) out.push_back(reply(r, i));
    return out;
  }
};

const char* kTemplated =
    "Distractor1 Feedback: You added.\n"
    "Distractor1: 15\n"
    "Distractor2 Feedback: You wrote digits side by side.\n"
    "Distractor2: 78\n"
    "Distractor3 Feedback: You stopped early.\n"
    "Distractor3: 54\n";

}  // namespace

TEST(Parser, FullyTemplatedOutput) {
  auto p = parse_distractor_output(kTemplated);
  EXPECT_EQ(p.candidates[0].text, s("15"));
  EXPECT_EQ(p.candidates[0].feedback, s("You added."));
  EXPECT_EQ(p.candidates[2].text, s("54"));
  EXPECT_EQ(p.candidates[2].feedback, s("You stopped early."));
}

TEST(Parser, ToleratesProseReorderingAndFormatting) {
  auto p = parse_distractor_output(
      "Sure! Here are the incorrect answers.\n\n"
      "**Distractor1:** 15\n"
      "**Distractor1 Feedback:** You added.\n"
      "- distractor 2 feedback : Digits side by side.\n"
      "- DISTRACTOR 2: 78\n"
      "Distractor3 Feedback: Stopped\nearly.\n"
      "Distractor3:\n"
      "54\n"
      "I hope this helps.");
  EXPECT_EQ(p.candidates[0].text, s("15"));
  EXPECT_EQ(p.candidates[0].feedback, s("You added."));
  EXPECT_EQ(p.candidates[1].text, s("78"));
  EXPECT_EQ(p.candidates[1].feedback, s("Digits side by side."));
  EXPECT_EQ(p.candidates[2].feedback, s("Stopped\nearly."));  // continuation lines kept
  EXPECT_EQ(p.candidates[2].text, s("54"));
}

TEST(Parser, MissingPairIsNullAndStopEndsOutput) {
  auto p = parse_distractor_output("Distractor1: a\nDistractor2: b\n[stop]\nDistractor3: c\n");
  EXPECT_EQ(p.candidates[0].text, s("a"));
  EXPECT_EQ(p.candidates[1].text, s("b"));
  EXPECT_TRUE(p.candidates[2].is_null());
  EXPECT_FALSE(p.report.empty());
}

TEST(Parser, FirstOccurrenceWins) {
  auto p = parse_distractor_output("Distractor1: a\nDistractor1: z\n");
  EXPECT_EQ(p.candidates[0].text, s("a"));
}

TEST(Parser, NeverThrowsOnNoise) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "Distractor123 Feedback:*#-\n\t[stop]xyz\xC3\xA9";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    std::size_t len = rng() % 200;
    for (std::size_t i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
    EXPECT_NO_THROW(parse_distractor_output(text));
  }
}

TEST(Parser, InvertsRenderedBlocks) {
  auto templates = TemplateSet::builtin();
  std::mt19937_64 rng(8);
  const std::vector<std::string> words{"x", "\\( \\frac{1}{2} \\)", "3.5", "-7", "two words", "a:b", "(c)", "50%"};
  for (int trial = 0; trial < 100; ++trial) {
    std::array<DistractorEntry, 3> entries;
    for (auto& e : entries) {
      e.text = words[rng() % words.size()] + " " + std::to_string(rng() % 1000);
      e.feedback = "Because " + words[rng() % words.size()] + ".";
    }
    for (auto mode : {PromptContentMode::All, PromptContentMode::Key}) {
      auto parsed = parse_distractor_output(templates.render_distractor_block(entries, mode));
      for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(parsed.candidates[i].text, entries[i].text);
        EXPECT_EQ(parsed.candidates[i].feedback,
                  mode == PromptContentMode::All ? entries[i].feedback : std::nullopt);
      }
    }
  }
}

TEST(Finalize, DuplicatesKeyAndEmptyBecomeNull) {
  CandidateTriple c{DistractorCandidate{s("f1"), s("7")}, DistractorCandidate{std::nullopt, s(" 7 ")},
                    DistractorCandidate{std::nullopt, s("X")}};
  auto f = finalize_candidates(c, "x");
  EXPECT_EQ(f[0].text, s("7"));
  EXPECT_TRUE(f[1].is_null());
  EXPECT_TRUE(f[2].is_null());
  CandidateTriple e{DistractorCandidate{std::nullopt, s("  ")}, {}, {}};
  EXPECT_TRUE(finalize_candidates(e, "k")[0].is_null());
}

TEST(SampledAnswers, NullLawAndDistinctOrder) {
  std::vector<std::string> all_key(20, "Answer: 5");
  for (const auto& c : candidates_from_samples(all_key, "5")) EXPECT_TRUE(c.is_null());
  std::vector<std::string> mixed{"5", "6", "Answer: 6", "7", "5", "8", "9"};
  auto c = candidates_from_samples(mixed, "5");
  EXPECT_EQ(c[0].text, s("6"));
  EXPECT_EQ(c[1].text, s("7"));
  EXPECT_EQ(c[2].text, s("8"));
  EXPECT_EQ(clean_sampled_answer("  Answer:  12 "), "12");
}

TEST(ErrorPool, LoadAndTopicFallback) {
  TempDir dir;
  write_file_atomic(dir / "pool.tsv", "# comment\nFine A\te1\nMiddle\te2\n\nMiddle\te3\n");
  auto pool = load_error_pool(dir / "pool.tsv");
  ASSERT_EQ(pool.size(), 3u);
  Mcq a = make_mcq("a", "s", "k", {"x", "y", "z"}, {"Coarse", "Middle", "fine a"});
  EXPECT_EQ(errors_for_topic(a, pool).size(), 1u);
  Mcq b = make_mcq("b", "s", "k", {"x", "y", "z"}, {"Coarse", "Middle", "Other"});
  EXPECT_EQ(errors_for_topic(b, pool).size(), 2u);
  Mcq c = make_mcq("c", "s", "k", {"x", "y", "z"}, {"None", "None", "None"});
  EXPECT_TRUE(errors_for_topic(c, pool).empty());
  write_file_atomic(dir / "bad.tsv", "no tab here\n");
  EXPECT_THROW(load_error_pool(dir / "bad.tsv"), DataError);
}

TEST(GenerationConfig, HashTracksRelevantFieldsOnly) {
  auto cot = default_config(Approach::Cot);
  auto cot_k = cot;
  cot_k.k = 7;  // irrelevant for CoT
  EXPECT_EQ(cot.hash(), cot_k.hash());
  auto cot_mode = cot;
  cot_mode.prompt_mode = PromptContentMode::None;
  EXPECT_NE(cot.hash(), cot_mode.hash());
  auto knn = default_config(Approach::Knn);
  auto knn_k = knn;
  knn_k.k = 5;
  EXPECT_NE(knn.hash(), knn_k.hash());
  EXPECT_EQ(default_config(Approach::Sb).decoding.n_samples, 20);
  EXPECT_EQ(default_config(Approach::Knn).decoding.max_tokens, 350);
}

TEST(Generate, ApproachesEndToEndWithScriptedBackend) {
  TempDir dir;
  auto backend = std::make_shared<ScriptedBackend>();
  backend->reply = [](const ChatRequest& r, int i) {
    if (r.config.n_samples > 1) return std::string(i % 2 ? "4" : std::to_string(10 + i));
    return std::string(kTemplated);
  };
  LlmClient client(std::make_shared<ResponseCache>(dir / "c"), backend);
  auto templates = TemplateSet::builtin();
  std::vector<Mcq> pool{make_mcq("p1", "What is 6 x 4?", "24", {"10", "64", "20"}),
                        make_mcq("p2", "What is 9 x 3?", "27", {"12", "93", "24"})};
  Mcq target = make_mcq("t", "What is 7 x 8?", "56", {"54", "15", "78"});
  std::vector<ErrorExplanation> errors{{"Addition", "e1"}, {"Addition", "e2"}, {"Addition", "e3"},
                                       {"Addition", "e4"}};

  GenerationDeps deps;
  deps.llm = &client;
  deps.templates = &templates;
  deps.example_pool = pool;
  deps.error_pool = errors;

  auto knn = default_config(Approach::Knn);
  knn.example_selector = ExampleSelector::Random;
  knn.k = 2;
  auto r = generate(target, knn, deps);
  EXPECT_EQ(r.provenance.example_ids.size(), 2u);
  EXPECT_EQ(r.texts()[0], s("15"));
  EXPECT_EQ(r.candidates[2].text, s("54"));

  auto rb = default_config(Approach::Rb);
  rb.error_selector = ErrorSelector::Random;
  auto r1 = generate(target, rb, deps);
  auto r2 = generate(target, rb, deps);
  EXPECT_EQ(r1.provenance.errors.size(), 3u);
  EXPECT_EQ(r1.provenance.errors, r2.provenance.errors);

  auto sb = default_config(Approach::Sb);
  sb.model = "answer-model";
  auto rs = generate(target, sb, deps);
  EXPECT_EQ(rs.provenance.samples.size(), 20u);
  EXPECT_EQ(rs.texts()[0], s("10"));
  EXPECT_EQ(backend->seen.back().config.n_samples, 20);
  EXPECT_DOUBLE_EQ(backend->seen.back().config.temperature, 1.0);

  auto ft = default_config(Approach::Ft);
  EXPECT_THROW(generate(target, ft, deps), ConfigError);  // no model id
}

TEST(Generate, NoExamplesAfterFilteringMakesNoCall) {
  TempDir dir;
  auto backend = std::make_shared<ScriptedBackend>();
  backend->reply = [](const ChatRequest&, int) { return std::string(kTemplated); };
  LlmClient client(std::make_shared<ResponseCache>(dir / "c"), backend);
  auto templates = TemplateSet::builtin();
  std::vector<Mcq> pool{make_mcq("p1", "s", "k", {"a", "b", "c"}, {"A", "B", "Same"})};
  Mcq target = make_mcq("t", "s2", "k2", {"a", "b", "c"}, {"A", "B", "Same"});
  GenerationDeps deps;
  deps.llm = &client;
  deps.templates = &templates;
  deps.example_pool = pool;
  auto cfg = default_config(Approach::Knn);
  cfg.example_selector = ExampleSelector::Random;
  cfg.exclude_topic = TopicLevel::Fine;
  auto r = generate(target, cfg, deps);
  EXPECT_TRUE(backend->seen.empty());
  for (const auto& c : r.candidates) EXPECT_TRUE(c.is_null());
  EXPECT_EQ(r.provenance.flags, std::vector<std::string>{"no_examples_after_filtering"});
}

TEST(FtExport, AssistantTurnParsesBackToHumanDistractors) {
  std::vector<Mcq> train{make_mcq("a", "S1", "1", {"2", "3", "4"}), make_mcq("b", "S2", "5", {"6", "7", "8"})};
  auto templates = TemplateSet::builtin();
  auto records = export_ft_dataset(train, PromptContentMode::All, templates);
  ASSERT_EQ(records.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& msgs = records[i]["messages"];
    EXPECT_EQ(msgs[0]["content"], templates.render_ft_input(train[i], PromptContentMode::All).user);
    auto parsed = parse_distractor_output(msgs[1]["content"].get<std::string>());
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(parsed.candidates[j].text, train[i].distractors[j].text);
      EXPECT_EQ(parsed.candidates[j].feedback, train[i].distractors[j].feedback);
    }
  }
  auto sb = export_sb_dataset(train, templates);
  EXPECT_EQ(sb[1]["messages"][1]["content"], "5");
  std::vector<Mcq> empty;
  EXPECT_THROW(export_ft_dataset(empty, PromptContentMode::All, templates), DataError);
}

TEST(ResultsStore, AppendReopenAndRoundTrip) {
  TempDir dir;
  GenerationResult r;
  r.mcq_id = "q1";
  r.approach = Approach::Cot;
  r.config_hash = "h";
  r.candidates = {DistractorCandidate{s("f"), s("1")}, DistractorCandidate{}, DistractorCandidate{std::nullopt, s("3")}};
  r.raw_output = "raw";
  r.provenance.flags = {"x"};
  {
    ResultsStore store(dir / "r.jsonl");
    store.append(r);
    EXPECT_TRUE(store.contains("q1", Approach::Cot, "h"));
    EXPECT_FALSE(store.contains("q1", Approach::Cot, "other"));
  }
  ResultsStore reopened(dir / "r.jsonl");
  EXPECT_TRUE(reopened.contains("q1", Approach::Cot, "h"));
  auto all = load_results(dir / "r.jsonl");
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].candidates, r.candidates);
  EXPECT_EQ(to_json(all[0]).dump(), to_json(r).dump());
}
