#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgen/corpus.hpp"
#include "dgen/llm.hpp"
#include "dgen/metrics.hpp"
#include "dgen/promptkit.hpp"

namespace dgen {

struct PreferencePair {
  std::string mcq_id;
  std::string d1;
  std::string d2;
  int label = 1;  // 1 if d1 was chosen by more students, else 2
  double margin = 0.0;

  bool operator==(const PreferencePair&) const = default;
};

struct PairDataset {
  std::vector<PreferencePair> pairs;
  std::size_t skipped_no_selection = 0;
  std::size_t skipped_ties = 0;  // unordered pairs dropped for equal fractions
};

// Every unordered pair of human distractors, in both orders.
PairDataset build_pair_dataset(std::span<const Mcq> corpus);

nlohmann::json to_json(const PreferencePair& pair);
PreferencePair preference_pair_from_json(const nlohmann::json& j);

enum class Preferred { First, Second };

struct RankContext {
  std::string mcq_id;
  std::string stem;
  std::string key;
  std::optional<std::string> explanation;

  static RankContext of(const Mcq& mcq);
};

class Ranker {
 public:
  virtual ~Ranker() = default;
  virtual Preferred prefer(const RankContext& context, const std::string& first,
                           const std::string& second) = 0;
};

class ConstantRanker : public Ranker {
 public:
  explicit ConstantRanker(Preferred verdict) : verdict_(verdict) {}
  Preferred prefer(const RankContext&, const std::string&, const std::string&) override {
    return verdict_;
  }

 private:
  Preferred verdict_;
};

// Verdict depends only on (seed, mcq id, first, second).
class RandomRanker : public Ranker {
 public:
  explicit RandomRanker(std::uint64_t seed) : seed_(seed) {}
  Preferred prefer(const RankContext& context, const std::string& first,
                   const std::string& second) override;

 private:
  std::uint64_t seed_;
};

// Looks up the recorded selection fraction of each option; unknown texts
// count as never selected, and exact ties go to the first option.
class SelectionRanker : public Ranker {
 public:
  explicit SelectionRanker(std::span<const Mcq> corpus);
  Preferred prefer(const RankContext& context, const std::string& first,
                   const std::string& second) override;

 private:
  std::map<std::string, std::map<std::string, double>> fractions_;
};

// Renders the ranking prompt and reads "Preferred Answer: A|B" from a
// (fine-tuned) chat model. Unreadable replies count as Second.
class LlmRanker : public Ranker {
 public:
  LlmRanker(LlmClient& client, const TemplateSet& templates, std::string model);
  Preferred prefer(const RankContext& context, const std::string& first,
                   const std::string& second) override;
  std::size_t unparseable() const;

 private:
  LlmClient& client_;
  const TemplateSet& templates_;
  std::string model_;
  mutable std::mutex mu_;
  std::size_t unparseable_ = 0;
};

// Memoises verdicts by (mcq id, first, second).
class CachingRanker : public Ranker {
 public:
  explicit CachingRanker(Ranker& inner) : inner_(inner) {}
  Preferred prefer(const RankContext& context, const std::string& first,
                   const std::string& second) override;
  std::size_t calls_forwarded() const { return forwarded_; }

 private:
  Ranker& inner_;
  std::mutex mu_;
  std::map<std::tuple<std::string, std::string, std::string>, Preferred> verdicts_;
  std::size_t forwarded_ = 0;
};

std::optional<Preferred> parse_preferred(std::string_view reply);

struct RankerAccuracy {
  std::size_t evaluated = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

// Throws DataError when no pair survives the margin filter (margin > threshold).
RankerAccuracy ranker_accuracy(std::span<const PreferencePair> pairs, std::span<const Mcq> corpus,
                               Ranker& ranker, std::optional<double> margin_threshold = std::nullopt);

struct PreferenceItem {
  RankContext context;
  OptionalTriple generated;
  std::array<std::string, 3> human;
};

struct PreferenceScoreReport {
  double score = 0.0;
  std::vector<std::pair<std::string, double>> per_mcq;  // mean over 18 terms
  std::size_t ties = 0;
  std::size_t null_terms = 0;
  std::size_t ranker_terms = 0;
};

// s = 1/(18N) sum_i sum_{a,b} [ r(gen_a, hum_b) + 1 - r(hum_b, gen_a) ].
PreferenceScoreReport preference_score(std::span<const PreferenceItem> items, Ranker& ranker,
                                       std::size_t workers = 1);

nlohmann::json to_json(const PreferenceScoreReport& report);

// Chat fine-tuning records: user = ranking prompt, assistant = "Preferred Answer: A|B".
std::vector<nlohmann::json> export_ranker_training(std::span<const PreferencePair> pairs,
                                                   std::span<const Mcq> corpus,
                                                   const TemplateSet& templates);

struct RankerRecordContent {
  std::string option_a;
  std::string option_b;
  int label = 1;
};

// Inverse of one export_ranker_training record.
std::optional<RankerRecordContent> parse_ranker_record(const nlohmann::json& record);

}  // namespace dgen
