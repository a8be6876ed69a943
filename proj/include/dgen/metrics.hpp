#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgen/corpus.hpp"
#include "dgen/llm.hpp"
#include "dgen/promptkit.hpp"

namespace dgen {

using OptionalTriple = std::array<std::optional<std::string>, 3>;

struct MatchReport {
  std::string mcq_id;
  std::string approach;
  std::vector<std::pair<int, int>> matched_pairs;  // (candidate, human)
  int exact = 0;
  int partial = 0;
  double proportional = 0.0;
  int null_slots = 0;
};

// Greedy injective exact-match alignment after normalization. The
// denominator of the proportional score is always 3; null slots never match.
MatchReport match_distractors(const std::array<std::string, 3>& human,
                              const OptionalTriple& generated);

struct MetricSummary {
  std::string approach;
  std::size_t count = 0;
  double exact = 0.0;         // percent, 2 decimals
  double partial = 0.0;
  double proportional = 0.0;
};

MetricSummary aggregate(std::span<const MatchReport> reports);

nlohmann::json to_json(const MatchReport& report);
nlohmann::json to_json(const MetricSummary& summary);

// "Approach | Exact | Partial | Proportional" table, one row per summary.
std::string render_metric_table(std::span<const MetricSummary> summaries);

double round2(double value);

// First standalone capital A-D in a reply.
std::optional<int> parse_option_letter(std::string_view reply);

struct SolveItem {
  const Mcq* mcq = nullptr;
  std::array<std::string, 3> distractors;
};

struct SolveRateReport {
  std::string source;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t excluded = 0;      // generated triples with null slots
  std::size_t unparseable = 0;
  double rate = 0.0;
  std::vector<std::string> excluded_ids;
  std::vector<std::string> unparseable_ids;
};

// Options are the key plus three distractors, shuffled per MCQ from
// (seed, mcq id); the solver replies with a letter.
SolveRateReport solve_rate(std::span<const SolveItem> items, LlmClient& client,
                           const TemplateSet& templates, const std::string& solver_model,
                           std::uint64_t seed, std::string source_label,
                           std::size_t excluded = 0, std::size_t workers = 1);

// Shuffled option list and the index of the key within it.
std::pair<std::array<std::string, 4>, int> shuffled_options(const SolveItem& item,
                                                            std::uint64_t seed);

nlohmann::json to_json(const SolveRateReport& report);

}  // namespace dgen
