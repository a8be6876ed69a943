#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgen/corpus.hpp"
#include "dgen/llm.hpp"
#include "dgen/promptkit.hpp"
#include "dgen/retrieval.hpp"

namespace dgen {

enum class Approach { Knn, Cot, Rb, Ft, Sb };

const char* to_string(Approach approach);
Approach parse_approach(std::string_view name);

struct DistractorCandidate {
  std::optional<std::string> feedback;
  std::optional<std::string> text;  // nullopt is a null slot

  bool is_null() const { return !text.has_value(); }
  bool operator==(const DistractorCandidate&) const = default;
};

using CandidateTriple = std::array<DistractorCandidate, 3>;

struct ParsedOutput {
  CandidateTriple candidates;
  std::vector<std::string> report;  // what was dropped or repaired
};

// Scans for "DistractorK Feedback:" / "DistractorK:" labels (K = 1..3).
// Never throws; anything missing becomes a null slot.
ParsedOutput parse_distractor_output(std::string_view raw);

// Duplicates (after the first) and key matches become null; order kept.
CandidateTriple finalize_candidates(const CandidateTriple& parsed, std::string_view key);

// Error-pool file: one "topic<TAB>explanation" per line; '#' comments.
std::vector<ErrorExplanation> load_error_pool(const std::filesystem::path& path);

// Entries tagged with the target's finest topic; falls back to coarser
// levels until something matches. Empty when no level matches.
std::vector<ErrorExplanation> errors_for_topic(const Mcq& target,
                                               std::span<const ErrorExplanation> pool);

enum class ExampleSelector { Knn, Random };
enum class ErrorSelector { Llm, Random };

struct GenerationConfig {
  Approach approach = Approach::Knn;
  std::string model;
  PromptContentMode prompt_mode = PromptContentMode::All;
  DecodingConfig decoding = DecodingConfig::greedy();
  std::optional<std::string> system_prompt;
  std::uint64_t seed = 0;

  // kNN
  std::size_t k = 3;
  ExampleSelector example_selector = ExampleSelector::Knn;
  EncodingMode encoding_mode = EncodingMode::StemKeyExplanation;
  std::optional<TopicLevel> exclude_topic;
  std::string embedding_provider;  // recorded for provenance

  // RB
  ErrorSelector error_selector = ErrorSelector::Llm;

  // Digest of everything else the prompts depend on (example pool, error
  // pool, templates); set by the caller so the hash changes with them.
  std::string inputs_digest;

  nlohmann::json to_json() const;
  std::string hash() const;
};

// Per-approach defaults: greedy decoding, except SB which samples 20
// answers at temperature 1.0.
GenerationConfig default_config(Approach approach);

struct Provenance {
  std::string prompt_key;
  std::string model;
  std::vector<std::string> example_ids;
  std::vector<double> similarities;
  std::vector<std::string> errors;
  std::vector<std::string> samples;
  std::vector<std::string> flags;
};

struct GenerationResult {
  std::string mcq_id;
  Approach approach = Approach::Knn;
  std::string config_hash;
  CandidateTriple candidates;
  std::string raw_output;
  Provenance provenance;

  std::array<std::optional<std::string>, 3> texts() const;
};

nlohmann::json to_json(const GenerationResult& result);
GenerationResult generation_result_from_json(const nlohmann::json& j);

// What each approach needs beyond the target. Missing pieces for the chosen
// approach raise ConfigError.
struct GenerationDeps {
  LlmClient* llm = nullptr;
  const TemplateSet* templates = nullptr;
  const ExampleIndex* index = nullptr;                      // Knn with knn selector
  std::function<EmbeddingVector(const Mcq&)> embed_target;  // Knn with knn selector
  std::span<const Mcq> example_pool;                        // Knn with random selector
  std::span<const ErrorExplanation> error_pool;             // Rb
};

GenerationResult generate(const Mcq& target, const GenerationConfig& config,
                          const GenerationDeps& deps);

// Trims a sampled answer and drops a leading "Answer:" label.
std::string clean_sampled_answer(std::string_view sample);

// Keeps answers different from the key; first distinct ones win.
CandidateTriple candidates_from_samples(std::span<const std::string> samples, std::string_view key);

// Chat fine-tuning records: user = target block, assistant = labelled
// distractors. Feedback is included when mode is All.
std::vector<nlohmann::json> export_ft_dataset(std::span<const Mcq> train, PromptContentMode mode,
                                              const TemplateSet& templates);
// Answer-model records for the sampling approach: user = question, assistant = key.
std::vector<nlohmann::json> export_sb_dataset(std::span<const Mcq> train,
                                              const TemplateSet& templates);

// Append-only results file keyed by (mcq id, approach, config hash).
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path path);

  bool contains(const std::string& mcq_id, Approach approach, const std::string& config_hash) const;
  void append(const GenerationResult& result);
  std::vector<GenerationResult> all() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::vector<GenerationResult> records_;
  std::set<std::tuple<std::string, Approach, std::string>> keys_;
};

std::vector<GenerationResult> load_results(const std::filesystem::path& path);

}  // namespace dgen
