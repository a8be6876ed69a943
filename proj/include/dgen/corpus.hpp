#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dgen {

struct DistractorEntry {
  std::string text;
  std::optional<std::string> feedback;

  bool operator==(const DistractorEntry&) const = default;
};

// Fraction of students choosing each option. Fractions need not sum to one;
// non-responses are allowed.
struct SelectionDistribution {
  double key = 0.0;
  std::array<double, 3> distractors{};

  bool operator==(const SelectionDistribution&) const = default;
};

// Topic granularity, coarse to fine.
enum class TopicLevel { Coarse = 1, Middle = 2, Fine = 3 };

struct Mcq {
  std::string id;
  std::string stem;
  std::string key;
  std::optional<std::string> key_explanation;
  std::array<DistractorEntry, 3> distractors;
  std::array<std::string, 3> topics;
  std::optional<SelectionDistribution> selection;
  std::optional<std::int64_t> n_responses;

  const std::string& topic(TopicLevel level) const {
    return topics[static_cast<int>(level) - 1];
  }
  std::array<std::string, 3> distractor_texts() const;

  bool operator==(const Mcq&) const = default;
};

// Throws DataError naming the MCQ and the violated rule.
void validate(const Mcq& mcq);

nlohmann::json to_json(const Mcq& mcq);
// Parses and validates one record.
Mcq mcq_from_json(const nlohmann::json& j);

std::vector<Mcq> load_corpus(const std::filesystem::path& path);
std::vector<Mcq> read_corpus(std::istream& in, const std::string& source_name = "<stream>");
void write_corpus(std::ostream& out, std::span<const Mcq> corpus);
void save_corpus(const std::filesystem::path& path, std::span<const Mcq> corpus);

// Digest of the canonical serialization; identifies corpus content in
// config hashes independently of file location.
std::string corpus_digest(std::span<const Mcq> corpus);

struct CorpusSplit {
  std::vector<Mcq> train;
  std::vector<Mcq> test;
  double ratio = 0.8;
  std::uint64_t seed = 0;
};

CorpusSplit split_corpus(std::span<const Mcq> corpus, double ratio, std::uint64_t seed);

// Split manifest: ids per side plus the seed.
struct SplitManifest {
  std::uint64_t seed = 0;
  double ratio = 0.8;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

SplitManifest manifest_of(const CorpusSplit& split);
void save_manifest(const std::filesystem::path& path, const SplitManifest& manifest);
SplitManifest load_manifest(const std::filesystem::path& path);
// Rebuilds the split from a manifest; every id must exist in the corpus.
CorpusSplit apply_manifest(std::span<const Mcq> corpus, const SplitManifest& manifest);

const Mcq* find_mcq(std::span<const Mcq> corpus, std::string_view id);

}  // namespace dgen
