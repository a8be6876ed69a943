#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgen/corpus.hpp"

namespace dgen {

// Which parts of an MCQ feed the text encoder.
enum class EncodingMode { StemOnly, StemKey, StemKeyExplanation };

const char* to_string(EncodingMode mode);
EncodingMode parse_encoding_mode(std::string_view name);

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

std::string encoding_text(const Mcq& mcq, EncodingMode mode = EncodingMode::StemKeyExplanation);

double l2_norm(const EmbeddingVector& v);

// dot(a, b) / (|a| |b|). Throws DataError on dimension mismatch or a zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct NeighborResult {
  std::string mcq_id;
  std::size_t pool_index = 0;
  double similarity = 0.0;

  bool operator==(const NeighborResult&) const = default;
};

// Exhaustive cosine index over an example pool. Results are ordered by
// descending similarity, ties broken by ascending pool index.
class ExampleIndex {
 public:
  ExampleIndex() = default;
  ExampleIndex(std::vector<const Mcq*> pool, std::vector<EmbeddingVector> vectors);

  std::size_t size() const { return pool_.size(); }
  std::size_t dim() const { return dim_; }
  const Mcq& at(std::size_t i) const { return *pool_[i]; }

  // Top-k neighbours of `target`. The target id itself is never returned.
  // With `exclude_topic`, pool members sharing the target's topic at that
  // level are dropped before ranking. Fewer survivors than k returns them all;
  // an empty result means nothing survived filtering.
  std::vector<NeighborResult> select(const Mcq& target, const EmbeddingVector& query,
                                     std::size_t k,
                                     std::optional<TopicLevel> exclude_topic = std::nullopt) const;

 private:
  std::vector<const Mcq*> pool_;
  std::vector<EmbeddingVector> vectors_;
  std::vector<double> norms_;
  std::size_t dim_ = 0;
};

// Uniform sample of k pool indices without replacement, in sampled order.
// Throws DataError if k exceeds the pool size.
std::vector<std::size_t> random_select(std::size_t pool_size, std::size_t k, std::uint64_t seed);

}  // namespace dgen
