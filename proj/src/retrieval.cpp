#include "dgen/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgen/error.hpp"
#include "dgen/rng.hpp"
#include "dgen/text.hpp"

namespace dgen {

const char* to_string(EncodingMode mode) {
  switch (mode) {
    case EncodingMode::StemOnly: return "stem";
    case EncodingMode::StemKey: return "stem_key";
    case EncodingMode::StemKeyExplanation: return "stem_key_explanation";
  }
  return "stem_key_explanation";
}

EncodingMode parse_encoding_mode(std::string_view name) {
  if (name == "stem" || name == "none") return EncodingMode::StemOnly;
  if (name == "stem_key" || name == "key") return EncodingMode::StemKey;
  if (name == "stem_key_explanation" || name == "all") return EncodingMode::StemKeyExplanation;
  throw ConfigError("unknown encoding mode '" + std::string(name) + "'");
}

std::string encoding_text(const Mcq& mcq, EncodingMode mode) {
  std::string text = mcq.stem;
  if (mode == EncodingMode::StemOnly) return text;
  text += '\n';
  text += mcq.key;
  if (mode == EncodingMode::StemKeyExplanation && mcq.key_explanation &&
      !trim(*mcq.key_explanation).empty()) {
    text += '\n';
    text += *mcq.key_explanation;
  }
  return text;
}

namespace {

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    s += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
  }
  return s;
}

}  // namespace

double l2_norm(const EmbeddingVector& v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw DataError("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()) + ")");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw DataError("cosine: zero vector");
  return dot(a, b) / (na * nb);
}

ExampleIndex::ExampleIndex(std::vector<const Mcq*> pool, std::vector<EmbeddingVector> vectors)
    : pool_(std::move(pool)), vectors_(std::move(vectors)) {
  if (pool_.size() != vectors_.size()) throw DataError("example index: pool/vector count mismatch");
  norms_.reserve(vectors_.size());
  for (std::size_t i = 0; i < vectors_.size(); ++i) {
    if (i == 0) dim_ = vectors_[i].dim();
    if (vectors_[i].dim() != dim_) {
      throw DataError("example index: dimension mismatch at '" + pool_[i]->id + "'");
    }
    for (float v : vectors_[i].values) {
      if (!std::isfinite(v)) throw DataError("example index: non-finite value at '" + pool_[i]->id + "'");
    }
    double n = l2_norm(vectors_[i]);
    if (n == 0.0) throw DataError("example index: zero vector at '" + pool_[i]->id + "'");
    norms_.push_back(n);
  }
}

std::vector<NeighborResult> ExampleIndex::select(const Mcq& target, const EmbeddingVector& query,
                                                 std::size_t k,
                                                 std::optional<TopicLevel> exclude_topic) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (pool_.empty()) return {};
  if (query.dim() != dim_) {
    throw DataError("query dimension " + std::to_string(query.dim()) + " != index dimension " +
                    std::to_string(dim_));
  }
  const double qn = l2_norm(query);
  if (qn == 0.0) throw DataError("cosine: zero query vector for '" + target.id + "'");

  std::optional<std::string> excluded_topic;
  if (exclude_topic) excluded_topic = normalize_text(target.topic(*exclude_topic));

  std::vector<NeighborResult> scored;
  scored.reserve(pool_.size());
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    const Mcq& candidate = *pool_[i];
    if (candidate.id == target.id) continue;
    if (excluded_topic && normalize_text(candidate.topic(*exclude_topic)) == *excluded_topic) continue;
    scored.push_back({candidate.id, i, dot(query, vectors_[i]) / (qn * norms_[i])});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const NeighborResult& a, const NeighborResult& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.pool_index < b.pool_index;
                    });
  scored.resize(take);
  return scored;
}

std::vector<std::size_t> random_select(std::size_t pool_size, std::size_t k, std::uint64_t seed) {
  if (k > pool_size) {
    throw DataError("random_select: k=" + std::to_string(k) + " exceeds pool of " +
                    std::to_string(pool_size));
  }
  // Partial Fisher-Yates: the first k slots are a uniform sample.
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(pool_size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace dgen
