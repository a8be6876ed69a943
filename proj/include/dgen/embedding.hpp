#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "dgen/retrieval.hpp"

namespace dgen {

class HttpJsonTransport;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // Stable identifier; part of every cache key.
  virtual std::string id() const = 0;
  virtual std::vector<EmbeddingVector> encode(std::span<const std::string> texts) = 0;
};

// Signed feature hashing over lowercase word tokens, L2-normalised. Runs
// fully offline; useful for demos and replayable fixtures.
class HashingEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dim = 256) : dim_(dim) {}
  std::string id() const override;
  std::vector<EmbeddingVector> encode(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
};

// Vector file format:
//   line 1:  "<dim> <count>"
//   rows:    "<sha256(text) hex>\t<v1> <v2> ... <v_dim>"
struct VectorFile {
  std::size_t dim = 0;
  std::map<std::string, EmbeddingVector> rows;  // text hash -> vector
};

VectorFile load_vector_file(const std::filesystem::path& path);
void save_vector_file(const std::filesystem::path& path, const VectorFile& file);

// Serves vectors recorded ahead of time, keyed by text hash.
class PrecomputedEmbeddingProvider : public EmbeddingProvider {
 public:
  PrecomputedEmbeddingProvider(std::string id, VectorFile file)
      : id_(std::move(id)), file_(std::move(file)) {}
  std::string id() const override { return id_; }
  std::vector<EmbeddingVector> encode(std::span<const std::string> texts) override;

 private:
  std::string id_;
  VectorFile file_;
};

// OpenAI-compatible POST {base}/embeddings.
class RemoteEmbeddingProvider : public EmbeddingProvider {
 public:
  RemoteEmbeddingProvider(std::shared_ptr<HttpJsonTransport> transport, std::string model,
                          std::size_t batch_size = 64);
  std::string id() const override { return "remote:" + model_; }
  std::vector<EmbeddingVector> encode(std::span<const std::string> texts) override;

 private:
  std::shared_ptr<HttpJsonTransport> transport_;
  std::string model_;
  std::size_t batch_size_;
};

// On-disk cache keyed by (provider id, encoding mode, text hash). Same
// header as the vector file; rows are "<provider>\t<mode>\t<hash>\t<values>".
// Concurrent readers, serialized writers.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;  // in-memory only
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<EmbeddingVector> get(const std::string& provider, EncodingMode mode,
                                     const std::string& text_hash) const;
  void put(const std::string& provider, EncodingMode mode, const std::string& text_hash,
           EmbeddingVector vector);
  std::size_t size() const;
  std::size_t dim() const;
  // Rewrites the backing file atomically; no-op without a path.
  void flush() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<Key, EmbeddingVector> entries_;
  std::size_t dim_ = 0;
};

// One vector per text, in order. Misses go to the provider in one batch and
// are written to the cache. Throws DataError on a dimension mismatch with
// vectors already cached.
std::vector<EmbeddingVector> embed(std::span<const std::string> texts, EncodingMode mode,
                                   EmbeddingProvider& provider, EmbeddingCache& cache);

}  // namespace dgen
