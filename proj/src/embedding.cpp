#include "dgen/embedding.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/io.hpp"
#include "dgen/llm.hpp"
#include "dgen/text.hpp"

namespace dgen {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      if (!std::isspace(c)) tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

std::string format_values(const EmbeddingVector& v) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    if (i) out.push_back(' ');
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v.values[i]);
    out.append(buf, end);
  }
  return out;
}

EmbeddingVector parse_values(std::string_view s, const std::string& where) {
  EmbeddingVector v;
  const char* p = s.data();
  const char* end = s.data() + s.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    float f = 0.0f;
    auto [next, ec] = std::from_chars(p, end, f);
    if (ec != std::errc() || !std::isfinite(f)) throw DataError(where + ": bad vector value");
    v.values.push_back(f);
    p = next;
  }
  return v;
}

std::pair<std::size_t, std::size_t> parse_header(const std::string& line, const std::string& where) {
  std::istringstream in(line);
  std::size_t dim = 0, count = 0;
  if (!(in >> dim >> count)) throw DataError(where + ": malformed header, expected '<dim> <count>'");
  return {dim, count};
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    parts.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return parts;
}

}  // namespace

std::string HashingEmbeddingProvider::id() const { return "hash-bow-" + std::to_string(dim_); }

std::vector<EmbeddingVector> HashingEmbeddingProvider::encode(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    EmbeddingVector v;
    std::vector<double> acc(dim_, 0.0);
    auto add = [&](std::string_view feature, double weight) {
      std::uint64_t h = fnv1a(feature);
      double sign = (h >> 63) ? -1.0 : 1.0;
      acc[h % dim_] += sign * weight;
    };
    auto tokens = tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      add(tokens[i], 1.0);
      if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1], 0.5);
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);
    v.values.resize(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      v.values[i] = norm > 0.0 ? static_cast<float>(acc[i] / norm) : 0.0f;
    }
    out.push_back(std::move(v));
  }
  return out;
}

VectorFile load_vector_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vector file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty vector file");
  auto [dim, count] = parse_header(line, path.string());
  VectorFile file;
  file.dim = dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path.string() + ":" + std::to_string(line_no);
    auto parts = split_tabs(line);
    if (parts.size() != 2) throw DataError(where + ": expected '<hash>\\t<values>'");
    EmbeddingVector v = parse_values(parts[1], where);
    if (v.dim() != dim) throw DataError(where + ": dimension mismatch");
    file.rows[parts[0]] = std::move(v);
  }
  if (file.rows.size() != count) {
    throw DataError(path.string() + ": header says " + std::to_string(count) + " rows, found " +
                    std::to_string(file.rows.size()));
  }
  return file;
}

void save_vector_file(const std::filesystem::path& path, const VectorFile& file) {
  std::string out = std::to_string(file.dim) + " " + std::to_string(file.rows.size()) + "\n";
  for (const auto& [hash, v] : file.rows) {
    out += hash;
    out += '\t';
    out += format_values(v);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<EmbeddingVector> PrecomputedEmbeddingProvider::encode(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::string h = sha256_hex(text);
    auto it = file_.rows.find(h);
    if (it == file_.rows.end()) throw DataError("no precomputed vector for text hash " + h);
    out.push_back(it->second);
  }
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::shared_ptr<HttpJsonTransport> transport,
                                                 std::string model, std::size_t batch_size)
    : transport_(std::move(transport)), model_(std::move(model)), batch_size_(batch_size) {
  if (batch_size_ == 0) batch_size_ = 1;
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::encode(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    std::size_t end = std::min(texts.size(), start + batch_size_);
    nlohmann::json body{{"model", model_},
                        {"input", std::vector<std::string>(texts.begin() + start, texts.begin() + end)}};
    nlohmann::json resp = transport_->post("/embeddings", body);
    try {
      const auto& data = resp.at("data");
      if (data.size() != end - start) throw TransportError("embeddings: wrong number of vectors");
      for (const auto& item : data) {
        std::size_t index = item.value("index", std::size_t{0});
        if (index >= end - start) throw TransportError("embeddings: index out of range");
        EmbeddingVector v;
        v.values = item.at("embedding").get<std::vector<float>>();
        out[start + index] = std::move(v);
      }
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("embeddings: malformed response: ") + e.what());
    }
  }
  return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw DataError("cannot read embedding cache " + path_.string());
  std::string line;
  if (!std::getline(in, line)) return;
  auto [dim, count] = parse_header(line, path_.string());
  dim_ = dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path_.string() + ":" + std::to_string(line_no);
    auto parts = split_tabs(line);
    if (parts.size() != 4) throw DataError(where + ": expected 4 tab-separated fields");
    EmbeddingVector v = parse_values(parts[3], where);
    if (v.dim() != dim_) throw DataError(where + ": dimension mismatch");
    entries_[{parts[0], parts[1], parts[2]}] = std::move(v);
  }
  if (entries_.size() != count) throw DataError(path_.string() + ": row count disagrees with header");
}

std::optional<EmbeddingVector> EmbeddingCache::get(const std::string& provider, EncodingMode mode,
                                                   const std::string& text_hash) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find({provider, to_string(mode), text_hash});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& provider, EncodingMode mode, const std::string& text_hash,
                         EmbeddingVector vector) {
  std::unique_lock lock(mu_);
  if (!entries_.empty() && vector.dim() != dim_) {
    throw DataError("embedding dimension " + std::to_string(vector.dim()) +
                    " does not match cache dimension " + std::to_string(dim_));
  }
  if (entries_.empty()) dim_ = vector.dim();
  entries_.emplace(Key{provider, to_string(mode), text_hash}, std::move(vector));
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::size_t EmbeddingCache::dim() const {
  std::shared_lock lock(mu_);
  return dim_;
}

void EmbeddingCache::flush() const {
  if (path_.empty()) return;
  std::shared_lock lock(mu_);
  std::string out = std::to_string(dim_) + " " + std::to_string(entries_.size()) + "\n";
  for (const auto& [key, v] : entries_) {
    const auto& [provider, mode, hash] = key;
    out += provider + '\t' + mode + '\t' + hash + '\t' + format_values(v) + '\n';
  }
  write_file_atomic(path_, out);
}

std::vector<EmbeddingVector> embed(std::span<const std::string> texts, EncodingMode mode,
                                   EmbeddingProvider& provider, EmbeddingCache& cache) {
  const std::string pid = provider.id();
  std::vector<std::string> hashes;
  hashes.reserve(texts.size());
  std::vector<std::string> missing;
  std::unordered_map<std::string, std::size_t> missing_index;
  for (const auto& t : texts) {
    hashes.push_back(sha256_hex(t));
    if (!cache.get(pid, mode, hashes.back()) && !missing_index.count(hashes.back())) {
      missing_index.emplace(hashes.back(), missing.size());
      missing.push_back(t);
    }
  }
  if (!missing.empty()) {
    auto fresh = provider.encode(missing);
    if (fresh.size() != missing.size()) {
      throw DataError("embedding provider returned " + std::to_string(fresh.size()) + " vectors for " +
                      std::to_string(missing.size()) + " texts");
    }
    for (std::size_t i = 0; i < missing.size(); ++i) {
      for (float v : fresh[i].values) {
        if (!std::isfinite(v)) throw DataError("embedding provider returned a non-finite value");
      }
      cache.put(pid, mode, sha256_hex(missing[i]), std::move(fresh[i]));
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& h : hashes) out.push_back(*cache.get(pid, mode, h));
  return out;
}

}  // namespace dgen
