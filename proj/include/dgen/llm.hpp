#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dgen {

struct DecodingConfig {
  double temperature = 0.0;
  int max_tokens = 350;
  double top_p = 1.0;
  int n_samples = 1;

  static DecodingConfig greedy() { return {0.0, 350, 1.0, 1}; }
  static DecodingConfig sampling(int n, double temperature = 1.0) {
    return {temperature, 350, 1.0, n};
  }

  void validate() const;
  bool operator==(const DecodingConfig&) const = default;
};

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  DecodingConfig config;
};

// Canonical serialization; the cache key is its SHA-256.
nlohmann::json canonical_json(const ChatRequest& request);
std::string cache_key(const ChatRequest& request);

struct ChatExchange {
  std::string key;
  ChatRequest request;
  std::vector<std::string> responses;
  std::optional<std::string> refusal;
};

nlohmann::json to_json(const ChatExchange& exchange);
// Verifies both the request digest and the record checksum.
ChatExchange exchange_from_json(const nlohmann::json& j);

// Content-addressed store, one file per key under objects/, plus index.tsv.
// Writes are atomic and write-once: the first writer of a key wins.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  std::optional<ChatExchange> get(const std::string& key) const;
  // Returns false if the key already existed (existing record kept).
  bool put(const ChatExchange& exchange);
  std::vector<std::string> keys() const;
  const std::filesystem::path& root() const { return root_; }

  // Fixture file: one exchange per line, sorted by key.
  void export_fixture(const std::filesystem::path& out,
                      const std::function<bool(const ChatExchange&)>& select = {}) const;
  // Returns the number of newly stored exchanges. Throws DataError on a
  // corrupt record; nothing from that file is stored in that case.
  std::size_t import_fixture(const std::filesystem::path& in);

 private:
  std::filesystem::path object_path(const std::string& key) const;

  std::filesystem::path root_;
  mutable std::mutex index_mu_;
};

// Raw chat-completion access; the client layers caching and retries on top.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Returns exactly request.config.n_samples texts or throws.
  virtual std::vector<std::string> send(const ChatRequest& request) = 0;
};

// Thrown by transports for failures worth retrying (connection errors,
// 429, 5xx).
struct TransientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds request_timeout{120000};
};

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;

  // OPENAI_BASE_URL / OPENAI_API_KEY, falling back to defaults.
  static EndpointConfig from_env();
};

// JSON POST with bounded exponential-backoff retry.
class HttpJsonTransport {
 public:
  HttpJsonTransport(EndpointConfig endpoint, RetryPolicy retry = {});

  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  // Replaceable for tests.
  std::function<void(std::chrono::milliseconds)> sleep;
  int attempts_made() const { return attempts_.load(); }

 private:
  nlohmann::json post_once(const std::string& path, const std::string& body);

  EndpointConfig endpoint_;
  RetryPolicy retry_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::atomic<int> attempts_{0};
};

// OpenAI-style POST {base}/chat/completions.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(std::shared_ptr<HttpJsonTransport> transport)
      : transport_(std::move(transport)) {}
  std::vector<std::string> send(const ChatRequest& request) override;

 private:
  std::shared_ptr<HttpJsonTransport> transport_;
};

nlohmann::json chat_request_body(const ChatRequest& request);
// Throws RefusalError when the provider declined.
std::vector<std::string> parse_chat_response(const nlohmann::json& response, int expected_n);

// Cached chat access. Without a backend the client is in replay mode and
// every miss is a FixtureGapError naming the key.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<ResponseCache> cache, std::shared_ptr<ChatBackend> backend,
            int max_in_flight = 4);

  struct Result {
    std::string key;
    std::vector<std::string> texts;
    bool from_cache = false;
  };

  Result complete(const ChatRequest& request);
  std::vector<std::string> complete_texts(const ChatRequest& request) {
    return complete(request).texts;
  }

  bool replay_only() const { return backend_ == nullptr; }
  int network_calls() const { return network_calls_.load(); }
  ResponseCache& cache() { return *cache_; }

 private:
  std::shared_ptr<ResponseCache> cache_;
  std::shared_ptr<ChatBackend> backend_;
  std::counting_semaphore<> in_flight_;
  std::atomic<int> network_calls_{0};
};

}  // namespace dgen
