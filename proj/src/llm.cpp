#include <httplib.h>

#include "dgen/llm.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <random>
#include <thread>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/io.hpp"
#include "dgen/log.hpp"

namespace dgen {

using nlohmann::json;
namespace fs = std::filesystem;

void DecodingConfig::validate() const {
  if (!std::isfinite(temperature) || temperature < 0.0) throw ConfigError("temperature must be >= 0");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (n_samples <= 0) throw ConfigError("n_samples must be positive");
}

json canonical_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", request.model},
          {"messages", std::move(messages)},
          {"config",
           {{"temperature", request.config.temperature},
            {"max_tokens", request.config.max_tokens},
            {"top_p", request.config.top_p},
            {"n", request.config.n_samples}}}};
}

std::string cache_key(const ChatRequest& request) { return sha256_hex(canonical_json(request).dump()); }

namespace {

std::string exchange_checksum(const std::string& key, const json& request, const json& responses,
                              const json& refusal) {
  return sha256_hex(key + "\n" + request.dump() + "\n" + responses.dump() + "\n" + refusal.dump());
}

ChatRequest request_from_canonical(const json& j) {
  ChatRequest r;
  r.model = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  }
  const auto& c = j.at("config");
  r.config.temperature = c.at("temperature").get<double>();
  r.config.max_tokens = c.at("max_tokens").get<int>();
  r.config.top_p = c.at("top_p").get<double>();
  r.config.n_samples = c.at("n").get<int>();
  return r;
}

}  // namespace

json to_json(const ChatExchange& exchange) {
  json request = canonical_json(exchange.request);
  json responses = exchange.responses;
  json refusal = exchange.refusal ? json(*exchange.refusal) : json(nullptr);
  return {{"key", exchange.key},
          {"request", request},
          {"responses", responses},
          {"refusal", refusal},
          {"checksum", exchange_checksum(exchange.key, request, responses, refusal)}};
}

ChatExchange exchange_from_json(const json& j) {
  ChatExchange ex;
  try {
    ex.key = j.at("key").get<std::string>();
    ex.request = request_from_canonical(j.at("request"));
    ex.responses = j.at("responses").get<std::vector<std::string>>();
    const json& refusal = j.at("refusal");
    if (!refusal.is_null()) ex.refusal = refusal.get<std::string>();
    if (cache_key(ex.request) != ex.key) {
      throw DataError("digest mismatch: record key " + ex.key + " does not match its request");
    }
    std::string checksum = exchange_checksum(ex.key, canonical_json(ex.request), j.at("responses"), refusal);
    if (checksum != j.at("checksum").get<std::string>()) {
      throw DataError("digest mismatch: checksum of record " + ex.key + " does not verify");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed exchange record: ") + e.what());
  }
  if (!ex.refusal && static_cast<int>(ex.responses.size()) != ex.request.config.n_samples) {
    throw DataError("exchange " + ex.key + " holds " + std::to_string(ex.responses.size()) +
                    " responses, expected " + std::to_string(ex.request.config.n_samples));
  }
  return ex;
}

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "objects");
}

fs::path ResponseCache::object_path(const std::string& key) const {
  if (key.size() != 64 || key.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw DataError("malformed cache key '" + key + "'");
  }
  return root_ / "objects" / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatExchange> ResponseCache::get(const std::string& key) const {
  fs::path p = object_path(key);
  if (!fs::exists(p)) return std::nullopt;
  json j;
  try {
    j = json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw DataError("corrupt cache record " + p.string() + ": " + e.what());
  }
  ChatExchange ex = exchange_from_json(j);
  if (ex.key != key) throw DataError("cache record " + p.string() + " is stored under the wrong key");
  return ex;
}

bool ResponseCache::put(const ChatExchange& exchange) {
  fs::path p = object_path(exchange.key);
  if (fs::exists(p)) return false;
  fs::create_directories(p.parent_path());
  thread_local std::mt19937_64 salt{std::random_device{}()};
  fs::path tmp = p;
  tmp += ".tmp." + std::to_string(salt());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << to_json(exchange).dump() << '\n';
    if (!out) throw DataError("cannot write cache record " + tmp.string());
  }
  // link() fails if the key exists: first writer wins.
  int rc = ::link(tmp.c_str(), p.c_str());
  int saved = errno;
  fs::remove(tmp);
  if (rc != 0) {
    if (saved == EEXIST) return false;
    throw DataError("cannot store cache record " + p.string() + ": " + std::strerror(saved));
  }
  std::lock_guard lock(index_mu_);
  std::string line = exchange.key + "\t" + exchange.request.model + "\n";
  int fd = ::open((root_ / "index.tsv").c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd >= 0) {
    [[maybe_unused]] auto n = ::write(fd, line.data(), line.size());
    ::close(fd);
  }
  return true;
}

std::vector<std::string> ResponseCache::keys() const {
  std::vector<std::string> keys;
  fs::path objects = root_ / "objects";
  if (!fs::exists(objects)) return keys;
  for (const auto& entry : fs::recursive_directory_iterator(objects)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    keys.push_back(entry.path().stem().string());
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

void ResponseCache::export_fixture(const fs::path& out,
                                   const std::function<bool(const ChatExchange&)>& select) const {
  std::string content;
  for (const auto& key : keys()) {
    auto ex = get(key);
    if (!ex || (select && !select(*ex))) continue;
    content += to_json(*ex).dump();
    content += '\n';
  }
  write_file_atomic(out, content);
}

std::size_t ResponseCache::import_fixture(const fs::path& in) {
  std::vector<ChatExchange> records;
  for_each_json_line(in, [&](const json& j, std::size_t line) {
    try {
      records.push_back(exchange_from_json(j));
    } catch (const DataError& e) {
      throw DataError(in.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  std::size_t added = 0;
  for (const auto& ex : records) {
    if (put(ex)) ++added;
  }
  return added;
}

EndpointConfig EndpointConfig::from_env() {
  EndpointConfig cfg;
  if (const char* v = std::getenv("OPENAI_BASE_URL"); v && *v) cfg.base_url = v;
  if (const char* v = std::getenv("OPENAI_API_KEY"); v && *v) cfg.api_key = v;
  return cfg;
}

HttpJsonTransport::HttpJsonTransport(EndpointConfig endpoint, RetryPolicy retry)
    : sleep([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      endpoint_(std::move(endpoint)),
      retry_(retry) {
  const std::string& url = endpoint_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("API base URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
}

json HttpJsonTransport::post_once(const std::string& path, const std::string& body) {
  ++attempts_;
  httplib::Client client(scheme_host_port_);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(retry_.request_timeout);
  client.set_connection_timeout(std::max<long>(1, static_cast<long>(secs.count())), 0);
  client.set_read_timeout(std::max<long>(1, static_cast<long>(secs.count())), 0);
  client.set_write_timeout(std::max<long>(1, static_cast<long>(secs.count())), 0);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
  auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
  if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("malformed JSON response: ") + e.what());
  }
}

json HttpJsonTransport::post(const std::string& path, const json& body) {
  const std::string payload = body.dump();
  for (int attempt = 1;; ++attempt) {
    try {
      return post_once(path, payload);
    } catch (const TransientError& e) {
      if (attempt >= retry_.max_attempts) {
        throw TransportError(std::string(e.what()) + " (gave up after " + std::to_string(attempt) +
                             " attempts)");
      }
      auto delay = retry_.base_delay * (1 << (attempt - 1));
      log_event(LogLevel::Warn, "llm", "", "retry", std::string(e.what()));
      sleep(delay);
    }
  }
}

json chat_request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", request.model},
          {"messages", std::move(messages)},
          {"temperature", request.config.temperature},
          {"max_tokens", request.config.max_tokens},
          {"top_p", request.config.top_p},
          {"n", request.config.n_samples}};
}

std::vector<std::string> parse_chat_response(const json& response, int expected_n) {
  try {
    const auto& choices = response.at("choices");
    std::vector<std::pair<std::size_t, std::string>> texts;
    for (std::size_t i = 0; i < choices.size(); ++i) {
      const auto& choice = choices[i];
      const auto& message = choice.at("message");
      if (auto it = message.find("refusal"); it != message.end() && !it->is_null()) {
        throw RefusalError(it->get<std::string>());
      }
      if (choice.value("finish_reason", std::string()) == "content_filter") {
        throw RefusalError("content_filter");
      }
      const auto& content = message.at("content");
      texts.emplace_back(choice.value("index", i), content.is_null() ? "" : content.get<std::string>());
    }
    if (static_cast<int>(texts.size()) != expected_n) {
      throw TransportError("partial response: " + std::to_string(texts.size()) + " of " +
                           std::to_string(expected_n) + " choices");
    }
    std::sort(texts.begin(), texts.end());
    std::vector<std::string> out;
    for (auto& [_, t] : texts) out.push_back(std::move(t));
    return out;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat response: ") + e.what());
  }
}

std::vector<std::string> HttpChatBackend::send(const ChatRequest& request) {
  return parse_chat_response(transport_->post("/chat/completions", chat_request_body(request)),
                             request.config.n_samples);
}

LlmClient::LlmClient(std::shared_ptr<ResponseCache> cache, std::shared_ptr<ChatBackend> backend,
                     int max_in_flight)
    : cache_(std::move(cache)), backend_(std::move(backend)), in_flight_(std::max(1, max_in_flight)) {
  if (!cache_) throw ConfigError("llm client needs a response cache");
}

LlmClient::Result LlmClient::complete(const ChatRequest& request) {
  request.config.validate();
  Result result;
  result.key = cache_key(request);

  auto from_record = [&](const ChatExchange& ex) {
    if (ex.refusal) throw RefusalError("provider refused request " + ex.key + ": " + *ex.refusal);
    result.texts = ex.responses;
    return result;
  };

  if (auto hit = cache_->get(result.key)) {
    result.from_cache = true;
    return from_record(*hit);
  }
  if (!backend_) {
    throw FixtureGapError("replay miss: no recorded exchange for cache key " + result.key +
                              " (model " + request.model + ")",
                          result.key);
  }

  ChatExchange ex;
  ex.key = result.key;
  ex.request = request;
  in_flight_.acquire();
  try {
    ++network_calls_;
    ex.responses = backend_->send(request);
  } catch (const RefusalError& e) {
    in_flight_.release();
    ex.refusal = e.what();
    cache_->put(ex);
    throw RefusalError("provider refused request " + ex.key + ": " + e.what());
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();

  if (static_cast<int>(ex.responses.size()) != request.config.n_samples) {
    throw TransportError("backend returned " + std::to_string(ex.responses.size()) + " of " +
                         std::to_string(request.config.n_samples) + " samples; not cached");
  }
  if (!cache_->put(ex)) {
    // Another writer stored this key first; theirs is authoritative.
    if (auto stored = cache_->get(result.key)) return from_record(*stored);
  }
  result.texts = std::move(ex.responses);
  return result;
}

}  // namespace dgen
