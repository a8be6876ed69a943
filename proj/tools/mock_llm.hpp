#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dgen/corpus.hpp"

namespace httplib {
class Server;
}

namespace dgen::mock {

// Deterministic stand-in for a chat model. Replies depend only on the
// request body and on what the corpus says about the question in the prompt:
// distractor prompts get labelled distractor blocks, answer prompts a letter,
// open questions sampled answers, ranking prompts a preferred option.
class MockResponder {
 public:
  explicit MockResponder(std::vector<Mcq> corpus);

  std::vector<std::string> respond(const nlohmann::json& request) const;
  nlohmann::json completion(const nlohmann::json& request) const;

 private:
  const Mcq* find_by_stem(const std::string& stem) const;
  std::string distractors(const std::string& prompt, const std::string& salt) const;
  std::string answer_letter(const std::string& prompt, const std::string& salt) const;
  std::string open_answer(const std::string& prompt, const std::string& salt) const;
  std::string rank(const std::string& prompt, const std::string& salt) const;

  std::vector<Mcq> corpus_;
};

// OpenAI-compatible server on 127.0.0.1 serving /v1/chat/completions.
class MockServer {
 public:
  explicit MockServer(std::shared_ptr<MockResponder> responder);
  ~MockServer();

  // Binds an ephemeral port and serves on a background thread.
  int start();
  void stop();
  std::string base_url() const;
  int requests() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

}  // namespace dgen::mock
