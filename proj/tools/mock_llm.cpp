#include "mock_llm.hpp"

#include <atomic>
#include <thread>

#include <httplib.h>

#include "dgen/digest.hpp"
#include "dgen/text.hpp"

namespace dgen::mock {

using nlohmann::json;

namespace {

std::uint64_t draw(const std::string& text, const std::string& salt) { return derive_seed(0, text + "#" + salt); }

// Text after the last line starting with `label`, up to the end of that line.
std::string last_field(const std::string& prompt, const std::string& label) {
  std::string found;
  for (const auto& line : split_lines(prompt)) {
    if (line.rfind(label, 0) == 0) found = line.substr(label.size());
  }
  return found;
}

std::string bump_first_digit(const std::string& text, int delta) {
  std::string out = text;
  for (char& c : out) {
    if (c >= '0' && c <= '9') {
      c = static_cast<char>('0' + (c - '0' + delta + 10) % 10);
      return out;
    }
  }
  return out + " + 1";
}

}  // namespace

MockResponder::MockResponder(std::vector<Mcq> corpus) : corpus_(std::move(corpus)) {}

const Mcq* MockResponder::find_by_stem(const std::string& stem) const {
  const std::string target = normalize_text(stem);
  for (const auto& q : corpus_) {
    if (normalize_text(q.stem) == target) return &q;
  }
  return nullptr;
}

std::string MockResponder::distractors(const std::string& prompt, const std::string& salt) const {
  const Mcq* q = find_by_stem(last_field(prompt, "Question: "));
  std::array<std::string, 3> texts{"\\( 1 \\)", "\\( 2 \\)", "\\( 3 \\)"};
  std::array<std::string, 3> notes{"This comes from a place value slip.", "This comes from using the wrong operation.",
                                   "This comes from stopping one step early."};
  if (q) {
    std::uint64_t h = draw(prompt, salt);
    int offset = static_cast<int>(h % 3);
    for (int j = 0; j < 3; ++j) {
      const auto& d = q->distractors[(j + offset) % 3];
      texts[j] = d.text;
      if (d.feedback) notes[j] = *d.feedback;
      switch ((h >> (8 * (j + 1))) % 10) {
        case 0: case 1: case 2: texts[j] = bump_first_digit(q->key, j + 1); break;
        case 3: texts[j] = q->key; break;
        default: break;
      }
    }
  }
  std::string out;
  if (draw(prompt, salt + "prose") % 4 == 0) out += "Here are three incorrect answers with feedback.\n\n";
  for (int j = 0; j < 3; ++j) {
    std::string k = std::to_string(j + 1);
    out += "Distractor" + k + " Feedback: " + notes[j] + "\n";
    out += "Distractor" + k + ": " + texts[j] + "\n";
  }
  return out;
}

std::string MockResponder::answer_letter(const std::string& prompt, const std::string& salt) const {
  const Mcq* q = find_by_stem(last_field(prompt, "Question: "));
  int key_index = -1;
  if (q) {
    for (int i = 0; i < 4; ++i) {
      std::string label = std::string(1, static_cast<char>('A' + i)) + ". ";
      if (normalized_equal(last_field(prompt, label), q->key)) key_index = i;
    }
  }
  std::uint64_t h = draw(prompt, salt);
  int letter = (key_index >= 0 && h % 4 != 0) ? key_index : static_cast<int>((h >> 8) % 4);
  static const char* forms[] = {"%c", "%c.", "The answer is %c.", "(%c)"};
  char buf[64];
  std::snprintf(buf, sizeof buf, forms[(h >> 16) % 4], 'A' + letter);
  return buf;
}

std::string MockResponder::open_answer(const std::string& prompt, const std::string& salt) const {
  const Mcq* q = find_by_stem(last_field(prompt, "Question: "));
  if (!q) return "0";
  std::uint64_t h = draw(prompt, salt);
  switch (h % 10) {
    case 0: case 1: case 2: case 3: case 4: return q->key;
    case 5: case 6: case 7: return "Answer: " + q->distractors[(h >> 8) % 3].text;
    default: return bump_first_digit(q->key, static_cast<int>((h >> 8) % 9) + 1);
  }
}

std::string MockResponder::rank(const std::string& prompt, const std::string& salt) const {
  const Mcq* q = find_by_stem(last_field(prompt, "Question: "));
  std::string a = last_field(prompt, "Option A: ");
  std::string b = last_field(prompt, "Option B: ");
  std::uint64_t h = draw(prompt, salt);
  bool pick_a = (h & 1U) != 0;
  if (q && q->selection) {
    auto fraction = [&](const std::string& text) {
      for (int i = 0; i < 3; ++i) {
        if (normalized_equal(q->distractors[i].text, text)) return q->selection->distractors[i];
      }
      return 0.0;
    };
    bool a_more = fraction(a) >= fraction(b);
    pick_a = (h % 5 == 0) ? !a_more : a_more;
  }
  return std::string("Preferred Answer: ") + (pick_a ? "A" : "B");
}

std::vector<std::string> MockResponder::respond(const json& request) const {
  std::string prompt;
  for (const auto& m : request.at("messages")) {
    if (m.at("role") == "user") prompt = m.at("content").get<std::string>();
  }
  const int n = request.value("n", 1);
  const std::string body = request.dump();
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    const std::string salt = body + "#" + std::to_string(i);
    if (prompt.find("Which incorrect option are the students more likely to pick?") != std::string::npos) {
      out.push_back(rank(prompt, salt));
    } else if (prompt.rfind("Answer the following math multiple-choice question", 0) == 0) {
      out.push_back(answer_letter(prompt, salt));
    } else if (prompt.rfind("Solve the following math question", 0) == 0) {
      out.push_back(open_answer(prompt, salt));
    } else {
      out.push_back(distractors(prompt, salt));
    }
  }
  return out;
}

json MockResponder::completion(const json& request) const {
  json choices = json::array();
  auto texts = respond(request);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    choices.push_back({{"index", i},
                       {"message", {{"role", "assistant"}, {"content", texts[i]}}},
                       {"finish_reason", "stop"}});
  }
  return {{"id", "mock-" + sha256_hex(request.dump()).substr(0, 12)},
          {"object", "chat.completion"},
          {"model", request.value("model", "")},
          {"choices", choices}};
}

struct MockServer::State {
  std::shared_ptr<MockResponder> responder;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
};

MockServer::MockServer(std::shared_ptr<MockResponder> responder) : state_(std::make_unique<State>()) {
  state_->responder = std::move(responder);
  auto handler = [s = state_.get()](const httplib::Request& req, httplib::Response& res) {
    ++s->requests;
    try {
      auto body = json::parse(req.body);
      res.set_content(s->responder->completion(body).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", {{"message", e.what()}}}}.dump(), "application/json");
    }
  };
  state_->server.Post("/v1/chat/completions", handler);
  state_->server.Post("/chat/completions", handler);
}

MockServer::~MockServer() { stop(); }

int MockServer::start() {
  state_->port = state_->server.bind_to_any_port("127.0.0.1");
  state_->thread = std::thread([s = state_.get()] { s->server.listen_after_bind(); });
  state_->server.wait_until_ready();
  return state_->port;
}

void MockServer::stop() {
  if (state_ && state_->thread.joinable()) {
    state_->server.stop();
    state_->thread.join();
  }
}

std::string MockServer::base_url() const { return "http://127.0.0.1:" + std::to_string(state_->port) + "/v1"; }

int MockServer::requests() const { return state_->requests.load(); }

}  // namespace dgen::mock
