#include "dgen/generation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <regex>
#include <unordered_set>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/io.hpp"
#include "dgen/log.hpp"
#include "dgen/text.hpp"

namespace dgen {

using nlohmann::json;

const char* to_string(Approach approach) {
  switch (approach) {
    case Approach::Knn: return "knn";
    case Approach::Cot: return "cot";
    case Approach::Rb: return "rb";
    case Approach::Ft: return "ft";
    case Approach::Sb: return "sb";
  }
  return "knn";
}

Approach parse_approach(std::string_view name) {
  if (name == "knn") return Approach::Knn;
  if (name == "cot") return Approach::Cot;
  if (name == "rb") return Approach::Rb;
  if (name == "ft") return Approach::Ft;
  if (name == "sb") return Approach::Sb;
  throw ConfigError("unknown approach '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Output parsing

namespace {

struct Field {
  int slot = -1;  // 0..2
  bool feedback = false;
};

std::string_view strip_decoration(std::string_view line) {
  while (!line.empty() && (line.front() == ' ' || line.front() == '\t' || line.front() == '*' ||
                           line.front() == '#' || line.front() == '-' || line.front() == '>')) {
    line.remove_prefix(1);
  }
  return line;
}

const std::regex& label_re() {
  static const std::regex re(R"(^distractor\s*([1-3])\s*(feedback)?\s*\**\s*:\s*\**\s*(.*)$)",
                             std::regex::icase | std::regex::ECMAScript);
  return re;
}

const std::regex& other_label_re() {
  static const std::regex re(R"(^(question|explanation|answer|error\s*\d*|error list)\s*\**\s*:)",
                             std::regex::icase | std::regex::ECMAScript);
  return re;
}

std::string strip_bold(std::string_view s) {
  s = trim(s);
  while (s.size() >= 2 && s.front() == '*' && s.back() == '*') s = trim(s.substr(1, s.size() - 2));
  while (!s.empty() && s.back() == '*') s.remove_suffix(1);
  return std::string(trim(s));
}

}  // namespace

ParsedOutput parse_distractor_output(std::string_view raw) {
  ParsedOutput out;
  std::array<std::optional<std::string>, 3> texts;
  std::array<std::optional<std::string>, 3> feedbacks;
  std::optional<Field> current;
  bool awaiting_text = false;
  std::size_t ignored = 0;

  auto slot_of = [&](const Field& f) -> std::optional<std::string>& {
    return f.feedback ? feedbacks[f.slot] : texts[f.slot];
  };

  for (const auto& raw_line : split_lines(raw)) {
    std::string_view line = trim(raw_line);
    if (line == "[stop]") {
      out.report.push_back("stopped at [stop] delimiter");
      break;
    }
    std::string stripped(strip_decoration(line));
    std::smatch m;
    if (std::regex_match(stripped, m, label_re())) {
      Field f{std::stoi(m[1].str()) - 1, m[2].matched};
      auto& target = slot_of(f);
      std::string label = "Distractor" + std::to_string(f.slot + 1) + (f.feedback ? " Feedback" : "");
      if (target.has_value()) {
        out.report.push_back("duplicate label " + label + " ignored");
        current.reset();
        awaiting_text = false;
        continue;
      }
      target = strip_bold(m[3].str());
      current = f;
      awaiting_text = !f.feedback && target->empty();
      continue;
    }
    if (std::regex_search(stripped, other_label_re())) {
      current.reset();
      awaiting_text = false;
      continue;
    }
    if (line.empty()) {
      // A blank line ends any continuation, except while a label still waits
      // for its value.
      if (!awaiting_text) current.reset();
      continue;
    }
    if (!current) {
      ++ignored;
      continue;
    }
    auto& target = slot_of(*current);
    if (current->feedback) {
      if (!target->empty()) *target += '\n';
      *target += std::string(line);
    } else if (awaiting_text) {
      *target = strip_bold(line);
      awaiting_text = false;
      current.reset();
    } else {
      ++ignored;
      current.reset();
    }
  }
  if (ignored > 0) out.report.push_back("ignored " + std::to_string(ignored) + " unlabelled line(s)");

  for (int k = 0; k < 3; ++k) {
    auto& c = out.candidates[k];
    if (feedbacks[k] && !trim(*feedbacks[k]).empty()) c.feedback = std::string(trim(*feedbacks[k]));
    if (texts[k] && !trim(*texts[k]).empty()) {
      c.text = std::string(trim(*texts[k]));
    } else {
      out.report.push_back("Distractor" + std::to_string(k + 1) + " missing");
    }
  }
  return out;
}

CandidateTriple finalize_candidates(const CandidateTriple& parsed, std::string_view key) {
  CandidateTriple out = parsed;
  const std::string key_norm = normalize_text(key);
  std::unordered_set<std::string> seen;
  for (auto& c : out) {
    if (!c.text) continue;
    std::string n = normalize_text(*c.text);
    if (n.empty() || n == key_norm || !seen.insert(n).second) c = DistractorCandidate{};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error pool

std::vector<ErrorExplanation> load_error_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read error pool " + path.string());
  std::vector<ErrorExplanation> pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'topic<TAB>explanation'");
    }
    ErrorExplanation e{std::string(trim(line.substr(0, tab))), std::string(trim(line.substr(tab + 1)))};
    if (e.text.empty() || e.topic.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty topic or explanation");
    }
    pool.push_back(std::move(e));
  }
  return pool;
}

std::vector<ErrorExplanation> errors_for_topic(const Mcq& target, std::span<const ErrorExplanation> pool) {
  for (TopicLevel level : {TopicLevel::Fine, TopicLevel::Middle, TopicLevel::Coarse}) {
    const std::string topic = normalize_text(target.topic(level));
    std::vector<ErrorExplanation> matches;
    for (const auto& e : pool) {
      if (normalize_text(e.topic) == topic) matches.push_back(e);
    }
    if (!matches.empty()) return matches;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Config

json GenerationConfig::to_json() const {
  json j{{"approach", dgen::to_string(approach)},
         {"model", model},
         {"decoding",
          {{"temperature", decoding.temperature},
           {"max_tokens", decoding.max_tokens},
           {"top_p", decoding.top_p},
           {"n", decoding.n_samples}}}};
  if (system_prompt) j["system_prompt"] = *system_prompt;
  if (!inputs_digest.empty()) j["inputs_digest"] = inputs_digest;
  if (approach != Approach::Sb) j["prompt_mode"] = dgen::to_string(prompt_mode);
  if (approach == Approach::Knn) {
    j["k"] = k;
    j["example_selector"] = example_selector == ExampleSelector::Knn ? "knn" : "random";
    if (example_selector == ExampleSelector::Knn) {
      j["encoding_mode"] = dgen::to_string(encoding_mode);
      j["embedding_provider"] = embedding_provider;
    } else {
      j["seed"] = seed;
    }
    j["exclude_topic_level"] = exclude_topic ? json(static_cast<int>(*exclude_topic)) : json(nullptr);
  }
  if (approach == Approach::Rb) {
    j["error_selector"] = error_selector == ErrorSelector::Llm ? "llm" : "random";
    if (error_selector == ErrorSelector::Random) j["seed"] = seed;
  }
  return j;
}

std::string GenerationConfig::hash() const { return sha256_hex(to_json().dump()); }

GenerationConfig default_config(Approach approach) {
  GenerationConfig c;
  c.approach = approach;
  switch (approach) {
    case Approach::Knn: c.model = "gpt-3.5-turbo"; break;
    case Approach::Cot:
    case Approach::Rb: c.model = "gpt-4"; break;
    case Approach::Ft:
    case Approach::Sb: break;  // hosted fine-tuned model ids must be given
  }
  if (approach == Approach::Sb) c.decoding = DecodingConfig::sampling(20, 1.0);
  return c;
}

// ---------------------------------------------------------------------------
// Results

std::array<std::optional<std::string>, 3> GenerationResult::texts() const {
  return {candidates[0].text, candidates[1].text, candidates[2].text};
}

namespace {

json opt(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> opt_from(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

json to_json(const GenerationResult& r) {
  json candidates = json::array();
  for (const auto& c : r.candidates) candidates.push_back({{"text", opt(c.text)}, {"feedback", opt(c.feedback)}});
  const auto& p = r.provenance;
  return {{"mcq_id", r.mcq_id},
          {"approach", to_string(r.approach)},
          {"config_hash", r.config_hash},
          {"candidates", std::move(candidates)},
          {"raw_output", r.raw_output},
          {"provenance",
           {{"prompt_key", p.prompt_key},
            {"model", p.model},
            {"example_ids", p.example_ids},
            {"similarities", p.similarities},
            {"errors", p.errors},
            {"samples", p.samples},
            {"flags", p.flags}}}};
}

GenerationResult generation_result_from_json(const json& j) {
  try {
    GenerationResult r;
    r.mcq_id = j.at("mcq_id").get<std::string>();
    r.approach = parse_approach(j.at("approach").get<std::string>());
    r.config_hash = j.at("config_hash").get<std::string>();
    const auto& cs = j.at("candidates");
    if (cs.size() != 3) throw DataError("result for '" + r.mcq_id + "' must hold exactly 3 candidates");
    for (std::size_t i = 0; i < 3; ++i) {
      r.candidates[i].text = opt_from(cs[i], "text");
      r.candidates[i].feedback = opt_from(cs[i], "feedback");
    }
    r.raw_output = j.value("raw_output", "");
    if (auto it = j.find("provenance"); it != j.end()) {
      const auto& p = *it;
      r.provenance.prompt_key = p.value("prompt_key", "");
      r.provenance.model = p.value("model", "");
      r.provenance.example_ids = p.value("example_ids", std::vector<std::string>{});
      r.provenance.similarities = p.value("similarities", std::vector<double>{});
      r.provenance.errors = p.value("errors", std::vector<std::string>{});
      r.provenance.samples = p.value("samples", std::vector<std::string>{});
      r.provenance.flags = p.value("flags", std::vector<std::string>{});
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed generation result: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sampling approach

std::string clean_sampled_answer(std::string_view sample) {
  std::string_view s = trim(sample);
  if (starts_with_icase(s, "answer:")) s = trim(s.substr(7));
  return std::string(s);
}

CandidateTriple candidates_from_samples(std::span<const std::string> samples, std::string_view key) {
  CandidateTriple out;
  const std::string key_norm = normalize_text(key);
  std::unordered_set<std::string> seen;
  std::size_t filled = 0;
  for (const auto& raw : samples) {
    if (filled == 3) break;
    std::string answer = clean_sampled_answer(raw);
    std::string n = normalize_text(answer);
    if (n.empty() || n == key_norm || !seen.insert(n).second) continue;
    out[filled++].text = std::move(answer);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration

GenerationResult generate(const Mcq& target, const GenerationConfig& config, const GenerationDeps& deps) {
  if (!deps.llm || !deps.templates) throw ConfigError("generation needs an llm client and templates");
  if (config.model.empty()) {
    throw ConfigError(std::string("approach '") + to_string(config.approach) + "' needs a model id");
  }

  GenerationResult result;
  result.mcq_id = target.id;
  result.approach = config.approach;
  result.config_hash = config.hash();
  result.provenance.model = config.model;
  auto& prov = result.provenance;
  const TemplateSet& templates = *deps.templates;

  RenderedPrompt prompt;
  switch (config.approach) {
    case Approach::Knn: {
      std::vector<const Mcq*> examples;
      if (config.example_selector == ExampleSelector::Knn) {
        if (!deps.index || !deps.embed_target) throw ConfigError("kNN selection needs an embedding index");
        auto neighbors = deps.index->select(target, deps.embed_target(target), config.k, config.exclude_topic);
        for (const auto& n : neighbors) {
          examples.push_back(&deps.index->at(n.pool_index));
          prov.example_ids.push_back(n.mcq_id);
          prov.similarities.push_back(n.similarity);
        }
      } else {
        std::vector<const Mcq*> eligible;
        const std::optional<std::string> topic =
            config.exclude_topic ? std::optional(normalize_text(target.topic(*config.exclude_topic))) : std::nullopt;
        for (const auto& q : deps.example_pool) {
          if (q.id == target.id) continue;
          if (topic && normalize_text(q.topic(*config.exclude_topic)) == *topic) continue;
          eligible.push_back(&q);
        }
        auto picked = random_select(eligible.size(), std::min(config.k, eligible.size()),
                                    derive_seed(config.seed, target.id));
        for (auto i : picked) {
          examples.push_back(eligible[i]);
          prov.example_ids.push_back(eligible[i]->id);
        }
      }
      if (examples.empty()) {
        prov.flags.push_back("no_examples_after_filtering");
        log_event(LogLevel::Warn, "generate", target.id, "no_examples");
        return result;
      }
      prompt = templates.render_knn(target, examples, config.prompt_mode);
      break;
    }
    case Approach::Cot:
      prompt = templates.render_cot(target, config.prompt_mode);
      break;
    case Approach::Rb: {
      auto topic_pool = errors_for_topic(target, deps.error_pool);
      if (topic_pool.empty()) prov.flags.push_back("empty_error_pool");
      if (config.error_selector == ErrorSelector::Random && topic_pool.size() > 3) {
        auto picked = random_select(topic_pool.size(), 3, derive_seed(config.seed, target.id));
        std::vector<ErrorExplanation> chosen;
        for (auto i : picked) chosen.push_back(topic_pool[i]);
        topic_pool = std::move(chosen);
      }
      for (const auto& e : topic_pool) prov.errors.push_back(e.text);
      prompt = templates.render_rb(target, topic_pool, config.prompt_mode);
      break;
    }
    case Approach::Ft:
      prompt = templates.render_ft_input(target, config.prompt_mode);
      break;
    case Approach::Sb:
      prompt = templates.render_open_answer(target);
      break;
  }
  for (auto& note : prompt.notes) prov.flags.push_back(std::move(note));

  ChatRequest request;
  request.model = config.model;
  if (config.system_prompt) request.messages.push_back({"system", *config.system_prompt});
  request.messages.push_back({"user", prompt.user});
  request.config = config.decoding;

  LlmClient::Result response;
  try {
    response = deps.llm->complete(request);
  } catch (const RefusalError& e) {
    prov.prompt_key = cache_key(request);
    prov.flags.push_back("refused");
    log_event(LogLevel::Warn, "generate", target.id, "refused", e.what());
    return result;
  }
  prov.prompt_key = response.key;

  if (config.approach == Approach::Sb) {
    prov.samples = response.texts;
    result.raw_output = join(response.texts, "\n");
    result.candidates = candidates_from_samples(response.texts, target.key);
  } else {
    result.raw_output = response.texts.empty() ? "" : response.texts.front();
    ParsedOutput parsed = parse_distractor_output(result.raw_output);
    for (auto& r : parsed.report) prov.flags.push_back("parse: " + r);
    result.candidates = finalize_candidates(parsed.candidates, target.key);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Exports

std::vector<json> export_ft_dataset(std::span<const Mcq> train, PromptContentMode mode,
                                    const TemplateSet& templates) {
  if (train.empty()) throw DataError("fine-tuning export needs at least one mcq");
  std::vector<json> records;
  records.reserve(train.size());
  for (const auto& q : train) {
    records.push_back(
        {{"messages",
          {{{"role", "user"}, {"content", templates.render_ft_input(q, mode).user}},
           {{"role", "assistant"}, {"content", templates.render_distractor_block(q.distractors, mode)}}}}});
  }
  return records;
}

std::vector<json> export_sb_dataset(std::span<const Mcq> train, const TemplateSet& templates) {
  if (train.empty()) throw DataError("answer-model export needs at least one mcq");
  std::vector<json> records;
  for (const auto& q : train) {
    records.push_back({{"messages",
                        {{{"role", "user"}, {"content", templates.render_open_answer(q).user}},
                         {{"role", "assistant"}, {"content", q.key}}}}});
  }
  return records;
}

ResultsStore::ResultsStore(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(path_)) {
    records_ = load_results(path_);
    for (const auto& r : records_) keys_.emplace(r.mcq_id, r.approach, r.config_hash);
  }
}

bool ResultsStore::contains(const std::string& mcq_id, Approach approach, const std::string& config_hash) const {
  std::lock_guard lock(mu_);
  return keys_.count({mcq_id, approach, config_hash}) > 0;
}

void ResultsStore::append(const GenerationResult& result) {
  std::string line = to_json(result).dump() + "\n";
  std::lock_guard lock(mu_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw DataError("cannot open results file " + path_.string());
  auto written = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size())) throw DataError("short write to " + path_.string());
  records_.push_back(result);
  keys_.emplace(result.mcq_id, result.approach, result.config_hash);
}

std::vector<GenerationResult> ResultsStore::all() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<GenerationResult> load_results(const std::filesystem::path& path) {
  std::vector<GenerationResult> results;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    try {
      results.push_back(generation_result_from_json(j));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return results;
}

}  // namespace dgen
