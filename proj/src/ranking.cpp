#include "dgen/ranking.hpp"

#include <regex>
#include <unordered_map>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/log.hpp"
#include "dgen/parallel.hpp"
#include "dgen/text.hpp"

namespace dgen {

using nlohmann::json;

PairDataset build_pair_dataset(std::span<const Mcq> corpus) {
  PairDataset out;
  for (const auto& mcq : corpus) {
    if (!mcq.selection) {
      ++out.skipped_no_selection;
      continue;
    }
    const auto& f = mcq.selection->distractors;
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) {
        if (f[i] == f[j]) {
          ++out.skipped_ties;
          continue;
        }
        const double margin = std::abs(f[i] - f[j]);
        const std::string& a = mcq.distractors[i].text;
        const std::string& b = mcq.distractors[j].text;
        const bool a_wins = f[i] > f[j];
        out.pairs.push_back({mcq.id, a, b, a_wins ? 1 : 2, margin});
        out.pairs.push_back({mcq.id, b, a, a_wins ? 2 : 1, margin});
      }
    }
  }
  return out;
}

json to_json(const PreferencePair& p) {
  return {{"mcq_id", p.mcq_id}, {"d1", p.d1}, {"d2", p.d2}, {"label", p.label}, {"margin", p.margin}};
}

PreferencePair preference_pair_from_json(const json& j) {
  try {
    PreferencePair p;
    p.mcq_id = j.at("mcq_id").get<std::string>();
    p.d1 = j.at("d1").get<std::string>();
    p.d2 = j.at("d2").get<std::string>();
    p.label = j.at("label").get<int>();
    p.margin = j.at("margin").get<double>();
    if (p.label != 1 && p.label != 2) throw DataError("pair label must be 1 or 2");
    if (p.margin < 0.0 || p.margin > 1.0) throw DataError("pair margin outside [0,1]");
    return p;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed preference pair: ") + e.what());
  }
}

RankContext RankContext::of(const Mcq& mcq) { return {mcq.id, mcq.stem, mcq.key, mcq.key_explanation}; }

Preferred RandomRanker::prefer(const RankContext& context, const std::string& first, const std::string& second) {
  std::string label = context.mcq_id;
  label += '\x1f';
  label += first;
  label += '\x1f';
  label += second;
  return (derive_seed(seed_, label) & 1U) == 0 ? Preferred::First : Preferred::Second;
}

SelectionRanker::SelectionRanker(std::span<const Mcq> corpus) {
  for (const auto& mcq : corpus) {
    if (!mcq.selection) continue;
    auto& table = fractions_[mcq.id];
    for (int i = 0; i < 3; ++i) table[normalize_text(mcq.distractors[i].text)] = mcq.selection->distractors[i];
    table.emplace(normalize_text(mcq.key), mcq.selection->key);
  }
}

Preferred SelectionRanker::prefer(const RankContext& context, const std::string& first, const std::string& second) {
  auto lookup = [&](const std::string& text) {
    auto it = fractions_.find(context.mcq_id);
    if (it == fractions_.end()) return 0.0;
    auto jt = it->second.find(normalize_text(text));
    return jt == it->second.end() ? 0.0 : jt->second;
  };
  return lookup(first) >= lookup(second) ? Preferred::First : Preferred::Second;
}

LlmRanker::LlmRanker(LlmClient& client, const TemplateSet& templates, std::string model)
    : client_(client), templates_(templates), model_(std::move(model)) {
  if (model_.empty()) throw ConfigError("llm ranker needs a model id");
}

Preferred LlmRanker::prefer(const RankContext& context, const std::string& first, const std::string& second) {
  RenderedPrompt prompt = templates_.render_rank(context.stem, context.key, context.explanation, first, second);
  ChatRequest request{model_, {}, DecodingConfig::greedy()};
  if (prompt.system) request.messages.push_back({"system", *prompt.system});
  request.messages.push_back({"user", prompt.user});
  auto reply = client_.complete(request).texts.front();
  if (auto verdict = parse_preferred(reply)) return *verdict;
  {
    std::lock_guard lock(mu_);
    ++unparseable_;
  }
  log_event(LogLevel::Warn, "rank", context.mcq_id, "unparseable_verdict", reply);
  return Preferred::Second;
}

std::size_t LlmRanker::unparseable() const {
  std::lock_guard lock(mu_);
  return unparseable_;
}

Preferred CachingRanker::prefer(const RankContext& context, const std::string& first, const std::string& second) {
  auto key = std::make_tuple(context.mcq_id, first, second);
  {
    std::lock_guard lock(mu_);
    if (auto it = verdicts_.find(key); it != verdicts_.end()) return it->second;
  }
  Preferred verdict = inner_.prefer(context, first, second);
  std::lock_guard lock(mu_);
  auto [it, inserted] = verdicts_.emplace(std::move(key), verdict);
  if (inserted) ++forwarded_;
  return it->second;
}

std::optional<Preferred> parse_preferred(std::string_view reply) {
  static const std::regex labelled(R"(preferred\s*answer\s*:?\s*\**\s*(?:option\s*)?\(?([ab])\b)",
                                   std::regex::icase);
  static const std::regex bare(R"(^\s*\**\s*(?:option\s*)?\(?([AB])\b)");
  std::string text(reply);
  std::smatch m;
  if (std::regex_search(text, m, labelled) || std::regex_search(text, m, bare)) {
    char c = m[1].str()[0];
    return (c == 'A' || c == 'a') ? Preferred::First : Preferred::Second;
  }
  return std::nullopt;
}

namespace {

std::unordered_map<std::string, const Mcq*> index_by_id(std::span<const Mcq> corpus) {
  std::unordered_map<std::string, const Mcq*> out;
  for (const auto& m : corpus) out.emplace(m.id, &m);
  return out;
}

const Mcq& require(const std::unordered_map<std::string, const Mcq*>& index, const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) throw DataError("pair refers to unknown mcq '" + id + "'");
  return *it->second;
}

}  // namespace

RankerAccuracy ranker_accuracy(std::span<const PreferencePair> pairs, std::span<const Mcq> corpus, Ranker& ranker,
                               std::optional<double> margin_threshold) {
  auto index = index_by_id(corpus);
  RankerAccuracy out;
  for (const auto& pair : pairs) {
    if (margin_threshold && !(pair.margin > *margin_threshold)) continue;
    const Mcq& mcq = require(index, pair.mcq_id);
    Preferred verdict = ranker.prefer(RankContext::of(mcq), pair.d1, pair.d2);
    ++out.evaluated;
    if ((verdict == Preferred::First) == (pair.label == 1)) ++out.correct;
  }
  if (out.evaluated == 0) throw DataError("no preference pairs left to evaluate");
  out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.evaluated);
  return out;
}

PreferenceScoreReport preference_score(std::span<const PreferenceItem> items, Ranker& ranker, std::size_t workers) {
  if (items.empty()) throw DataError("preference score needs at least one mcq");
  struct Partial {
    double sum = 0.0;
    std::size_t ties = 0, nulls = 0, ranked = 0;
  };
  std::vector<Partial> parts(items.size());

  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& item = items[i];
    Partial& part = parts[i];
    std::array<std::string, 3> human_norm;
    for (int b = 0; b < 3; ++b) human_norm[b] = normalize_text(item.human[b]);
    for (int a = 0; a < 3; ++a) {
      const auto& gen = item.generated[a];
      if (!gen) {
        // r(null, h) = 0 and r(h, null) = 1
        part.nulls += 2 * 3;
        continue;
      }
      const std::string gen_norm = normalize_text(*gen);
      for (int b = 0; b < 3; ++b) {
        if (gen_norm == human_norm[b]) {
          part.sum += 0.5 + (1.0 - 0.5);
          part.ties += 2;
          continue;
        }
        double forward = ranker.prefer(item.context, *gen, item.human[b]) == Preferred::First ? 1.0 : 0.0;
        double backward = ranker.prefer(item.context, item.human[b], *gen) == Preferred::First ? 1.0 : 0.0;
        part.sum += forward + (1.0 - backward);
        part.ranked += 2;
      }
    }
  });

  PreferenceScoreReport report;
  double total = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    total += parts[i].sum;
    report.ties += parts[i].ties;
    report.null_terms += parts[i].nulls;
    report.ranker_terms += parts[i].ranked;
    report.per_mcq.emplace_back(items[i].context.mcq_id, parts[i].sum / 18.0);
  }
  report.score = total / (18.0 * static_cast<double>(items.size()));
  return report;
}

json to_json(const PreferenceScoreReport& r) {
  json per = json::array();
  for (const auto& [id, s] : r.per_mcq) per.push_back({{"mcq_id", id}, {"score", s}});
  return {{"score", r.score},
          {"mcqs", r.per_mcq.size()},
          {"ties", r.ties},
          {"null_terms", r.null_terms},
          {"ranker_terms", r.ranker_terms},
          {"per_mcq", per}};
}

std::vector<json> export_ranker_training(std::span<const PreferencePair> pairs, std::span<const Mcq> corpus,
                                         const TemplateSet& templates) {
  if (pairs.empty()) throw DataError("no preference pairs to export");
  auto index = index_by_id(corpus);
  std::vector<json> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) {
    const Mcq& mcq = require(index, pair.mcq_id);
    RenderedPrompt prompt = templates.render_rank(mcq.stem, mcq.key, mcq.key_explanation, pair.d1, pair.d2);
    json messages = json::array();
    if (prompt.system) messages.push_back({{"role", "system"}, {"content", *prompt.system}});
    messages.push_back({{"role", "user"}, {"content", prompt.user}});
    messages.push_back(
        {{"role", "assistant"}, {"content", std::string("Preferred Answer: ") + (pair.label == 1 ? "A" : "B")}});
    out.push_back({{"messages", messages}});
  }
  return out;
}

std::optional<RankerRecordContent> parse_ranker_record(const json& record) {
  if (!record.is_object() || !record.contains("messages") || !record["messages"].is_array()) return std::nullopt;
  std::string user, assistant;
  for (const auto& m : record["messages"]) {
    if (!m.is_object() || !m.contains("role") || !m.contains("content")) return std::nullopt;
    if (!m["role"].is_string() || !m["content"].is_string()) return std::nullopt;
    if (m["role"] == "user") user = m["content"].get<std::string>();
    if (m["role"] == "assistant") assistant = m["content"].get<std::string>();
  }
  const std::string a_label = "\nOption A: ";
  const std::string b_label = "\nOption B: ";
  const std::string closing = "\nWhich incorrect option";
  auto a = user.find(a_label);
  auto b = user.find(b_label, a == std::string::npos ? 0 : a);
  auto c = user.find(closing, b == std::string::npos ? 0 : b);
  if (a == std::string::npos || b == std::string::npos || c == std::string::npos) return std::nullopt;
  auto verdict = parse_preferred(assistant);
  if (!verdict) return std::nullopt;
  RankerRecordContent out;
  out.option_a = user.substr(a + a_label.size(), b - a - a_label.size());
  out.option_b = user.substr(b + b_label.size(), c - b - b_label.size());
  out.label = *verdict == Preferred::First ? 1 : 2;
  return out;
}

}  // namespace dgen
