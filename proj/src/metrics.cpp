#include "dgen/metrics.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/log.hpp"
#include "dgen/parallel.hpp"
#include "dgen/rng.hpp"
#include "dgen/text.hpp"

namespace dgen {

using nlohmann::json;

MatchReport match_distractors(const std::array<std::string, 3>& human, const OptionalTriple& generated) {
  MatchReport report;
  std::array<std::string, 3> h;
  for (std::size_t j = 0; j < 3; ++j) h[j] = normalize_text(human[j]);
  std::array<bool, 3> used{};
  int matched = 0;
  for (int i = 0; i < 3; ++i) {
    if (!generated[i]) {
      ++report.null_slots;
      continue;
    }
    const std::string g = normalize_text(*generated[i]);
    for (int j = 0; j < 3; ++j) {
      if (!used[j] && h[j] == g) {
        used[j] = true;
        report.matched_pairs.emplace_back(i, j);
        ++matched;
        break;
      }
    }
  }
  report.exact = matched == 3 ? 1 : 0;
  report.partial = matched >= 1 ? 1 : 0;
  report.proportional = matched / 3.0;
  return report;
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

MetricSummary aggregate(std::span<const MatchReport> reports) {
  if (reports.empty()) throw DataError("cannot aggregate an empty set of match reports");
  MetricSummary s;
  s.approach = reports.front().approach;
  s.count = reports.size();
  double e = 0, p = 0, n = 0;
  for (const auto& r : reports) {
    e += r.exact;
    p += r.partial;
    n += r.proportional;
  }
  const double count = static_cast<double>(reports.size());
  s.exact = round2(100.0 * e / count);
  s.partial = round2(100.0 * p / count);
  s.proportional = round2(100.0 * n / count);
  return s;
}

json to_json(const MatchReport& r) {
  json pairs = json::array();
  for (auto [c, h] : r.matched_pairs) pairs.push_back({c, h});
  return {{"mcq_id", r.mcq_id},   {"approach", r.approach},         {"matched_pairs", pairs},
          {"exact", r.exact},     {"partial", r.partial},           {"proportional", r.proportional},
          {"null_slots", r.null_slots}};
}

json to_json(const MetricSummary& s) {
  return {{"approach", s.approach},
          {"count", s.count},
          {"exact", s.exact},
          {"partial", s.partial},
          {"proportional", s.proportional}};
}

std::string render_metric_table(std::span<const MetricSummary> summaries) {
  std::string out = "| Approach | Exact | Partial | Proportional |\n|---|---:|---:|---:|\n";
  char buf[256];
  for (const auto& s : summaries) {
    std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f |\n", s.approach.c_str(), s.exact, s.partial,
                  s.proportional);
    out += buf;
  }
  return out;
}

std::optional<int> parse_option_letter(std::string_view reply) {
  auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
  for (std::size_t i = 0; i < reply.size(); ++i) {
    char c = reply[i];
    if (c < 'A' || c > 'D') continue;
    bool left_ok = i == 0 || !word_char(reply[i - 1]);
    bool right_ok = i + 1 == reply.size() || !word_char(reply[i + 1]);
    if (left_ok && right_ok) return c - 'A';
  }
  return std::nullopt;
}

std::pair<std::array<std::string, 4>, int> shuffled_options(const SolveItem& item, std::uint64_t seed) {
  const std::array<std::string, 4> base{item.mcq->key, item.distractors[0], item.distractors[1],
                                        item.distractors[2]};
  auto perm = seeded_permutation(4, derive_seed(seed, item.mcq->id));
  std::array<std::string, 4> options;
  int key_index = -1;
  for (std::size_t i = 0; i < 4; ++i) {
    options[i] = base[perm[i]];
    if (perm[i] == 0) key_index = static_cast<int>(i);
  }
  return {options, key_index};
}

SolveRateReport solve_rate(std::span<const SolveItem> items, LlmClient& client, const TemplateSet& templates,
                           const std::string& solver_model, std::uint64_t seed, std::string source_label,
                           std::size_t excluded, std::size_t workers) {
  if (items.empty()) throw DataError("solve rate needs at least one mcq");
  if (solver_model.empty()) throw ConfigError("solve rate needs a solver model id");
  SolveRateReport report;
  report.source = std::move(source_label);
  report.total = items.size();
  report.excluded = excluded;

  std::vector<int> outcome(items.size(), 0);  // 1 correct, 0 wrong, -1 unparseable
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& item = items[i];
    auto [options, key_index] = shuffled_options(item, seed);
    RenderedPrompt prompt = templates.render_answer(*item.mcq, options);
    ChatRequest request{solver_model, {{"user", prompt.user}}, DecodingConfig::greedy()};
    auto reply = client.complete(request).texts.front();
    auto letter = parse_option_letter(reply);
    if (!letter) {
      outcome[i] = -1;
      log_event(LogLevel::Warn, "solve-rate", item.mcq->id, "unparseable_reply", reply);
    } else {
      outcome[i] = *letter == key_index ? 1 : 0;
    }
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (outcome[i] == 1) ++report.correct;
    if (outcome[i] == -1) {
      ++report.unparseable;
      report.unparseable_ids.push_back(items[i].mcq->id);
    }
  }
  report.rate = static_cast<double>(report.correct) / static_cast<double>(report.total);
  return report;
}

json to_json(const SolveRateReport& r) {
  return {{"source", r.source},
          {"total", r.total},
          {"correct", r.correct},
          {"excluded", r.excluded},
          {"excluded_ids", r.excluded_ids},
          {"unparseable", r.unparseable},
          {"unparseable_ids", r.unparseable_ids},
          {"rate", r.rate},
          {"rate_percent", round2(100.0 * r.rate)}};
}

}  // namespace dgen
