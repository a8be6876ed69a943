#include "dgen/promptkit.hpp"

#include <cctype>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/io.hpp"
#include "dgen/text.hpp"

namespace dgen {

namespace detail {
const std::map<std::string, std::string>& builtin_template_sources();
}

const char* to_string(PromptContentMode mode) {
  switch (mode) {
    case PromptContentMode::All: return "all";
    case PromptContentMode::Key: return "key";
    case PromptContentMode::None: return "none";
  }
  return "all";
}

PromptContentMode parse_prompt_mode(std::string_view name) {
  if (name == "all") return PromptContentMode::All;
  if (name == "key") return PromptContentMode::Key;
  if (name == "none") return PromptContentMode::None;
  throw ConfigError("unknown prompt mode '" + std::string(name) + "'");
}

const char* to_string(TemplateId id) {
  switch (id) {
    case TemplateId::Knn: return "knn";
    case TemplateId::Cot: return "cot";
    case TemplateId::Rb: return "rb";
    case TemplateId::Answer: return "answer";
    case TemplateId::Rank: return "rank";
  }
  return "knn";
}

namespace {

using Values = std::map<std::string, std::string>;
using Flags = std::map<std::string, bool>;

std::string expand_sections(std::string_view src, const Flags& flags) {
  std::string out;
  std::size_t pos = 0;
  while (pos < src.size()) {
    std::size_t open = src.find("{?", pos);
    if (open == std::string_view::npos) {
      out.append(src.substr(pos));
      break;
    }
    out.append(src.substr(pos, open - pos));
    std::size_t name_end = src.find('}', open);
    if (name_end == std::string_view::npos) throw ConfigError("template: unterminated section tag");
    std::string name(src.substr(open + 2, name_end - open - 2));
    const std::string open_tag = "{?" + name + "}";
    const std::string close_tag = "{/" + name + "}";
    // Find the matching close tag, allowing nested sections of the same name.
    std::size_t depth = 1;
    std::size_t scan = name_end + 1;
    std::size_t close = std::string_view::npos;
    while (depth > 0) {
      std::size_t next_open = src.find(open_tag, scan);
      std::size_t next_close = src.find(close_tag, scan);
      if (next_close == std::string_view::npos) throw ConfigError("template: section '" + name + "' not closed");
      if (next_open != std::string_view::npos && next_open < next_close) {
        ++depth;
        scan = next_open + open_tag.size();
      } else {
        --depth;
        close = next_close;
        scan = next_close + close_tag.size();
      }
    }
    auto flag = flags.find(name);
    if (flag == flags.end()) throw ConfigError("template: unknown section flag '" + name + "'");
    if (flag->second) out += expand_sections(src.substr(name_end + 1, close - name_end - 1), flags);
    pos = close + close_tag.size();
  }
  return out;
}

bool placeholder_char(char c) {
  return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == ' ';
}

std::string substitute(std::string_view src, const Values& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < src.size()) {
    std::size_t lt = src.find('<', pos);
    if (lt == std::string_view::npos) {
      out.append(src.substr(pos));
      break;
    }
    out.append(src.substr(pos, lt - pos));
    std::size_t end = lt + 1;
    while (end < src.size() && placeholder_char(src[end])) ++end;
    if (end < src.size() && src[end] == '>' && end > lt + 1) {
      std::string name(src.substr(lt + 1, end - lt - 1));
      auto it = values.find(name);
      if (it == values.end()) throw ConfigError("template: no value for placeholder <" + name + ">");
      out += it->second;
      pos = end + 1;
    } else {
      out += '<';
      pos = lt + 1;
    }
  }
  return out;
}

std::string tidy(const std::string& text) {
  auto lines = split_lines(text);
  for (auto& line : lines) {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return join(lines, "\n");
}

Flags mode_flags(PromptContentMode mode) {
  return {{"feedback", mode == PromptContentMode::All},
          {"explanation", mode == PromptContentMode::All},
          {"answer", mode != PromptContentMode::None}};
}

Values question_values(const Mcq& mcq) {
  return {{"question", mcq.stem},
          {"explanation", mcq.key_explanation.value_or("")},
          {"answer", mcq.key}};
}

void add_distractor_values(Values& values, std::span<const DistractorEntry> distractors) {
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string n = std::to_string(i + 1);
    const DistractorEntry* d = i < distractors.size() ? &distractors[i] : nullptr;
    values["distractor" + n] = d ? d->text : "";
    values["distractor" + n + " feedback"] = d && d->feedback ? *d->feedback : "";
  }
}

void note_missing_explanation(RenderedPrompt& p, const Mcq& mcq, PromptContentMode mode) {
  if (mode == PromptContentMode::All && (!mcq.key_explanation || trim(*mcq.key_explanation).empty())) {
    p.notes.push_back("mcq '" + mcq.id + "' has no key explanation; line rendered empty");
  }
}

}  // namespace

PromptTemplate::PromptTemplate(std::string source) : source_(std::move(source)) {}

std::string PromptTemplate::render(const Values& values, const Flags& flags) const {
  return tidy(substitute(expand_sections(source_, flags), values));
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (const auto& [name, source] : detail::builtin_template_sources()) {
    set.templates_.emplace(name, PromptTemplate(source));
  }
  return set;
}

TemplateSet TemplateSet::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("template directory not found: " + dir.string());
  TemplateSet set = builtin();
  for (auto& [name, tmpl] : set.templates_) {
    auto path = dir / name;
    if (std::filesystem::exists(path)) tmpl = PromptTemplate(read_file(path));
  }
  return set;
}

const PromptTemplate& TemplateSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw ConfigError("missing template " + name);
  return it->second;
}

std::string TemplateSet::digest() const {
  std::string all;
  for (const auto& [name, t] : templates_) {
    all += name;
    all += '\0';
    all += t.source();
    all += '\0';
  }
  return sha256_hex(all);
}

RenderedPrompt TemplateSet::render_cot(const Mcq& target, PromptContentMode mode) const {
  RenderedPrompt p;
  p.template_id = TemplateId::Cot;
  p.content_mode = mode;
  p.user = get("cot.txt").render(question_values(target), mode_flags(mode));
  note_missing_explanation(p, target, mode);
  return p;
}

RenderedPrompt TemplateSet::render_knn(const Mcq& target, std::span<const Mcq* const> examples,
                                       PromptContentMode mode) const {
  if (examples.empty()) throw DataError("kNN prompt for '" + target.id + "' needs at least one example");
  RenderedPrompt p;
  p.template_id = TemplateId::Knn;
  p.content_mode = mode;
  std::vector<std::string> blocks;
  const Flags flags = mode_flags(mode);
  for (const Mcq* ex : examples) {
    Values values = question_values(*ex);
    add_distractor_values(values, ex->distractors);
    blocks.push_back(get("knn_example.txt").render(values, flags));
    note_missing_explanation(p, *ex, mode);
    if (mode == PromptContentMode::All) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (!ex->distractors[i].feedback) {
          p.notes.push_back("example '" + ex->id + "' distractor " + std::to_string(i + 1) +
                            " has no feedback; line rendered empty");
        }
      }
    }
  }
  blocks.push_back(get("knn_target.txt").render(question_values(target), flags));
  note_missing_explanation(p, target, mode);
  p.user = join(blocks, "\n");
  return p;
}

RenderedPrompt TemplateSet::render_rb(const Mcq& target, std::span<const ErrorExplanation> error_pool,
                                      PromptContentMode mode) const {
  RenderedPrompt p;
  p.template_id = TemplateId::Rb;
  p.content_mode = mode;
  Values values = question_values(target);
  std::vector<std::string> errors;
  for (const auto& e : error_pool) errors.push_back(e.text);
  values["error list"] = join(errors, "\n");
  p.user = get("rb.txt").render(values, mode_flags(mode));
  note_missing_explanation(p, target, mode);
  return p;
}

RenderedPrompt TemplateSet::render_ft_input(const Mcq& target, PromptContentMode mode) const {
  RenderedPrompt p;
  p.template_id = TemplateId::Knn;
  p.content_mode = mode;
  p.user = get("knn_target.txt").render(question_values(target), mode_flags(mode));
  return p;
}

std::string TemplateSet::render_distractor_block(std::span<const DistractorEntry> distractors,
                                                 PromptContentMode mode) const {
  Values values;
  add_distractor_values(values, distractors);
  return get("distractors.txt").render(values, mode_flags(mode));
}

RenderedPrompt TemplateSet::render_answer(const Mcq& mcq, std::span<const std::string> options) const {
  if (options.size() != 4) throw DataError("answer prompt needs exactly 4 options");
  bool has_key = false;
  for (const auto& o : options) has_key = has_key || normalized_equal(o, mcq.key);
  if (!has_key) throw DataError("answer prompt for '" + mcq.id + "': key absent from options");
  RenderedPrompt p;
  p.template_id = TemplateId::Answer;
  p.content_mode = PromptContentMode::None;
  Values values{{"question", mcq.stem},
                {"option a", options[0]},
                {"option b", options[1]},
                {"option c", options[2]},
                {"option d", options[3]}};
  p.user = get("answer.txt").render(values, {});
  return p;
}

RenderedPrompt TemplateSet::render_open_answer(const Mcq& mcq) const {
  RenderedPrompt p;
  p.template_id = TemplateId::Answer;
  p.content_mode = PromptContentMode::None;
  p.user = get("open_answer.txt").render({{"question", mcq.stem}}, {});
  return p;
}

RenderedPrompt TemplateSet::render_rank(std::string_view stem, std::string_view key,
                                        const std::optional<std::string>& explanation,
                                        std::string_view option_a, std::string_view option_b) const {
  if (normalized_equal(option_a, option_b)) throw DataError("ranking prompt needs two different options");
  RenderedPrompt p;
  p.template_id = TemplateId::Rank;
  p.content_mode = PromptContentMode::All;
  Values values{{"question", std::string(stem)},
                {"answer", std::string(key)},
                {"explanation", explanation.value_or("")},
                {"option a", std::string(option_a)},
                {"option b", std::string(option_b)}};
  p.user = get("rank.txt").render(values, {});
  return p;
}

}  // namespace dgen
