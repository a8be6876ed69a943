#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgen/corpus.hpp"

namespace dgen {

// How much of each MCQ appears in a prompt. All carries key, explanation and
// feedback; Key drops feedback and explanation; None also drops the key.
enum class PromptContentMode { All, Key, None };

const char* to_string(PromptContentMode mode);
PromptContentMode parse_prompt_mode(std::string_view name);

enum class TemplateId { Knn, Cot, Rb, Answer, Rank };

const char* to_string(TemplateId id);

struct RenderedPrompt {
  std::optional<std::string> system;
  std::string user;
  TemplateId template_id = TemplateId::Cot;
  PromptContentMode content_mode = PromptContentMode::All;
  // Non-fatal rendering notes, e.g. an example missing feedback in All mode.
  std::vector<std::string> notes;
};

struct ErrorExplanation {
  std::string topic;
  std::string text;

  bool operator==(const ErrorExplanation&) const = default;
};

// Template text with `<name>` placeholders and `{?flag}...{/flag}` sections
// that are kept only when the flag is set. Lines are right-trimmed after
// substitution.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string source);

  std::string render(const std::map<std::string, std::string>& values,
                     const std::map<std::string, bool>& flags) const;
  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

// The fixed set of template files, by file name:
//   cot.txt rb.txt knn_example.txt knn_target.txt distractors.txt
//   answer.txt open_answer.txt rank.txt
class TemplateSet {
 public:
  // Compiled-in copies of templates/.
  static TemplateSet builtin();
  // Files missing from `dir` fall back to the builtin version.
  static TemplateSet from_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(const std::string& name) const;
  // SHA-256 over every template's name and source.
  std::string digest() const;

  RenderedPrompt render_cot(const Mcq& target, PromptContentMode mode) const;
  RenderedPrompt render_knn(const Mcq& target, std::span<const Mcq* const> examples,
                            PromptContentMode mode) const;
  RenderedPrompt render_rb(const Mcq& target, std::span<const ErrorExplanation> error_pool,
                           PromptContentMode mode) const;
  // Target block alone; used as the fine-tuned model's input.
  RenderedPrompt render_ft_input(const Mcq& target, PromptContentMode mode) const;
  // Labelled distractor block, the format every generator is asked to emit.
  std::string render_distractor_block(std::span<const DistractorEntry> distractors,
                                      PromptContentMode mode) const;
  // Lettered options A-D; `options` must contain the key.
  RenderedPrompt render_answer(const Mcq& mcq, std::span<const std::string> options) const;
  // Free-response question, as seen by an answer-sampling model.
  RenderedPrompt render_open_answer(const Mcq& mcq) const;
  RenderedPrompt render_rank(std::string_view stem, std::string_view key,
                             const std::optional<std::string>& explanation,
                             std::string_view option_a, std::string_view option_b) const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

inline constexpr std::string_view kStopDelimiter = "[stop]";
inline constexpr std::array<char, 4> kOptionLetters{'A', 'B', 'C', 'D'};

}  // namespace dgen
