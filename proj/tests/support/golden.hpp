#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dgen/corpus.hpp"
#include "dgen/io.hpp"
#include "dgen/promptkit.hpp"

namespace dgen::testing {

inline std::filesystem::path source_dir() { return DGEN_SOURCE_DIR; }
inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

struct GoldenCase {
  std::string file;
  std::string rendered;
};

// Every golden prompt paired with what the builtin templates render for the
// golden inputs (one target, two kNN examples, two error explanations).
inline std::vector<GoldenCase> golden_cases() {
  auto mcqs = load_corpus(golden_dir() / "inputs.jsonl");
  const Mcq& target = mcqs.at(0);
  std::vector<const Mcq*> examples{&mcqs.at(1), &mcqs.at(2)};
  std::vector<ErrorExplanation> errors{{"Times Tables", "Adds instead of multiplies"},
                                       {"Times Tables", "Writes the two digits next to each other"}};
  auto templates = TemplateSet::builtin();
  std::vector<GoldenCase> out;
  for (auto mode : {PromptContentMode::All, PromptContentMode::Key, PromptContentMode::None}) {
    std::string suffix = std::string("_") + to_string(mode) + ".txt";
    out.push_back({"cot" + suffix, templates.render_cot(target, mode).user});
    out.push_back({"rb" + suffix, templates.render_rb(target, errors, mode).user});
    out.push_back({"knn" + suffix, templates.render_knn(target, examples, mode).user});
  }
  out.push_back({"rank.txt", templates.render_rank(target.stem, target.key, target.key_explanation,
                                                   target.distractors[0].text, target.distractors[1].text)
                                 .user});
  out.push_back({"rank_example.txt",
                 templates
                     .render_rank("$\\frac{3}{5} $ of 50 $= \\frac{6}{10}$ of $\\square$", "50",
                                  std::string("3/5 and 6/10 are equivalent, so 3/5 of 50 is the same as 6/10 of 50."),
                                  "30", "18")
                     .user});
  return out;
}

inline std::string golden_text(const std::string& file) { return read_file(golden_dir() / file); }

}  // namespace dgen::testing
