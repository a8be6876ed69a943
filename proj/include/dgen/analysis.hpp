#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dgen {

enum class Origin { Llm, Human };

const char* to_string(Origin origin);

struct SheetItem {
  std::string mcq_id;
  std::string stem;
  std::vector<std::string> generated;
  std::vector<std::string> human;
};

struct SheetRow {
  int row_id = 0;
  std::string mcq_id;
  std::string stem;
  std::string distractor;
  Origin origin = Origin::Llm;
};

// Per question, generated and human distractors are interleaved by a seeded
// shuffle. Throws DataError when a question's two sides differ in size.
std::vector<SheetRow> build_eval_sheet(std::span<const SheetItem> items, std::uint64_t seed);

// Rater-facing CSV (row_id, question_stem, distractor) and a separate key
// CSV (row_id, mcq_id, origin).
void write_eval_sheet(std::span<const SheetRow> rows, const std::filesystem::path& sheet_csv,
                      const std::filesystem::path& key_csv);

struct RatingRecord {
  int row_id = 0;
  std::string rater_id;
  int validity = 0;
  int plausibility = 0;
};

// Ratings CSV: row_id, rater_id, validity, plausibility (each 1-5).
std::vector<RatingRecord> load_ratings(const std::filesystem::path& path);
std::map<int, Origin> load_origin_key(const std::filesystem::path& path);

// Quadratic weighted kappa on the fixed 1..5 scale. nullopt when expected
// disagreement is zero.
std::optional<double> qwk(std::span<const int> a, std::span<const int> b);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool welch = false;
};

// Independent two-sample t-test, two-tailed. Pooled variance unless welch.
TTestResult students_t_test(std::span<const double> x, std::span<const double> y,
                            bool welch = false);

// Two-tailed p-value for |t| with df degrees of freedom.
double t_two_tailed_p(double t, double df);

struct AspectSummary {
  std::optional<double> qwk_all;
  std::optional<double> qwk_llm;
  std::optional<double> qwk_human;
  double mean_llm = 0.0;
  double mean_human = 0.0;
  TTestResult test;
};

struct AgreementReport {
  std::vector<std::string> raters;
  std::size_t rated_rows = 0;
  AspectSummary validity;
  AspectSummary plausibility;
  bool welch = false;
};

// Joins ratings with the origin key. QWK uses rows rated by every rater,
// averaged over rater pairs; means and t-tests use every rating.
AgreementReport analyze_ratings(std::span<const RatingRecord> ratings,
                                const std::map<int, Origin>& origin, bool welch = false);

nlohmann::json to_json(const AgreementReport& report);
std::string render_agreement_table(const AgreementReport& report);

}  // namespace dgen
