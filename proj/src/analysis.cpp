#include "dgen/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <boost/math/special_functions/beta.hpp>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/io.hpp"
#include "dgen/rng.hpp"
#include "dgen/text.hpp"

namespace dgen {

using nlohmann::json;

const char* to_string(Origin origin) { return origin == Origin::Llm ? "llm" : "human"; }

std::vector<SheetRow> build_eval_sheet(std::span<const SheetItem> items, std::uint64_t seed) {
  std::vector<SheetRow> rows;
  int next_id = 1;
  for (const auto& item : items) {
    if (item.generated.size() != item.human.size()) {
      throw DataError("mcq '" + item.mcq_id + "': " + std::to_string(item.generated.size()) +
                      " generated vs " + std::to_string(item.human.size()) + " human distractors");
    }
    std::vector<std::pair<std::string, Origin>> entries;
    for (const auto& d : item.generated) entries.emplace_back(d, Origin::Llm);
    for (const auto& d : item.human) entries.emplace_back(d, Origin::Human);
    Rng rng(derive_seed(seed, item.mcq_id));
    rng.shuffle(entries);
    for (auto& [text, origin] : entries) rows.push_back({next_id++, item.mcq_id, item.stem, text, origin});
  }
  return rows;
}

void write_eval_sheet(std::span<const SheetRow> rows, const std::filesystem::path& sheet_csv,
                      const std::filesystem::path& key_csv) {
  std::vector<CsvRow> sheet{{"row_id", "question_stem", "distractor"}};
  std::vector<CsvRow> key{{"row_id", "mcq_id", "origin"}};
  for (const auto& r : rows) {
    sheet.push_back({std::to_string(r.row_id), r.stem, r.distractor});
    key.push_back({std::to_string(r.row_id), r.mcq_id, to_string(r.origin)});
  }
  write_file_atomic(sheet_csv, to_csv(sheet));
  write_file_atomic(key_csv, to_csv(key));
}

namespace {

struct CsvTable {
  std::vector<CsvRow> rows;
  std::map<std::string, std::size_t> columns;
  std::string source;

  const std::string& cell(std::size_t row, const std::string& name) const {
    return rows[row].at(columns.at(name));
  }
};

CsvTable read_table(const std::filesystem::path& path, std::initializer_list<const char*> required) {
  CsvTable t;
  t.source = path.string();
  auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw DataError(t.source + ": empty csv");
  for (std::size_t i = 0; i < rows[0].size(); ++i) t.columns[std::string(trim(rows[0][i]))] = i;
  for (const char* name : required) {
    if (!t.columns.count(name)) throw DataError(t.source + ": missing column '" + name + "'");
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && trim(rows[r][0]).empty()) continue;
    if (rows[r].size() != rows[0].size()) {
      throw DataError(t.source + ":" + std::to_string(r + 1) + ": expected " + std::to_string(rows[0].size()) +
                      " fields, got " + std::to_string(rows[r].size()));
    }
    t.rows.push_back(std::move(rows[r]));
  }
  return t;
}

int parse_int(const std::string& raw, const std::string& where) {
  std::string s(trim(raw));
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError(where + ": not an integer: '" + raw + "'");
  return value;
}

int parse_score(const std::string& raw, const std::string& where) {
  int v = parse_int(raw, where);
  if (v < 1 || v > 5) throw DataError(where + ": score " + std::to_string(v) + " outside 1-5");
  return v;
}

}  // namespace

std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
  auto t = read_table(path, {"row_id", "rater_id", "validity", "plausibility"});
  std::vector<RatingRecord> out;
  std::set<std::pair<int, std::string>> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.source + ":" + std::to_string(r + 2);
    RatingRecord rec;
    rec.row_id = parse_int(t.cell(r, "row_id"), where);
    rec.rater_id = trim(t.cell(r, "rater_id"));
    if (rec.rater_id.empty()) throw DataError(where + ": empty rater_id");
    rec.validity = parse_score(t.cell(r, "validity"), where);
    rec.plausibility = parse_score(t.cell(r, "plausibility"), where);
    if (!seen.emplace(rec.row_id, rec.rater_id).second) {
      throw DataError(where + ": duplicate rating of row " + std::to_string(rec.row_id) + " by " + rec.rater_id);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::map<int, Origin> load_origin_key(const std::filesystem::path& path) {
  auto t = read_table(path, {"row_id", "origin"});
  std::map<int, Origin> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.source + ":" + std::to_string(r + 2);
    int id = parse_int(t.cell(r, "row_id"), where);
    std::string origin(trim(t.cell(r, "origin")));
    Origin o;
    if (origin == "llm") o = Origin::Llm;
    else if (origin == "human") o = Origin::Human;
    else throw DataError(where + ": unknown origin '" + origin + "'");
    if (!out.emplace(id, o).second) throw DataError(where + ": duplicate row_id " + std::to_string(id));
  }
  return out;
}

std::optional<double> qwk(std::span<const int> a, std::span<const int> b) {
  constexpr int K = 5;
  if (a.size() != b.size()) throw DataError("qwk: rating vectors differ in length");
  if (a.size() < 2) throw DataError("qwk: needs at least 2 paired ratings");
  double observed[K][K] = {};
  double hist_a[K] = {}, hist_b[K] = {};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 1 || a[i] > K || b[i] < 1 || b[i] > K) throw DataError("qwk: rating outside 1-5");
    observed[a[i] - 1][b[i] - 1] += 1;
    hist_a[a[i] - 1] += 1;
    hist_b[b[i] - 1] += 1;
  }
  const double n = static_cast<double>(a.size());
  double num = 0.0, den = 0.0;
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      double w = static_cast<double>((i - j) * (i - j)) / ((K - 1) * (K - 1));
      num += w * observed[i][j];
      den += w * hist_a[i] * hist_b[j] / n;
    }
  }
  if (den == 0.0) return std::nullopt;
  return 1.0 - num / den;
}

double t_two_tailed_p(double t, double df) {
  if (!(df > 0)) throw DataError("t distribution needs positive degrees of freedom");
  if (std::isnan(t)) throw DataError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  const double x = df / (df + t * t);
  return boost::math::ibeta(df / 2.0, 0.5, x);
}

TTestResult students_t_test(std::span<const double> x, std::span<const double> y, bool welch) {
  if (x.size() < 2 || y.size() < 2) throw DataError("t-test needs at least 2 values per sample");
  auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double e : v) ss += (e - mean) * (e - mean);
    return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
  };
  auto [mx, vx] = moments(x);
  auto [my, vy] = moments(y);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  if (vx == 0.0 && vy == 0.0) throw DataError("t-test undefined: both samples have zero variance");

  TTestResult r;
  r.welch = welch;
  double se;
  if (welch) {
    const double ax = vx / nx, ay = vy / ny;
    se = std::sqrt(ax + ay);
    r.df = (ax + ay) * (ax + ay) / (ax * ax / (nx - 1) + ay * ay / (ny - 1));
  } else {
    r.df = nx + ny - 2;
    const double pooled = ((nx - 1) * vx + (ny - 1) * vy) / r.df;
    se = std::sqrt(pooled * (1 / nx + 1 / ny));
  }
  r.t = (mx - my) / se;
  r.p = t_two_tailed_p(r.t, r.df);
  return r;
}

namespace {

std::optional<double> mean_pairwise_qwk(const std::vector<std::string>& raters,
                                        const std::map<std::string, std::map<int, int>>& scores,
                                        const std::vector<int>& rows) {
  if (raters.size() < 2 || rows.size() < 2) return std::nullopt;
  double sum = 0.0;
  int defined = 0;
  for (std::size_t i = 0; i < raters.size(); ++i) {
    for (std::size_t j = i + 1; j < raters.size(); ++j) {
      std::vector<int> a, b;
      for (int row : rows) {
        a.push_back(scores.at(raters[i]).at(row));
        b.push_back(scores.at(raters[j]).at(row));
      }
      if (auto k = qwk(a, b)) {
        sum += *k;
        ++defined;
      }
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / defined;
}

AspectSummary summarize(std::span<const RatingRecord> ratings, const std::map<int, Origin>& origin,
                        const std::vector<std::string>& raters, const std::vector<int>& common_rows, bool welch,
                        int RatingRecord::*field) {
  std::map<std::string, std::map<int, int>> scores;
  std::vector<double> llm, human;
  for (const auto& r : ratings) {
    scores[r.rater_id][r.row_id] = r.*field;
    (origin.at(r.row_id) == Origin::Llm ? llm : human).push_back(r.*field);
  }
  std::vector<int> llm_rows, human_rows;
  for (int row : common_rows) (origin.at(row) == Origin::Llm ? llm_rows : human_rows).push_back(row);

  AspectSummary s;
  s.qwk_all = mean_pairwise_qwk(raters, scores, common_rows);
  s.qwk_llm = mean_pairwise_qwk(raters, scores, llm_rows);
  s.qwk_human = mean_pairwise_qwk(raters, scores, human_rows);
  auto mean = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m += e;
    return v.empty() ? 0.0 : m / static_cast<double>(v.size());
  };
  s.mean_llm = mean(llm);
  s.mean_human = mean(human);
  s.test = students_t_test(llm, human, welch);
  return s;
}

}  // namespace

AgreementReport analyze_ratings(std::span<const RatingRecord> ratings, const std::map<int, Origin>& origin,
                                bool welch) {
  if (ratings.empty()) throw DataError("no ratings to analyze");
  std::set<std::string> rater_set;
  std::map<int, std::set<std::string>> raters_of_row;
  for (const auto& r : ratings) {
    if (!origin.count(r.row_id)) {
      throw DataError("rating refers to row " + std::to_string(r.row_id) + " missing from the origin key");
    }
    rater_set.insert(r.rater_id);
    raters_of_row[r.row_id].insert(r.rater_id);
  }
  AgreementReport report;
  report.raters.assign(rater_set.begin(), rater_set.end());
  report.welch = welch;
  std::vector<int> common;
  for (const auto& [row, who] : raters_of_row) {
    if (who.size() == rater_set.size()) common.push_back(row);
  }
  report.rated_rows = raters_of_row.size();
  report.validity = summarize(ratings, origin, report.raters, common, welch, &RatingRecord::validity);
  report.plausibility = summarize(ratings, origin, report.raters, common, welch, &RatingRecord::plausibility);
  return report;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const AspectSummary& s) {
  return {{"qwk_all", opt(s.qwk_all)},
          {"qwk_llm", opt(s.qwk_llm)},
          {"qwk_human", opt(s.qwk_human)},
          {"mean_llm", s.mean_llm},
          {"mean_human", s.mean_human},
          {"t", s.test.t},
          {"df", s.test.df},
          {"p", s.test.p}};
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

json to_json(const AgreementReport& r) {
  return {{"raters", r.raters},
          {"rated_rows", r.rated_rows},
          {"t_test", r.welch ? "welch" : "pooled"},
          {"validity", to_json(r.validity)},
          {"plausibility", to_json(r.plausibility)}};
}

std::string render_agreement_table(const AgreementReport& r) {
  std::string out =
      "| Aspect | QWK | QWK (LLM) | QWK (human) | Mean LLM | Mean human | t | p |\n"
      "|---|---:|---:|---:|---:|---:|---:|---:|\n";
  auto row = [&](const char* name, const AspectSummary& s) {
    char tail[128];
    std::snprintf(tail, sizeof tail, " | %.2f | %.2f | %.3f | %.4f |\n", s.mean_llm, s.mean_human, s.test.t,
                  s.test.p);
    out += std::string("| ") + name + " | " + fmt(s.qwk_all) + " | " + fmt(s.qwk_llm) + " | " +
           fmt(s.qwk_human) + tail;
  };
  row("validity", r.validity);
  row("plausibility", r.plausibility);
  out += std::string("t-test: ") + (r.welch ? "welch" : "pooled") + "\n";
  return out;
}

}  // namespace dgen
