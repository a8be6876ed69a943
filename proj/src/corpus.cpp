#include "dgen/corpus.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dgen/digest.hpp"
#include "dgen/error.hpp"
#include "dgen/io.hpp"
#include "dgen/rng.hpp"
#include "dgen/text.hpp"

namespace dgen {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& id, const std::string& rule) {
  throw DataError("mcq '" + id + "': " + rule);
}

std::optional<std::string> optional_string(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

std::array<std::string, 3> Mcq::distractor_texts() const {
  return {distractors[0].text, distractors[1].text, distractors[2].text};
}

void validate(const Mcq& mcq) {
  const std::string& id = mcq.id;
  if (id.empty()) fail(id, "empty id");
  if (trim(mcq.stem).empty()) fail(id, "empty stem");
  if (normalize_text(mcq.key).empty()) fail(id, "empty key");
  const std::string key = normalize_text(mcq.key);
  for (std::size_t i = 0; i < mcq.distractors.size(); ++i) {
    const std::string d = normalize_text(mcq.distractors[i].text);
    if (d.empty()) fail(id, "distractor " + std::to_string(i + 1) + " is empty");
    if (d == key) fail(id, "distractor " + std::to_string(i + 1) + " equals the key");
  }
  for (std::size_t i = 0; i < mcq.topics.size(); ++i) {
    if (trim(mcq.topics[i]).empty()) fail(id, "topic level " + std::to_string(i + 1) + " is empty");
  }
  if (mcq.selection) {
    const auto& s = *mcq.selection;
    double sum = 0.0;
    auto check = [&](double f, const char* name) {
      if (!std::isfinite(f) || f < 0.0 || f > 1.0) {
        fail(id, std::string("selection fraction '") + name + "' outside [0,1]");
      }
      sum += f;
    };
    check(s.key, "key");
    check(s.distractors[0], "d1");
    check(s.distractors[1], "d2");
    check(s.distractors[2], "d3");
    if (sum > 1.0 + 1e-6) fail(id, "selection fractions sum above 1");
  }
  if (mcq.n_responses && *mcq.n_responses < 0) fail(id, "negative n_responses");
}

json to_json(const Mcq& mcq) {
  json j;
  j["id"] = mcq.id;
  j["stem"] = mcq.stem;
  j["key"] = mcq.key;
  if (mcq.key_explanation) j["key_explanation"] = *mcq.key_explanation;
  json ds = json::array();
  for (const auto& d : mcq.distractors) {
    json dj;
    dj["text"] = d.text;
    if (d.feedback) dj["feedback"] = *d.feedback;
    ds.push_back(std::move(dj));
  }
  j["distractors"] = std::move(ds);
  j["topics"] = mcq.topics;
  if (mcq.selection) {
    j["selection"] = {{"key", mcq.selection->key},
                      {"d1", mcq.selection->distractors[0]},
                      {"d2", mcq.selection->distractors[1]},
                      {"d3", mcq.selection->distractors[2]}};
  }
  if (mcq.n_responses) j["n_responses"] = *mcq.n_responses;
  return j;
}

Mcq mcq_from_json(const json& j) {
  if (!j.is_object()) throw DataError("record is not an object");
  Mcq mcq;
  auto id_it = j.find("id");
  if (id_it == j.end() || !id_it->is_string()) throw DataError("record without a string id");
  mcq.id = id_it->get<std::string>();
  try {
    mcq.stem = j.at("stem").get<std::string>();
    mcq.key = j.at("key").get<std::string>();
    mcq.key_explanation = optional_string(j, "key_explanation");

    const json& ds = j.at("distractors");
    if (!ds.is_array()) fail(mcq.id, "distractors is not a list");
    if (ds.size() != 3) {
      fail(mcq.id, "distractor count != 3 (got " + std::to_string(ds.size()) + ")");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const json& d = ds[i];
      if (d.is_string()) {
        mcq.distractors[i].text = d.get<std::string>();
      } else {
        mcq.distractors[i].text = d.at("text").get<std::string>();
        mcq.distractors[i].feedback = optional_string(d, "feedback");
      }
    }

    const json& ts = j.at("topics");
    if (!ts.is_array() || ts.size() != 3) fail(mcq.id, "topics must list exactly 3 levels");
    for (std::size_t i = 0; i < 3; ++i) mcq.topics[i] = ts[i].get<std::string>();

    if (auto it = j.find("selection"); it != j.end() && !it->is_null()) {
      const json& s = *it;
      static const std::set<std::string> kKeys{"key", "d1", "d2", "d3"};
      std::set<std::string> present;
      for (const auto& [k, _] : s.items()) present.insert(k);
      if (present != kKeys) fail(mcq.id, "selection keys must be exactly {key, d1, d2, d3}");
      mcq.selection = SelectionDistribution{
          s.at("key").get<double>(),
          {s.at("d1").get<double>(), s.at("d2").get<double>(), s.at("d3").get<double>()}};
    }
    if (auto it = j.find("n_responses"); it != j.end() && !it->is_null()) {
      mcq.n_responses = it->get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    fail(mcq.id, std::string("malformed field: ") + e.what());
  }
  validate(mcq);
  return mcq;
}

std::vector<Mcq> read_corpus(std::istream& in, const std::string& source_name) {
  std::vector<Mcq> corpus;
  std::unordered_set<std::string> seen;
  for_each_json_line(in, source_name, [&](const json& record, std::size_t line) {
    Mcq mcq;
    try {
      mcq = mcq_from_json(record);
    } catch (const DataError& e) {
      throw DataError(source_name + ":" + std::to_string(line) + ": " + e.what());
    }
    if (!seen.insert(mcq.id).second) {
      throw DataError(source_name + ":" + std::to_string(line) + ": duplicate id '" + mcq.id + "'");
    }
    corpus.push_back(std::move(mcq));
  });
  return corpus;
}

std::vector<Mcq> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus " + path.string());
  return read_corpus(in, path.string());
}

void write_corpus(std::ostream& out, std::span<const Mcq> corpus) {
  for (const auto& mcq : corpus) out << to_json(mcq).dump() << '\n';
}

void save_corpus(const std::filesystem::path& path, std::span<const Mcq> corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  write_file_atomic(path, out.str());
}

std::string corpus_digest(std::span<const Mcq> corpus) {
  std::ostringstream out;
  write_corpus(out, corpus);
  return sha256_hex(out.str());
}

CorpusSplit split_corpus(std::span<const Mcq> corpus, double ratio, std::uint64_t seed) {
  if (corpus.empty()) throw DataError("cannot split an empty corpus");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must be in (0, 1)");
  const std::size_t n = corpus.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  auto order = seeded_permutation(n, seed);
  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

  CorpusSplit split;
  split.ratio = ratio;
  split.seed = seed;
  // Each side keeps corpus order.
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? split.train : split.test).push_back(corpus[i]);
  }
  return split;
}

SplitManifest manifest_of(const CorpusSplit& split) {
  SplitManifest m;
  m.seed = split.seed;
  m.ratio = split.ratio;
  for (const auto& q : split.train) m.train_ids.push_back(q.id);
  for (const auto& q : split.test) m.test_ids.push_back(q.id);
  return m;
}

void save_manifest(const std::filesystem::path& path, const SplitManifest& manifest) {
  json j{{"seed", manifest.seed},
         {"ratio", manifest.ratio},
         {"train", manifest.train_ids},
         {"test", manifest.test_ids}};
  write_file_atomic(path, pretty_json(j));
}

SplitManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ratio = j.value("ratio", 0.8);
    m.train_ids = j.at("train").get<std::vector<std::string>>();
    m.test_ids = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw DataError("malformed split manifest " + path.string() + ": " + e.what());
  }
}

CorpusSplit apply_manifest(std::span<const Mcq> corpus, const SplitManifest& manifest) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].id, i);
  std::unordered_set<std::string> used;
  CorpusSplit split;
  split.seed = manifest.seed;
  split.ratio = manifest.ratio;
  auto take = [&](const std::vector<std::string>& ids, std::vector<Mcq>& side) {
    for (const auto& id : ids) {
      auto it = index.find(id);
      if (it == index.end()) throw DataError("split manifest names unknown mcq '" + id + "'");
      if (!used.insert(id).second) throw DataError("split manifest lists '" + id + "' twice");
      side.push_back(corpus[it->second]);
    }
  };
  take(manifest.train_ids, split.train);
  take(manifest.test_ids, split.test);
  if (used.size() != corpus.size()) {
    throw DataError("split manifest covers " + std::to_string(used.size()) + " of " +
                    std::to_string(corpus.size()) + " mcqs");
  }
  return split;
}

const Mcq* find_mcq(std::span<const Mcq> corpus, std::string_view id) {
  for (const auto& q : corpus) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

}  // namespace dgen
