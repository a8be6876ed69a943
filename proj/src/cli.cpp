#include "dgen/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>

#include <CLI11.hpp>

#include "dgen/analysis.hpp"
#include "dgen/corpus.hpp"
#include "dgen/digest.hpp"
#include "dgen/embedding.hpp"
#include "dgen/error.hpp"
#include "dgen/generation.hpp"
#include "dgen/io.hpp"
#include "dgen/llm.hpp"
#include "dgen/log.hpp"
#include "dgen/metrics.hpp"
#include "dgen/parallel.hpp"
#include "dgen/promptkit.hpp"
#include "dgen/ranking.hpp"
#include "dgen/retrieval.hpp"
#include "dgen/rng.hpp"

namespace dgen {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
  std::string log_level = "info";
  std::string cache_dir = "cache";
  std::vector<std::string> fixtures;
  std::string backend = "replay";
  int max_in_flight = 4;
  std::size_t workers = 4;
  std::string templates_dir;
};

struct EmbedOptions {
  std::string provider = "hash";
  std::size_t dim = 256;
  std::string vectors;
  std::string model = "text-embedding-3-small";
  std::string cache;
};

LogLevel parse_log_level(const std::string& name) {
  if (name == "debug") return LogLevel::Debug;
  if (name == "info") return LogLevel::Info;
  if (name == "warn") return LogLevel::Warn;
  if (name == "error") return LogLevel::Error;
  if (name == "off") return LogLevel::Off;
  throw ConfigError("unknown log level '" + name + "'");
}

TemplateSet load_templates(const Globals& g) {
  return g.templates_dir.empty() ? TemplateSet::builtin() : TemplateSet::from_directory(g.templates_dir);
}

std::shared_ptr<HttpJsonTransport> make_transport() {
  return std::make_shared<HttpJsonTransport>(EndpointConfig::from_env());
}

std::unique_ptr<LlmClient> make_client(const Globals& g) {
  auto cache = std::make_shared<ResponseCache>(g.cache_dir);
  for (const auto& f : g.fixtures) {
    std::size_t added = cache->import_fixture(f);
    log_event(LogLevel::Info, "cache", "", "fixture_imported", f + " added=" + std::to_string(added));
  }
  std::shared_ptr<ChatBackend> backend;
  if (g.backend == "remote") backend = std::make_shared<HttpChatBackend>(make_transport());
  return std::make_unique<LlmClient>(cache, backend, g.max_in_flight);
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbedOptions& o) {
  if (o.provider == "hash") return std::make_unique<HashingEmbeddingProvider>(o.dim);
  if (o.provider == "precomputed") {
    if (o.vectors.empty()) throw ConfigError("--embedding-provider precomputed needs --vectors");
    std::string id = "precomputed:" + sha256_hex(read_file(o.vectors)).substr(0, 16);
    return std::make_unique<PrecomputedEmbeddingProvider>(id, load_vector_file(o.vectors));
  }
  if (o.provider == "remote") return std::make_unique<RemoteEmbeddingProvider>(make_transport(), o.model);
  throw ConfigError("unknown embedding provider '" + o.provider + "'");
}

std::unique_ptr<EmbeddingCache> make_embedding_cache(const EmbedOptions& o) {
  if (o.cache.empty()) return std::make_unique<EmbeddingCache>();
  return std::make_unique<EmbeddingCache>(fs::path(o.cache));
}

void add_embed_options(CLI::App* sub, EmbedOptions& o) {
  sub->add_option("--embedding-provider", o.provider, "hash, precomputed or remote")
      ->check(CLI::IsMember({"hash", "precomputed", "remote"}));
  sub->add_option("--embedding-dim", o.dim, "Dimension of the hashing provider")->check(CLI::PositiveNumber);
  sub->add_option("--vectors", o.vectors, "Vector file for the precomputed provider");
  sub->add_option("--embedding-model", o.model, "Model id for the remote provider");
  sub->add_option("--embedding-cache", o.cache, "Embedding cache file");
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_report(const std::string& path, const json& report) {
  if (path.empty()) return;
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file_atomic(path, pretty_json(report));
}

void write_lines(const std::string& path, std::span<const json> records) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file_atomic(path, to_json_lines(records));
}

std::string list_ids(const std::vector<std::string>& ids, std::size_t max_shown = 10) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < max_shown; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > max_shown) out += ", ... (" + std::to_string(ids.size() - max_shown) + " more)";
  return out;
}

// ---------------------------------------------------------------------------
// Result groups: one per (approach, config hash) found in the results files.

struct ResultGroup {
  Approach approach = Approach::Knn;
  std::string config_hash;
  std::string label;
  std::map<std::string, GenerationResult> by_mcq;
};

std::vector<ResultGroup> load_groups(const std::vector<std::string>& files) {
  std::vector<ResultGroup> groups;
  std::map<std::pair<Approach, std::string>, std::size_t> where;
  for (const auto& file : files) {
    for (auto& r : load_results(file)) {
      auto key = std::make_pair(r.approach, r.config_hash);
      auto it = where.find(key);
      if (it == where.end()) {
        it = where.emplace(key, groups.size()).first;
        groups.push_back({r.approach, r.config_hash, "", {}});
      }
      groups[it->second].by_mcq.emplace(r.mcq_id, std::move(r));
    }
  }
  std::map<Approach, int> per_approach;
  for (const auto& g : groups) ++per_approach[g.approach];
  for (auto& g : groups) {
    g.label = to_string(g.approach);
    if (per_approach[g.approach] > 1) g.label += "@" + g.config_hash.substr(0, 8);
  }
  return groups;
}

// Results for every test MCQ, in test order; DataError names the gaps.
std::vector<const GenerationResult*> require_results(const ResultGroup& group, std::span<const Mcq> test) {
  std::vector<const GenerationResult*> out;
  std::vector<std::string> missing;
  for (const auto& q : test) {
    auto it = group.by_mcq.find(q.id);
    if (it == group.by_mcq.end()) missing.push_back(q.id);
    else out.push_back(&it->second);
  }
  if (!missing.empty()) {
    throw DataError("results for " + group.label + " (config " + group.config_hash.substr(0, 12) + ") miss " +
                    std::to_string(missing.size()) + " of " + std::to_string(test.size()) +
                    " test mcqs: " + list_ids(missing));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
  std::string input, output;
};

void run_ingest(const IngestArgs& a, std::ostream& out) {
  auto corpus = load_corpus(a.input);
  if (!a.output.empty()) {
    if (auto parent = fs::path(a.output).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_corpus(a.output, corpus);
  }
  std::size_t with_selection = 0;
  for (const auto& q : corpus) with_selection += q.selection ? 1 : 0;
  out << "mcqs=" << corpus.size() << " with_selection=" << with_selection << " digest=" << corpus_digest(corpus)
      << "\n";
}

struct SplitArgs {
  std::string corpus, out_dir, manifest;
  double ratio = 0.8;
  std::uint64_t seed = 0;
};

void run_split(const SplitArgs& a, std::ostream& out) {
  auto corpus = load_corpus(a.corpus);
  CorpusSplit split = a.manifest.empty() ? split_corpus(corpus, a.ratio, a.seed)
                                         : apply_manifest(corpus, load_manifest(a.manifest));
  fs::create_directories(a.out_dir);
  save_corpus(fs::path(a.out_dir) / "train.jsonl", split.train);
  save_corpus(fs::path(a.out_dir) / "test.jsonl", split.test);
  save_manifest(fs::path(a.out_dir) / "split.json", manifest_of(split));
  out << "train=" << split.train.size() << " test=" << split.test.size() << " seed=" << split.seed
      << " ratio=" << split.ratio << "\n";
}

struct EmbedArgs {
  std::string corpus, mode = "stem_key_explanation", output;
  EmbedOptions embed;
};

void run_embed(const EmbedArgs& a, std::ostream& out) {
  auto corpus = load_corpus(a.corpus);
  EncodingMode mode = parse_encoding_mode(a.mode);
  auto provider = make_provider(a.embed);
  auto cache = make_embedding_cache(a.embed);
  std::vector<std::string> texts;
  for (const auto& q : corpus) texts.push_back(encoding_text(q, mode));
  auto vectors = embed(texts, mode, *provider, *cache);
  cache->flush();
  if (!a.output.empty()) {
    VectorFile file;
    file.dim = vectors.empty() ? 0 : vectors.front().dim();
    for (std::size_t i = 0; i < texts.size(); ++i) file.rows[sha256_hex(texts[i])] = vectors[i];
    save_vector_file(a.output, file);
  }
  out << "embedded=" << vectors.size() << " dim=" << (vectors.empty() ? 0 : vectors.front().dim())
      << " provider=" << provider->id() << " mode=" << to_string(mode) << "\n";
}

struct GenerateArgs {
  std::string approach, train, test, out_dir, error_pool;
  std::string model, mode, encoding, selector, error_selector, system_prompt;
  int exclude_topic = 0;
  std::size_t k = 3;
  double temperature = 0, top_p = 1;
  int max_tokens = 350, samples = 1;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  EmbedOptions embed;
  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

GenerationConfig build_config(const GenerateArgs& a) {
  GenerationConfig c = default_config(parse_approach(a.approach));
  if (a.given("--model")) c.model = a.model;
  if (a.given("--mode")) c.prompt_mode = parse_prompt_mode(a.mode);
  if (a.given("--temperature")) c.decoding.temperature = a.temperature;
  if (a.given("--top-p")) c.decoding.top_p = a.top_p;
  if (a.given("--max-tokens")) c.decoding.max_tokens = a.max_tokens;
  if (a.given("--samples")) c.decoding.n_samples = a.samples;
  if (a.given("--system-prompt")) c.system_prompt = a.system_prompt;
  c.seed = a.seed;
  if (a.given("--k")) c.k = a.k;
  if (a.given("--encoding")) c.encoding_mode = parse_encoding_mode(a.encoding);
  if (a.given("--selector")) c.example_selector = a.selector == "random" ? ExampleSelector::Random : ExampleSelector::Knn;
  if (a.exclude_topic != 0) c.exclude_topic = static_cast<TopicLevel>(a.exclude_topic);
  if (a.given("--error-selector")) c.error_selector = a.error_selector == "random" ? ErrorSelector::Random : ErrorSelector::Llm;
  c.decoding.validate();
  return c;
}

void run_generate(const GenerateArgs& a, const Globals& g, std::ostream& out) {
  GenerationConfig config = build_config(a);
  auto templates = load_templates(g);
  auto test = load_corpus(a.test);
  if (a.limit > 0 && test.size() > a.limit) test.resize(a.limit);

  std::vector<Mcq> train;
  std::vector<ErrorExplanation> error_pool;
  std::unique_ptr<EmbeddingProvider> provider;
  std::unique_ptr<EmbeddingCache> embed_cache;
  std::string inputs = "templates=" + templates.digest();

  if (config.approach == Approach::Knn) {
    if (a.train.empty()) throw ConfigError("--approach knn needs --train");
    train = load_corpus(a.train);
    inputs += "\ntrain=" + corpus_digest(train);
    if (config.example_selector == ExampleSelector::Knn) {
      provider = make_provider(a.embed);
      embed_cache = make_embedding_cache(a.embed);
      config.embedding_provider = provider->id();
    }
  }
  if (config.approach == Approach::Rb) {
    if (a.error_pool.empty()) throw ConfigError("--approach rb needs --error-pool");
    error_pool = load_error_pool(a.error_pool);
    inputs += "\nerrors=" + sha256_hex(read_file(a.error_pool));
  }
  config.inputs_digest = sha256_hex(inputs);
  const std::string hash = config.hash();

  fs::create_directories(a.out_dir);
  json config_record{{"config_hash", hash},
                     {"generation", config.to_json()},
                     {"test_digest", corpus_digest(test)},
                     {"limit", a.limit}};
  write_report((fs::path(a.out_dir) / ("config-" + hash.substr(0, 12) + ".json")).string(), config_record);

  ResultsStore store(fs::path(a.out_dir) / "results.jsonl");
  std::vector<const Mcq*> targets;
  std::size_t resumed = 0;
  for (const auto& q : test) {
    if (store.contains(q.id, config.approach, hash)) ++resumed;
    else targets.push_back(&q);
  }

  auto client = make_client(g);
  GenerationDeps deps;
  deps.llm = client.get();
  deps.templates = &templates;
  deps.example_pool = train;
  deps.error_pool = error_pool;

  ExampleIndex index;
  std::map<std::string, EmbeddingVector> target_vectors;
  if (provider && !targets.empty()) {
    std::vector<std::string> texts;
    std::vector<const Mcq*> pool;
    for (const auto& q : train) {
      texts.push_back(encoding_text(q, config.encoding_mode));
      pool.push_back(&q);
    }
    auto pool_vectors = embed(texts, config.encoding_mode, *provider, *embed_cache);
    texts.clear();
    for (const auto* q : targets) texts.push_back(encoding_text(*q, config.encoding_mode));
    auto query_vectors = embed(texts, config.encoding_mode, *provider, *embed_cache);
    embed_cache->flush();
    for (std::size_t i = 0; i < targets.size(); ++i) target_vectors[targets[i]->id] = query_vectors[i];
    index = ExampleIndex(std::move(pool), std::move(pool_vectors));
    deps.index = &index;
    deps.embed_target = [&target_vectors](const Mcq& q) { return target_vectors.at(q.id); };
  }

  std::vector<std::optional<GenerationResult>> done(targets.size());
  std::size_t next_flush = 0, null_slots = 0, flagged = 0;
  std::mutex mu;
  parallel_for(targets.size(), g.workers, [&](std::size_t i) {
    auto result = generate(*targets[i], config, deps);
    std::lock_guard lock(mu);
    done[i] = std::move(result);
    while (next_flush < done.size() && done[next_flush]) {
      const auto& r = *done[next_flush];
      for (const auto& c : r.candidates) null_slots += c.is_null() ? 1 : 0;
      flagged += r.provenance.flags.empty() ? 0 : 1;
      store.append(r);
      log_event(LogLevel::Debug, "generate", r.mcq_id, "stored");
      done[next_flush].reset();
      ++next_flush;
    }
  });

  out << "approach=" << to_string(config.approach) << " config=" << hash.substr(0, 12)
      << " generated=" << targets.size() << " resumed=" << resumed << " null_slots=" << null_slots
      << " flagged=" << flagged << " network_calls=" << client->network_calls()
      << " results=" << (fs::path(a.out_dir) / "results.jsonl").string() << "\n";
}

struct EvaluateArgs {
  std::string test, report;
  std::vector<std::string> results;
};

void run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  auto test = load_corpus(a.test);
  auto groups = load_groups(a.results);
  if (groups.empty()) throw DataError("no generation results found");
  std::vector<MetricSummary> summaries;
  json report_groups = json::array();
  for (const auto& group : groups) {
    auto results = require_results(group, test);
    std::vector<MatchReport> reports;
    json per_mcq = json::array();
    for (std::size_t i = 0; i < test.size(); ++i) {
      MatchReport r = match_distractors(test[i].distractor_texts(), results[i]->texts());
      r.mcq_id = test[i].id;
      r.approach = group.label;
      per_mcq.push_back(to_json(r));
      reports.push_back(std::move(r));
    }
    MetricSummary s = aggregate(reports);
    summaries.push_back(s);
    report_groups.push_back({{"approach", to_string(group.approach)},
                             {"label", group.label},
                             {"config_hash", group.config_hash},
                             {"summary", to_json(s)},
                             {"per_mcq", per_mcq}});
  }
  write_report(a.report, {{"test_digest", corpus_digest(test)}, {"groups", report_groups}});
  out << render_metric_table(summaries);
}

struct SolveArgs {
  std::string test, report, solver_model;
  std::vector<std::string> results;
  std::uint64_t seed = 0;
};

void run_solve_rate(const SolveArgs& a, const Globals& g, std::ostream& out) {
  auto test = load_corpus(a.test);
  if (test.empty()) throw DataError("test corpus is empty");
  auto templates = load_templates(g);
  auto client = make_client(g);
  auto groups = load_groups(a.results);

  std::vector<SolveRateReport> reports;
  std::vector<std::string> hashes{""};
  {
    std::vector<SolveItem> items;
    for (const auto& q : test) items.push_back({&q, q.distractor_texts()});
    reports.push_back(solve_rate(items, *client, templates, a.solver_model, a.seed, "human", 0, g.workers));
  }
  for (const auto& group : groups) {
    auto results = require_results(group, test);
    std::vector<SolveItem> items;
    std::vector<std::string> excluded;
    for (std::size_t i = 0; i < test.size(); ++i) {
      auto texts = results[i]->texts();
      if (!texts[0] || !texts[1] || !texts[2]) {
        excluded.push_back(test[i].id);
        continue;
      }
      items.push_back({&test[i], {*texts[0], *texts[1], *texts[2]}});
    }
    if (items.empty()) {
      throw DataError("results for " + group.label + " have no complete distractor triple to solve");
    }
    auto r = solve_rate(items, *client, templates, a.solver_model, a.seed, group.label, excluded.size(), g.workers);
    r.excluded_ids = excluded;
    reports.push_back(std::move(r));
    hashes.push_back(group.config_hash);
  }

  json report = json::array();
  std::string table =
      "| Distractors | Solved | Total | Excluded | Unparseable | Solve rate |\n|---|---:|---:|---:|---:|---:|\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    json j = to_json(reports[i]);
    if (!hashes[i].empty()) j["config_hash"] = hashes[i];
    report.push_back(j);
    const auto& r = reports[i];
    table += "| " + r.source + " | " + std::to_string(r.correct) + " | " + std::to_string(r.total) + " | " +
             std::to_string(r.excluded) + " | " + std::to_string(r.unparseable) + " | " + fmt2(100.0 * r.rate) +
             " |\n";
  }
  write_report(a.report, {{"test_digest", corpus_digest(test)},
                          {"solver_model", a.solver_model},
                          {"seed", a.seed},
                          {"sources", report}});
  out << table;
}

struct PairsArgs {
  std::string corpus, output, training;
};

void run_pairs_build(const PairsArgs& a, const Globals& g, std::ostream& out) {
  auto corpus = load_corpus(a.corpus);
  PairDataset data = build_pair_dataset(corpus);
  std::vector<json> records;
  for (const auto& p : data.pairs) records.push_back(to_json(p));
  write_lines(a.output, records);
  if (!a.training.empty()) {
    auto templates = load_templates(g);
    auto training = export_ranker_training(data.pairs, corpus, templates);
    write_lines(a.training, training);
  }
  out << "pairs=" << data.pairs.size() << " skipped_no_selection=" << data.skipped_no_selection
      << " skipped_ties=" << data.skipped_ties << "\n";
}

struct RankArgs {
  std::string test, report, ranker = "llm", ranker_model, pairs;
  std::vector<std::string> results;
  std::vector<double> margins;
  std::uint64_t seed = 0;
};

void run_rank_score(const RankArgs& a, const Globals& g, std::ostream& out) {
  if (a.results.empty() && a.pairs.empty()) throw ConfigError("rank-score needs --results and/or --pairs");
  auto test = load_corpus(a.test);
  auto templates = load_templates(g);

  std::unique_ptr<LlmClient> client;
  std::unique_ptr<Ranker> base;
  if (a.ranker == "llm") {
    if (a.ranker_model.empty()) throw ConfigError("--ranker llm needs --ranker-model");
    client = make_client(g);
    base = std::make_unique<LlmRanker>(*client, templates, a.ranker_model);
  } else if (a.ranker == "selection") {
    base = std::make_unique<SelectionRanker>(test);
  } else if (a.ranker == "random") {
    base = std::make_unique<RandomRanker>(a.seed);
  } else if (a.ranker == "first") {
    base = std::make_unique<ConstantRanker>(Preferred::First);
  } else {
    base = std::make_unique<ConstantRanker>(Preferred::Second);
  }
  CachingRanker ranker(*base);

  json report{{"test_digest", corpus_digest(test)}, {"ranker", a.ranker}};
  if (a.ranker == "llm") report["ranker_model"] = a.ranker_model;
  if (a.ranker == "random") report["seed"] = a.seed;

  if (!a.results.empty()) {
    auto groups = load_groups(a.results);
    if (groups.empty()) throw DataError("no generation results found");
    json scores = json::array();
    std::string table = "| Approach | Preference score | Ties | Null terms |\n|---|---:|---:|---:|\n";
    for (const auto& group : groups) {
      auto results = require_results(group, test);
      std::vector<PreferenceItem> items;
      for (std::size_t i = 0; i < test.size(); ++i) {
        items.push_back({RankContext::of(test[i]), results[i]->texts(), test[i].distractor_texts()});
      }
      auto r = preference_score(items, ranker, g.workers);
      json j = to_json(r);
      j["approach"] = to_string(group.approach);
      j["label"] = group.label;
      j["config_hash"] = group.config_hash;
      scores.push_back(j);
      table += "| " + group.label + " | " + fmt4(r.score) + " | " + std::to_string(r.ties) + " | " +
               std::to_string(r.null_terms) + " |\n";
    }
    report["preference"] = scores;
    out << table;
  }

  if (!a.pairs.empty()) {
    std::vector<PreferencePair> pairs;
    for_each_json_line(fs::path(a.pairs), [&](const json& j, std::size_t) {
      pairs.push_back(preference_pair_from_json(j));
    });
    json accuracy = json::array();
    std::string table = "| Margin | Pairs | Accuracy |\n|---|---:|---:|\n";
    std::vector<std::optional<double>> thresholds{std::nullopt};
    for (double m : a.margins) thresholds.emplace_back(m);
    for (const auto& t : thresholds) {
      auto r = ranker_accuracy(pairs, test, ranker, t);
      accuracy.push_back({{"margin_gt", t ? json(*t) : json(nullptr)},
                          {"evaluated", r.evaluated},
                          {"correct", r.correct},
                          {"accuracy", r.accuracy}});
      table += "| " + (t ? "> " + fmt2(*t) : std::string("all")) + " | " + std::to_string(r.evaluated) + " | " +
               fmt2(100.0 * r.accuracy) + " |\n";
    }
    report["accuracy"] = accuracy;
    out << table;
  }
  if (auto* llm = dynamic_cast<LlmRanker*>(base.get())) report["unparseable_verdicts"] = llm->unparseable();
  write_report(a.report, report);
}

struct FtArgs {
  std::string train, output, mode = "all";
  std::size_t limit = 0;
  std::uint64_t seed = 0;
  bool sb = false;
};

void run_ft_export(const FtArgs& a, const Globals& g, std::ostream& out) {
  auto train = load_corpus(a.train);
  if (a.limit > 0 && train.size() > a.limit) {
    auto perm = seeded_permutation(train.size(), a.seed);
    perm.resize(a.limit);
    std::sort(perm.begin(), perm.end());
    std::vector<Mcq> picked;
    for (auto i : perm) picked.push_back(train[i]);
    train = std::move(picked);
  }
  auto templates = load_templates(g);
  auto records = a.sb ? export_sb_dataset(train, templates)
                      : export_ft_dataset(train, parse_prompt_mode(a.mode), templates);
  write_lines(a.output, records);
  out << "records=" << records.size() << " kind=" << (a.sb ? "answer" : "distractor") << "\n";
}

struct HumanExportArgs {
  std::string test, results, sheet, key, config_hash;
  std::size_t sample = 20;
  std::uint64_t seed = 0;
};

void run_humaneval_export(const HumanExportArgs& a, std::ostream& out) {
  auto test = load_corpus(a.test);
  auto groups = load_groups({a.results});
  std::erase_if(groups, [&](const ResultGroup& grp) {
    return !a.config_hash.empty() && grp.config_hash.rfind(a.config_hash, 0) != 0;
  });
  if (groups.size() != 1) {
    throw ConfigError("expected exactly one generation config in results, found " + std::to_string(groups.size()) +
                      "; pick one with --config-hash");
  }
  const auto& group = groups.front();
  std::vector<SheetItem> eligible;
  for (const auto& q : test) {
    auto it = group.by_mcq.find(q.id);
    if (it == group.by_mcq.end()) continue;
    auto texts = it->second.texts();
    if (!texts[0] || !texts[1] || !texts[2]) continue;
    SheetItem item{q.id, q.stem, {*texts[0], *texts[1], *texts[2]}, {}};
    for (const auto& d : q.distractor_texts()) item.human.push_back(d);
    eligible.push_back(std::move(item));
  }
  if (eligible.size() < a.sample) {
    throw DataError("only " + std::to_string(eligible.size()) + " mcqs have complete generated triples; asked for " +
                    std::to_string(a.sample));
  }
  auto perm = seeded_permutation(eligible.size(), a.seed);
  perm.resize(a.sample);
  std::sort(perm.begin(), perm.end());
  std::vector<SheetItem> sample;
  for (auto i : perm) sample.push_back(eligible[i]);
  auto rows = build_eval_sheet(sample, a.seed);
  for (const auto& p : {fs::path(a.sheet).parent_path(), fs::path(a.key).parent_path()}) {
    if (!p.empty()) fs::create_directories(p);
  }
  write_eval_sheet(rows, a.sheet, a.key);
  out << "mcqs=" << sample.size() << " rows=" << rows.size() << " sheet=" << a.sheet << " key=" << a.key << "\n";
}

struct HumanAnalyzeArgs {
  std::string ratings, key, report;
  bool welch = false;
};

void run_humaneval_analyze(const HumanAnalyzeArgs& a, std::ostream& out) {
  auto ratings = load_ratings(a.ratings);
  auto origin = load_origin_key(a.key);
  auto report = analyze_ratings(ratings, origin, a.welch);
  write_report(a.report, to_json(report));
  out << render_agreement_table(report);
}

struct CacheArgs {
  std::string path, model;
};

void run_cache_export(const CacheArgs& a, const Globals& g, std::ostream& out) {
  ResponseCache cache(g.cache_dir);
  std::size_t n = 0;
  cache.export_fixture(a.path, [&](const ChatExchange& e) {
    bool keep = a.model.empty() || e.request.model == a.model;
    n += keep ? 1 : 0;
    return keep;
  });
  out << "exported=" << n << " fixture=" << a.path << "\n";
}

void run_cache_import(const CacheArgs& a, const Globals& g, std::ostream& out) {
  ResponseCache cache(g.cache_dir);
  std::size_t added = cache.import_fixture(a.path);
  out << "imported=" << added << " cache=" << g.cache_dir << "\n";
}

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return kExitConfig;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Transport: return kExitTransport;
    case ErrorCategory::FixtureGap: return kExitFixtureGap;
    case ErrorCategory::Internal: return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Distractor generation and evaluation for math multiple-choice questions", "dgen"};
  app.set_config("--config", "", "TOML or INI file supplying option values; flags override it");
  app.require_subcommand(1);

  Globals g;
  app.add_option("--log-level", g.log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));
  app.add_option("--cache", g.cache_dir, "Response cache directory");
  app.add_option("--fixture", g.fixtures, "Exchange fixture(s) imported into the cache before running");
  app.add_option("--backend", g.backend, "replay (cache only) or remote (OPENAI_BASE_URL / OPENAI_API_KEY)")
      ->check(CLI::IsMember({"replay", "remote"}));
  app.add_option("--max-in-flight", g.max_in_flight, "Concurrent backend requests")->check(CLI::PositiveNumber);
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--templates", g.templates_dir, "Directory overriding the builtin prompt templates");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a corpus and write it in canonical form");
  c_ingest->add_option("--input", ingest.input, "Corpus JSONL")->required();
  c_ingest->add_option("--output", ingest.output, "Canonical corpus JSONL");

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Seeded train/test split");
  c_split->add_option("--corpus", split.corpus)->required();
  c_split->add_option("--out-dir", split.out_dir, "Receives train.jsonl, test.jsonl, split.json")->required();
  c_split->add_option("--ratio", split.ratio, "Training fraction");
  c_split->add_option("--seed", split.seed);
  c_split->add_option("--manifest", split.manifest, "Reuse an existing split.json");

  EmbedArgs emb;
  auto* c_embed = app.add_subcommand("embed", "Compute and cache MCQ embeddings");
  c_embed->add_option("--corpus", emb.corpus)->required();
  c_embed->add_option("--encoding", emb.mode, "stem, stem_key or stem_key_explanation");
  c_embed->add_option("--output", emb.output, "Also write a vector file");
  add_embed_options(c_embed, emb.embed);

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Generate distractors for the test MCQs");
  auto opt = [&](CLI::Option* o) { gen.opts[o->get_name()] = o; };
  c_gen->add_option("--approach", gen.approach, "knn, cot, rb, ft or sb")
      ->required()
      ->check(CLI::IsMember({"knn", "cot", "rb", "ft", "sb"}));
  c_gen->add_option("--test", gen.test, "MCQs to generate for")->required();
  c_gen->add_option("--train", gen.train, "Example pool (knn)");
  c_gen->add_option("--out-dir", gen.out_dir, "Receives results.jsonl and config-<hash>.json")->required();
  c_gen->add_option("--error-pool", gen.error_pool, "Topic-tagged error explanations (rb)");
  opt(c_gen->add_option("--model", gen.model, "Chat model id"));
  opt(c_gen->add_option("--mode", gen.mode, "Prompt content: all, key or none")
          ->check(CLI::IsMember({"all", "key", "none"})));
  opt(c_gen->add_option("--k", gen.k, "In-context examples (knn)")->check(CLI::PositiveNumber));
  opt(c_gen->add_option("--encoding", gen.encoding, "stem, stem_key or stem_key_explanation (knn)"));
  opt(c_gen->add_option("--selector", gen.selector, "knn or random (knn)")
          ->check(CLI::IsMember({"knn", "random"})));
  c_gen->add_option("--exclude-topic", gen.exclude_topic, "Drop examples sharing the topic at level 1-3 (0 = off)")
      ->check(CLI::Range(0, 3));
  opt(c_gen->add_option("--error-selector", gen.error_selector, "llm or random (rb)")
          ->check(CLI::IsMember({"llm", "random"})));
  opt(c_gen->add_option("--temperature", gen.temperature));
  opt(c_gen->add_option("--top-p", gen.top_p));
  opt(c_gen->add_option("--max-tokens", gen.max_tokens));
  opt(c_gen->add_option("--samples", gen.samples, "Completions per request (sb)"));
  opt(c_gen->add_option("--system-prompt", gen.system_prompt));
  c_gen->add_option("--seed", gen.seed, "Seed for random selectors");
  c_gen->add_option("--limit", gen.limit, "Only the first N test MCQs (0 = all)");
  add_embed_options(c_gen, gen.embed);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Exact/partial/proportional match against human distractors");
  c_eval->add_option("--test", ev.test)->required();
  c_eval->add_option("--results", ev.results, "results.jsonl file(s)")->required();
  c_eval->add_option("--report", ev.report, "JSON report path");

  SolveArgs sv;
  auto* c_solve = app.add_subcommand("solve-rate", "Solver accuracy with human vs generated distractors");
  c_solve->add_option("--test", sv.test)->required();
  c_solve->add_option("--results", sv.results, "results.jsonl file(s)");
  c_solve->add_option("--solver-model", sv.solver_model)->required();
  c_solve->add_option("--seed", sv.seed, "Option shuffle seed");
  c_solve->add_option("--report", sv.report, "JSON report path");

  PairsArgs pa;
  auto* c_pairs = app.add_subcommand("pairs-build", "Ordered distractor pairs labelled by student selection");
  c_pairs->add_option("--corpus", pa.corpus)->required();
  c_pairs->add_option("--output", pa.output, "Pairs JSONL")->required();
  c_pairs->add_option("--export-training", pa.training, "Also write ranker fine-tuning records");

  RankArgs rk;
  auto* c_rank = app.add_subcommand("rank-score", "Preference score of generated vs human distractors");
  c_rank->add_option("--test", rk.test)->required();
  c_rank->add_option("--results", rk.results, "results.jsonl file(s)");
  c_rank->add_option("--pairs", rk.pairs, "Also report ranker accuracy on these pairs");
  c_rank->add_option("--margin", rk.margins, "Accuracy restricted to pairs with margin above this");
  c_rank->add_option("--ranker", rk.ranker, "llm, selection, random, first or second")
      ->check(CLI::IsMember({"llm", "selection", "random", "first", "second"}));
  c_rank->add_option("--ranker-model", rk.ranker_model);
  c_rank->add_option("--seed", rk.seed);
  c_rank->add_option("--report", rk.report, "JSON report path");

  FtArgs ft;
  auto* c_ft = app.add_subcommand("ft-export", "Chat fine-tuning records from the training split");
  c_ft->add_option("--train", ft.train)->required();
  c_ft->add_option("--output", ft.output)->required();
  c_ft->add_option("--mode", ft.mode, "all, key or none")->check(CLI::IsMember({"all", "key", "none"}));
  c_ft->add_option("--limit", ft.limit, "Seeded sample of N MCQs (0 = all)");
  c_ft->add_option("--seed", ft.seed);
  c_ft->add_flag("--sb", ft.sb, "Export question -> key records for the answer-sampling model");

  HumanExportArgs he;
  auto* c_he = app.add_subcommand("humaneval-export", "Blinded rating sheet and origin key");
  c_he->add_option("--test", he.test)->required();
  c_he->add_option("--results", he.results)->required();
  c_he->add_option("--config-hash", he.config_hash, "Prefix selecting one config in the results");
  c_he->add_option("--sample", he.sample, "MCQs to include");
  c_he->add_option("--seed", he.seed);
  c_he->add_option("--sheet", he.sheet, "Rater CSV")->required();
  c_he->add_option("--key", he.key, "Origin key CSV")->required();

  HumanAnalyzeArgs ha;
  auto* c_ha = app.add_subcommand("humaneval-analyze", "QWK, mean ratings and t-tests");
  c_ha->add_option("--ratings", ha.ratings)->required();
  c_ha->add_option("--key", ha.key)->required();
  c_ha->add_flag("--welch", ha.welch, "Welch's unequal-variance t-test instead of pooled");
  c_ha->add_option("--report", ha.report, "JSON report path");

  CacheArgs ce, ci;
  auto* c_cache = app.add_subcommand("cache", "Response cache fixtures");
  c_cache->require_subcommand(1);
  auto* c_cache_export = c_cache->add_subcommand("export", "Write cached exchanges as a fixture");
  c_cache_export->add_option("--output", ce.path)->required();
  c_cache_export->add_option("--model", ce.model, "Only exchanges for this model");
  auto* c_cache_import = c_cache->add_subcommand("import", "Load a fixture into the cache");
  c_cache_import->add_option("--input", ci.path)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("dgen");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    set_log_level(parse_log_level(g.log_level));
    if (c_ingest->parsed()) run_ingest(ingest, out);
    else if (c_split->parsed()) run_split(split, out);
    else if (c_embed->parsed()) run_embed(emb, out);
    else if (c_gen->parsed()) run_generate(gen, g, out);
    else if (c_eval->parsed()) run_evaluate(ev, out);
    else if (c_solve->parsed()) run_solve_rate(sv, g, out);
    else if (c_pairs->parsed()) run_pairs_build(pa, g, out);
    else if (c_rank->parsed()) run_rank_score(rk, g, out);
    else if (c_ft->parsed()) run_ft_export(ft, g, out);
    else if (c_he->parsed()) run_humaneval_export(he, out);
    else if (c_ha->parsed()) run_humaneval_analyze(ha, out);
    else if (c_cache_export->parsed()) run_cache_export(ce, g, out);
    else if (c_cache_import->parsed()) run_cache_import(ci, g, out);
    return kExitOk;
  } catch (const FixtureGapError& e) {
    err << "error[fixture-gap]: " << e.what() << "\n";
    return kExitFixtureGap;
  } catch (const Error& e) {
    err << "error[" << to_string(e.category()) << "]: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace dgen
