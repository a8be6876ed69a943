#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dgen {

// The offline demo run recorded in fixtures/replay: split, all five
// generators, then every evaluation. Each entry is a full argv for run_cli.
inline std::vector<std::vector<std::string>> replay_pipeline(const std::filesystem::path& fixtures,
                                                             const std::filesystem::path& work,
                                                             const std::vector<std::string>& globals) {
  const std::string corpus = (fixtures / "corpus.jsonl").string();
  const std::string split = (work / "split").string();
  const std::string train = (work / "split" / "train.jsonl").string();
  const std::string test = (work / "split" / "test.jsonl").string();
  auto out = [&](const char* name) { return (work / name).string(); };
  auto results = [&](const char* approach) { return (work / approach / "results.jsonl").string(); };

  auto cmd = [&](std::vector<std::string> tail) {
    std::vector<std::string> argv{"dgen"};
    argv.insert(argv.end(), globals.begin(), globals.end());
    argv.insert(argv.end(), tail.begin(), tail.end());
    return argv;
  };
  std::vector<std::string> all_results{"--results", results("knn"), results("cot"), results("rb"),
                                       results("ft"), results("sb")};
  auto with_results = [&](std::vector<std::string> tail) {
    tail.insert(tail.end(), all_results.begin(), all_results.end());
    return cmd(tail);
  };

  return {
      cmd({"split", "--corpus", corpus, "--out-dir", split, "--ratio", "0.8", "--seed", "7"}),
      cmd({"generate", "--approach", "knn", "--train", train, "--test", test, "--out-dir", out("knn"), "--k", "3",
           "--mode", "all"}),
      cmd({"generate", "--approach", "cot", "--test", test, "--out-dir", out("cot")}),
      cmd({"generate", "--approach", "rb", "--test", test, "--out-dir", out("rb"), "--error-pool",
           (fixtures / "error_pool.tsv").string()}),
      cmd({"generate", "--approach", "ft", "--test", test, "--out-dir", out("ft"), "--model", "ft:dgen-distractor"}),
      cmd({"generate", "--approach", "sb", "--test", test, "--out-dir", out("sb"), "--model", "ft:dgen-answer"}),
      with_results({"evaluate", "--test", test, "--report", out("evaluate.json")}),
      with_results({"solve-rate", "--test", test, "--solver-model", "gpt-4", "--seed", "11", "--report",
                    out("solve_rate.json")}),
      cmd({"pairs-build", "--corpus", test, "--output", out("pairs.jsonl")}),
      with_results({"rank-score", "--test", test, "--ranker", "llm", "--ranker-model", "ft:dgen-ranker", "--pairs",
                    out("pairs.jsonl"), "--margin", "0.2", "--report", out("rank_score.json")}),
  };
}

// Report files the pipeline writes, relative to the work directory.
inline std::vector<std::string> replay_reports() {
  return {"evaluate.json",   "solve_rate.json",  "rank_score.json",  "pairs.jsonl",     "knn/results.jsonl",
          "cot/results.jsonl", "rb/results.jsonl", "ft/results.jsonl", "sb/results.jsonl", "split/split.json"};
}

}  // namespace dgen
