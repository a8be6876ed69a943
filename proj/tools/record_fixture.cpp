// Re-records fixtures/replay/llm_exchanges.jsonl by running the replay
// pipeline against the in-process mock model.
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "dgen/cli.hpp"
#include "dgen/corpus.hpp"
#include "mock_llm.hpp"
#include "replay_pipeline.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  if (argc != 3) {
    std::cerr << "usage: record_fixture <fixtures dir> <scratch dir>\n";
    return 2;
  }
  const fs::path fixtures = argv[1];
  const fs::path work = argv[2];
  fs::remove_all(work);
  fs::create_directories(work);

  auto responder = std::make_shared<dgen::mock::MockResponder>(dgen::load_corpus(fixtures / "corpus.jsonl"));
  dgen::mock::MockServer server(responder);
  server.start();
  setenv("OPENAI_BASE_URL", server.base_url().c_str(), 1);
  setenv("OPENAI_API_KEY", "mock", 1);

  const std::vector<std::string> globals{"--cache", (work / "cache").string(), "--backend", "remote",
                                         "--log-level", "warn"};
  for (const auto& args : dgen::replay_pipeline(fixtures, work, globals)) {
    int rc = dgen::run_cli(args, std::cout, std::cerr);
    if (rc != 0) {
      std::cerr << "step '" << args[globals.size() + 1] << "' failed with exit code " << rc << "\n";
      return rc;
    }
  }
  fs::create_directories(fixtures / "replay");
  int rc = dgen::run_cli({"dgen", "--cache", (work / "cache").string(), "cache", "export", "--output",
                          (fixtures / "replay" / "llm_exchanges.jsonl").string()},
                         std::cout, std::cerr);
  std::cerr << "mock requests served: " << server.requests() << "\n";
  return rc;
}
