// Serves the mock chat model until interrupted; point OPENAI_BASE_URL at it.
#include <csignal>
#include <iostream>
#include <thread>

#include "dgen/corpus.hpp"
#include "mock_llm.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
}

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: mock_llm_server <corpus.jsonl>\n";
    return 2;
  }
  auto responder = std::make_shared<dgen::mock::MockResponder>(dgen::load_corpus(argv[1]));
  dgen::mock::MockServer server(responder);
  server.start();
  std::cout << server.base_url() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  return 0;
}
