#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "dgen/corpus.hpp"

namespace dgen::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dgen-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Mcq make_mcq(const std::string& id, const std::string& stem, const std::string& key,
                    std::array<std::string, 3> distractors,
                    std::array<std::string, 3> topics = {"Number", "Arithmetic", "Addition"}) {
  Mcq q;
  q.id = id;
  q.stem = stem;
  q.key = key;
  q.key_explanation = "Because " + key + ".";
  for (int i = 0; i < 3; ++i) q.distractors[i] = {distractors[i], "Feedback for " + distractors[i] + "."};
  q.topics = topics;
  return q;
}

// Arithmetic MCQ "a + b" with three distinct wrong answers.
inline Mcq synthetic_mcq(int index, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(2, 500);
  int a = pick(rng), b = pick(rng);
  int sum = a + b;
  return make_mcq("s" + std::to_string(index), "What is " + std::to_string(a) + " + " + std::to_string(b) + "?",
                  std::to_string(sum),
                  {std::to_string(sum + 1), std::to_string(sum - 10), std::to_string(std::abs(a - b) + 1001)});
}

}  // namespace dgen::testing
