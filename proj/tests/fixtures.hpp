#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "nlueval/corpus.hpp"
#include "nlueval/rng.hpp"

namespace fixtures {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("nlueval-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Balanced classification samples cycling through `labels`.
inline std::vector<nlueval::Sample> classification(std::size_t n, const std::vector<std::string>& labels,
                                                   const std::string& tag = "doc") {
  std::vector<nlueval::Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(nlueval::ClassificationSample{tag + " number " + std::to_string(i), labels[i % labels.size()]});
  }
  return out;
}

inline nlueval::DatasetSpec sentiment_spec(std::size_t train, std::size_t val, std::size_t test) {
  nlueval::DatasetSpec s;
  s.id = "toy-sent";
  s.language = "en";
  s.task = nlueval::Task::kSentiment;
  s.num_shots = 12;
  s.splits = {train, val, test};
  s.metric = nlueval::Metric::kMacroF1;
  s.labels = {"negative", "neutral", "positive"};
  return s;
}

inline nlueval::Dataset sentiment_dataset(std::size_t train, std::size_t val, std::size_t test) {
  auto spec = sentiment_spec(train, val, test);
  return {spec, classification(train, spec.labels, "train"), classification(val, spec.labels, "val"),
          classification(test, spec.labels, "test")};
}

}  // namespace fixtures
