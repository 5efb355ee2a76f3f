#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace nlueval {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { kNer, kSentiment, kAcceptability, kQa };

enum class Metric { kMicroF1, kMacroF1, kMcc, kQaEmF1 };

inline constexpr std::array<Task, 4> kAllTasks = {Task::kNer, Task::kSentiment,
                                                  Task::kAcceptability, Task::kQa};

constexpr std::string_view to_string(Task t) noexcept {
  switch (t) {
    case Task::kNer: return "NER";
    case Task::kSentiment: return "SENT";
    case Task::kAcceptability: return "LA";
    case Task::kQa: return "QA";
  }
  return "?";
}

constexpr std::string_view to_string(Metric m) noexcept {
  switch (m) {
    case Metric::kMicroF1: return "MICRO_F1";
    case Metric::kMacroF1: return "MACRO_F1";
    case Metric::kMcc: return "MCC";
    case Metric::kQaEmF1: return "QA_EM_F1";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  for (Task t : kAllTasks) {
    if (to_string(t) == s) return t;
  }
  throw Error("unknown task '" + std::string(s) + "'");
}

inline Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::kMicroF1, Metric::kMacroF1, Metric::kMcc, Metric::kQaEmF1}) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown metric '" + std::string(s) + "'");
}

/// Metric conventionally used for a task.
constexpr Metric default_metric(Task t) noexcept {
  switch (t) {
    case Task::kNer: return Metric::kMicroF1;
    case Task::kSentiment: return Metric::kMacroF1;
    case Task::kAcceptability: return Metric::kMcc;
    case Task::kQa: return Metric::kQaEmF1;
  }
  return Metric::kMicroF1;
}

/// Closed range of a metric's values.
constexpr std::pair<double, double> metric_range(Metric m) noexcept {
  return m == Metric::kMcc ? std::pair{-1.0, 1.0} : std::pair{0.0, 1.0};
}

}  // namespace nlueval
