#pragma once

// Score aggregation over a model x dataset x iteration tensor: mean score,
// mean rank and the significance-gated mean rank score.
//
// Mean rank score, per dataset: sort models by mean score (best first). The
// best model scores 1.  Walking down the order, each model is compared with
// the anchor (the last model that was significantly worse than its own
// anchor, initially the best model) by a one-tailed Welch t-test.  When
// p < alpha the running score grows by |mean gap| / sigma, sigma being the
// population standard deviation of all model means on the dataset, and the
// model becomes the new anchor.  A model's aggregate is the mean of its
// per-dataset scores.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlueval/common.hpp"
#include "nlueval/stats.hpp"

namespace nlueval::rank {

inline constexpr std::size_t kIterations = 10;
inline constexpr double kDefaultAlpha = 0.05;

struct ScoreCell {
  std::vector<double> scores;
  bool complete = true;
};

struct DatasetInfo {
  std::string language;
  std::optional<Task> task;
  bool higher_is_better = true;
};

/// Raw scores S[model][dataset][iteration].  Model and dataset ids iterate in
/// lexicographic order.
class ScoreTensor {
 public:
  void set(const std::string& model, const std::string& dataset, std::vector<double> scores,
           bool complete = true) {
    cells_[model][dataset] = ScoreCell{std::move(scores), complete};
    datasets_.try_emplace(dataset);
    generative_.try_emplace(model, false);
  }

  void set_generative(const std::string& model, bool generative) { generative_[model] = generative; }
  void set_dataset_info(const std::string& dataset, DatasetInfo info) { datasets_[dataset] = std::move(info); }

  const ScoreCell* cell(const std::string& model, const std::string& dataset) const {
    auto m = cells_.find(model);
    if (m == cells_.end()) return nullptr;
    auto d = m->second.find(dataset);
    return d == m->second.end() ? nullptr : &d->second;
  }

  std::vector<std::string> models() const {
    std::vector<std::string> out;
    for (const auto& [m, _] : cells_) out.push_back(m);
    return out;
  }

  std::vector<std::string> datasets() const {
    std::vector<std::string> out;
    for (const auto& [d, _] : datasets_) out.push_back(d);
    return out;
  }

  bool generative(const std::string& model) const {
    auto it = generative_.find(model);
    return it != generative_.end() && it->second;
  }

  const DatasetInfo& dataset_info(const std::string& dataset) const {
    auto it = datasets_.find(dataset);
    if (it == datasets_.end()) throw Error("unknown dataset '" + dataset + "'");
    return it->second;
  }

  /// Tensor restricted to the given datasets.
  ScoreTensor restricted(const std::vector<std::string>& keep) const {
    ScoreTensor out;
    for (const auto& [m, row] : cells_) {
      for (const auto& [d, c] : row) {
        if (std::find(keep.begin(), keep.end(), d) != keep.end()) out.set(m, d, c.scores, c.complete);
      }
    }
    for (const auto& d : keep) {
      if (auto it = datasets_.find(d); it != datasets_.end()) out.set_dataset_info(d, it->second);
    }
    for (const auto& [m, g] : generative_) {
      if (out.cells_.count(m) != 0) out.set_generative(m, g);
    }
    return out;
  }

 private:
  std::map<std::string, std::map<std::string, ScoreCell>> cells_;
  std::map<std::string, DatasetInfo> datasets_;
  std::map<std::string, bool> generative_;
};

/// Complete cells of one dataset as (model, oriented scores), model order.
/// Incomplete cells are skipped and reported through `warnings`.
inline std::vector<std::pair<std::string, std::vector<double>>> dataset_column(
    const ScoreTensor& tensor, const std::string& dataset, std::vector<std::string>* warnings) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  const bool flip = !tensor.dataset_info(dataset).higher_is_better;
  for (const auto& m : tensor.models()) {
    const ScoreCell* c = tensor.cell(m, dataset);
    if (c == nullptr) continue;
    if (!c->complete) {
      if (warnings != nullptr) {
        warnings->push_back("excluding incomplete cell (" + m + ", " + dataset + ") with " +
                            std::to_string(c->scores.size()) + " scores");
      }
      continue;
    }
    if (c->scores.size() < 2) {
      throw Error("cell (" + m + ", " + dataset + ") has " + std::to_string(c->scores.size()) +
                  " scores; at least two are needed");
    }
    std::vector<double> s = c->scores;
    if (flip) {
      for (double& v : s) v = -v;
    }
    out.emplace_back(m, std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean rank score

struct TraceStep {
  std::string model;
  double mean = 0.0;
  std::string anchor;                // model compared against; empty for the best model
  std::optional<double> p_value;     // absent for the best model
  bool significant = false;
  double delta = 0.0;                // |mean(model) - mean(anchor)| when significant
  double increment = 0.0;            // delta / sigma when significant
  double rho = 1.0;                  // rank score after this step
};

struct RankTrace {
  std::string dataset;
  double sigma = 0.0;
  double alpha = kDefaultAlpha;
  std::vector<TraceStep> steps;  // in sorted order, best first
};

struct RankScoreMatrix {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  /// scores[m][d]; nullopt when the model has no complete cell on the dataset.
  std::vector<std::vector<std::optional<double>>> scores;
  std::vector<double> aggregate;  // mean over the datasets the model has

  std::optional<double> at(const std::string& model, const std::string& dataset) const {
    const auto mi = std::find(models.begin(), models.end(), model);
    const auto di = std::find(datasets.begin(), datasets.end(), dataset);
    if (mi == models.end() || di == datasets.end()) return std::nullopt;
    return scores[static_cast<std::size_t>(mi - models.begin())][static_cast<std::size_t>(di - datasets.begin())];
  }

  std::optional<double> aggregate_of(const std::string& model) const {
    const auto mi = std::find(models.begin(), models.end(), model);
    if (mi == models.end()) return std::nullopt;
    return aggregate[static_cast<std::size_t>(mi - models.begin())];
  }
};

struct RankScoreResult {
  RankScoreMatrix matrix;
  std::vector<RankTrace> traces;  // one per dataset, dataset order
  std::vector<std::string> warnings;
};

/// Rank-score trace of one dataset column.
inline RankTrace rank_dataset(const std::string& dataset,
                              std::vector<std::pair<std::string, std::vector<double>>> column,
                              double alpha) {
  RankTrace trace;
  trace.dataset = dataset;
  trace.alpha = alpha;
  if (column.empty()) return trace;

  std::vector<std::pair<double, std::size_t>> order;
  std::vector<double> means;
  for (std::size_t i = 0; i < column.size(); ++i) {
    means.push_back(stats::mean(column[i].second));
    order.emplace_back(means.back(), i);
  }
  // Descending mean; equal means fall back to model id order.
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return column[a.second].first < column[b.second].first;
  });
  trace.sigma = stats::population_stddev(means);

  double rho = 1.0;
  std::size_t anchor = order.front().second;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k].second;
    TraceStep step;
    step.model = column[i].first;
    step.mean = means[i];
    if (k > 0) {
      step.anchor = column[anchor].first;
      step.p_value = stats::welch_t_one_tailed(column[anchor].second, column[i].second).p_value;
      if (*step.p_value < alpha && trace.sigma > 0.0) {
        step.significant = true;
        step.delta = std::fabs(means[i] - means[anchor]);
        step.increment = step.delta / trace.sigma;
        rho = rho + step.increment;
        anchor = i;
      }
    }
    step.rho = rho;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

/// Recompute the per-model rank scores of a trace from its recorded steps.
inline std::vector<std::pair<std::string, double>> replay(const RankTrace& trace) {
  std::vector<std::pair<std::string, double>> out;
  double rho = 1.0;
  for (const auto& step : trace.steps) {
    if (step.significant) rho = rho + step.delta / trace.sigma;
    out.emplace_back(step.model, rho);
  }
  return out;
}

inline RankScoreResult mean_rank_scores(const ScoreTensor& tensor, double alpha = kDefaultAlpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  RankScoreResult result;
  auto& mx = result.matrix;
  mx.models = tensor.models();
  mx.datasets = tensor.datasets();
  if (mx.models.empty() || mx.datasets.empty()) throw Error("score tensor is empty");
  mx.scores.assign(mx.models.size(), std::vector<std::optional<double>>(mx.datasets.size()));

  for (std::size_t d = 0; d < mx.datasets.size(); ++d) {
    auto column = dataset_column(tensor, mx.datasets[d], &result.warnings);
    RankTrace trace = rank_dataset(mx.datasets[d], std::move(column), alpha);
    for (const auto& step : trace.steps) {
      const auto m = static_cast<std::size_t>(
          std::find(mx.models.begin(), mx.models.end(), step.model) - mx.models.begin());
      mx.scores[m][d] = step.rho;
    }
    result.traces.push_back(std::move(trace));
  }

  for (std::size_t m = 0; m < mx.models.size(); ++m) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : mx.scores[m]) {
      if (v) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) {
      result.warnings.push_back("model '" + mx.models[m] + "' has no complete cells");
      mx.aggregate.push_back(std::nan(""));
    } else {
      mx.aggregate.push_back(sum / static_cast<double>(n));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Baseline aggregations

/// Mean over iterations, then over the datasets each model has.
inline std::map<std::string, double> mean_score(const ScoreTensor& tensor) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& d : tensor.datasets()) {
    for (const auto& [m, s] : dataset_column(tensor, d, nullptr)) {
      acc[m].first += stats::mean(s);
      acc[m].second += 1;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [m, a] : acc) out[m] = a.first / static_cast<double>(a.second);
  return out;
}

/// Per-dataset rank by mean score (best = 1, ties share the average rank),
/// averaged over datasets.
inline std::map<std::string, double> mean_rank(const ScoreTensor& tensor) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& d : tensor.datasets()) {
    const auto column = dataset_column(tensor, d, nullptr);
    std::vector<std::pair<double, std::string>> means;
    for (const auto& [m, s] : column) means.emplace_back(stats::mean(s), m);
    std::sort(means.begin(), means.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < means.size();) {
      std::size_t j = i;
      while (j < means.size() && means[j].first == means[i].first) ++j;
      const double shared = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k < j; ++k) {
        acc[means[k].second].first += shared;
        acc[means[k].second].second += 1;
      }
      i = j;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [m, a] : acc) out[m] = a.first / static_cast<double>(a.second);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const RankTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    nlohmann::json j = {{"model", s.model},       {"mean", s.mean},
                        {"significant", s.significant}, {"delta", s.delta},
                        {"increment", s.increment}, {"rho", s.rho}};
    if (s.p_value) {
      j["p_value"] = *s.p_value;
      j["anchor"] = s.anchor;
    }
    steps.push_back(std::move(j));
  }
  return {{"dataset", trace.dataset}, {"sigma", trace.sigma}, {"alpha", trace.alpha}, {"steps", steps}};
}

inline RankTrace trace_from_json(const nlohmann::json& j) {
  RankTrace t;
  t.dataset = j.at("dataset").get<std::string>();
  t.sigma = j.at("sigma").get<double>();
  t.alpha = j.at("alpha").get<double>();
  for (const auto& s : j.at("steps")) {
    TraceStep step;
    step.model = s.at("model").get<std::string>();
    step.mean = s.at("mean").get<double>();
    step.significant = s.at("significant").get<bool>();
    step.delta = s.at("delta").get<double>();
    step.increment = s.at("increment").get<double>();
    step.rho = s.at("rho").get<double>();
    if (s.contains("p_value")) {
      step.p_value = s.at("p_value").get<double>();
      step.anchor = s.at("anchor").get<std::string>();
    }
    t.steps.push_back(std::move(step));
  }
  return t;
}

/// One line of the score-vector exchange format.
struct ScoreLine {
  std::string model;
  std::string dataset;
  std::vector<double> scores;
  bool generative = false;
  std::optional<std::string> language;
  std::optional<Task> task;
};

inline nlohmann::json to_json(const ScoreLine& l) {
  nlohmann::json j = {{"model", l.model}, {"dataset", l.dataset}, {"scores", l.scores},
                      {"generative", l.generative}};
  if (l.language) j["language"] = *l.language;
  if (l.task) j["task"] = to_string(*l.task);
  return j;
}

inline ScoreLine score_line_from_json(const nlohmann::json& j) {
  try {
    ScoreLine l;
    l.model = j.at("model").get<std::string>();
    l.dataset = j.at("dataset").get<std::string>();
    l.scores = j.at("scores").get<std::vector<double>>();
    l.generative = j.value("generative", false);
    if (j.contains("language")) l.language = j.at("language").get<std::string>();
    if (j.contains("task")) l.task = parse_task(j.at("task").get<std::string>());
    for (double v : l.scores) {
      if (!std::isfinite(v)) throw Error("non-finite score for (" + l.model + ", " + l.dataset + ")");
    }
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad score line: ") + e.what());
  }
}

}  // namespace nlueval::rank
