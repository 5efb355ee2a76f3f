#pragma once

// Randomized checks of the aggregation invariants, shared by the unit tests
// and the acceptance binary.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "nlueval/rankscore.hpp"
#include "nlueval/rng.hpp"

namespace props {

using namespace nlueval;
using rank::ScoreTensor;

struct Check {
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  void fail(const std::string& what) {
    if (failures++ == 0) first_failure = what;
  }
  bool ok() const { return failures == 0 && cases > 0; }
};

/// Gaussian draw by Box-Muller from the project Rng.
inline double normal(Rng& rng) {
  const double u = 1.0 - rng.uniform();
  const double v = rng.uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
}

/// 3-12 models, 1-8 datasets, 10 scores per cell.  Model means cluster
/// around a few levels so that both significant and non-significant
/// neighbours occur.
inline ScoreTensor random_tensor(std::uint64_t seed) {
  Rng rng(seed);
  ScoreTensor t;
  const auto models = 3 + rng.below(10);
  const auto datasets = 1 + rng.below(8);
  for (std::uint64_t d = 0; d < datasets; ++d) {
    const std::string did = "d" + std::to_string(d);
    std::vector<double> levels;
    for (std::uint64_t l = 0, n = 1 + rng.below(4); l < n; ++l) levels.push_back(0.2 + 0.7 * rng.uniform());
    for (std::uint64_t m = 0; m < models; ++m) {
      const double mu = levels[rng.below(levels.size())] + 0.02 * normal(rng);
      const double sd = 0.002 + 0.04 * rng.uniform();
      std::vector<double> s;
      for (std::size_t i = 0; i < rank::kIterations; ++i) s.push_back(mu + sd * normal(rng));
      t.set("m" + std::to_string(m), did, s);
    }
  }
  return t;
}

inline std::vector<double> column_of(const rank::RankScoreResult& r, std::size_t d) {
  std::vector<double> out;
  for (const auto& row : r.matrix.scores) out.push_back(row[d].value_or(std::nan("")));
  return out;
}

/// Order of models within a trace, best first.
inline std::vector<std::string> order_of(const rank::RankTrace& t) {
  std::vector<std::string> out;
  for (const auto& s : t.steps) out.push_back(s.model);
  return out;
}

inline ScoreTensor transformed(const ScoreTensor& t, const std::string& dataset, double scale, double shift) {
  ScoreTensor out = t;
  for (const auto& m : t.models()) {
    auto s = t.cell(m, dataset)->scores;
    for (double& v : s) v = v * scale + shift;
    out.set(m, dataset, s);
  }
  return out;
}

/// Multiplying or shifting one dataset leaves its R column unchanged (1e-9)
/// and every other column identical.
inline void scale_shift(const ScoreTensor& t, Rng& rng, Check& c) {
  const auto base = rank::mean_rank_scores(t);
  const auto datasets = t.datasets();
  const auto d = rng.below(datasets.size());
  const double scale = std::exp(3.0 * (2.0 * rng.uniform() - 1.0));
  const double shift = 2.0 * (2.0 * rng.uniform() - 1.0);
  for (const auto& [a, b] : {std::pair{scale, 0.0}, std::pair{1.0, shift}, std::pair{scale, shift}}) {
    ++c.cases;
    const auto r = rank::mean_rank_scores(transformed(t, datasets[d], a, b));
    const auto before = column_of(base, d);
    const auto after = column_of(r, d);
    for (std::size_t m = 0; m < before.size(); ++m) {
      if (!(std::fabs(before[m] - after[m]) <= 1e-9)) {
        std::ostringstream os;
        os << "dataset " << datasets[d] << " x" << a << " +" << b << ": model " << base.matrix.models[m] << " "
           << before[m] << " -> " << after[m];
        c.fail(os.str());
        break;
      }
    }
  }
}

/// A model that is not significantly worse than the model it is tested
/// against (its anchor) receives the same R.
inline void robustness_anchor(const ScoreTensor& t, Check& c) {
  const auto r = rank::mean_rank_scores(t);
  for (const auto& trace : r.traces) {
    double anchor_rho = 1.0;
    for (const auto& s : trace.steps) {
      if (!s.p_value) continue;
      ++c.cases;
      if (!s.significant && s.rho != anchor_rho) c.fail(trace.dataset + ": " + s.model + " moved without significance");
      if (s.significant) anchor_rho = s.rho;
    }
  }
}

/// Literal adjacent-pair form: Welch between neighbours in sorted order with
/// p >= alpha implies equal R.
inline void robustness_adjacent(const ScoreTensor& t, Check& c) {
  const auto r = rank::mean_rank_scores(t);
  for (const auto& trace : r.traces) {
    for (std::size_t k = 1; k < trace.steps.size(); ++k) {
      const auto& hi = t.cell(trace.steps[k - 1].model, trace.dataset)->scores;
      const auto& lo = t.cell(trace.steps[k].model, trace.dataset)->scores;
      const double p = stats::welch_t_one_tailed(hi, lo).p_value;
      if (p < trace.alpha) continue;
      ++c.cases;
      if (trace.steps[k].rho != trace.steps[k - 1].rho) {
        std::ostringstream os;
        os << trace.dataset << ": " << trace.steps[k - 1].model << " vs " << trace.steps[k].model << " p=" << p
           << " but R " << trace.steps[k - 1].rho << " != " << trace.steps[k].rho << " (anchor "
           << trace.steps[k].anchor << ")";
        c.fail(os.str());
      }
    }
  }
}

/// Lowering the worse of two adjacent, significantly different models (same
/// variance, staying above the next model) does not shrink their R gap.
/// `c` covers every adjacent significant pair; `anchored` only those where the neighbour is also the anchor.
inline void magnitude(const ScoreTensor& t, Rng& rng, Check& c, Check* anchored = nullptr) {
  const auto base = rank::mean_rank_scores(t);
  for (std::size_t d = 0; d < base.traces.size(); ++d) {
    const auto& trace = base.traces[d];
    for (std::size_t k = 1; k < trace.steps.size(); ++k) {
      const auto& upper = t.cell(trace.steps[k - 1].model, trace.dataset)->scores;
      const auto& lower = t.cell(trace.steps[k].model, trace.dataset)->scores;
      if (!(stats::welch_t_one_tailed(upper, lower).p_value < trace.alpha)) continue;
      const double floor = k + 1 < trace.steps.size() ? trace.steps[k + 1].mean : trace.steps[k].mean - 0.2;
      const double room = trace.steps[k].mean - floor;
      if (room <= 0.0) continue;
      const double drop = room * (0.05 + 0.9 * rng.uniform());
      ScoreTensor moved = t;
      auto s = t.cell(trace.steps[k].model, trace.dataset)->scores;
      for (double& v : s) v -= drop;
      moved.set(trace.steps[k].model, trace.dataset, s);
      const auto after = rank::mean_rank_scores(moved);
      const double gap0 = trace.steps[k].rho - trace.steps[k - 1].rho;
      const double gap1 = *after.matrix.at(trace.steps[k].model, trace.dataset) -
                          *after.matrix.at(trace.steps[k - 1].model, trace.dataset);
      const bool is_anchor = trace.steps[k].anchor == trace.steps[k - 1].model;
      ++c.cases;
      if (anchored && is_anchor) ++anchored->cases;
      if (gap1 < gap0 - 1e-12) {
        std::ostringstream os;
        os << trace.dataset << ": lowering " << trace.steps[k].model << " by " << drop << " shrank gap " << gap0
           << " -> " << gap1 << " (tested against " << trace.steps[k].anchor << ", neighbour "
           << trace.steps[k - 1].model << ")";
        c.fail(os.str());
        if (anchored && is_anchor) anchored->fail(os.str());
      }
    }
  }
}

/// Adding a model never strictly inverts the R order of existing models.
inline void minimal_change(const ScoreTensor& t, Rng& rng, Check& c) {
  const auto base = rank::mean_rank_scores(t);
  ScoreTensor bigger = t;
  for (const auto& d : t.datasets()) {
    const auto& ref = t.cell(t.models()[rng.below(t.models().size())], d)->scores;
    const double shift = 0.1 * normal(rng);
    const double sd = 0.002 + 0.04 * rng.uniform();
    std::vector<double> s;
    for (std::size_t i = 0; i < ref.size(); ++i) s.push_back(stats::mean(ref) + shift + sd * normal(rng));
    bigger.set("zz-new", d, s);
  }
  const auto after = rank::mean_rank_scores(bigger);
  for (const auto& d : t.datasets()) {
    for (const auto& a : t.models()) {
      for (const auto& b : t.models()) {
        ++c.cases;
        if (*base.matrix.at(a, d) < *base.matrix.at(b, d) && *after.matrix.at(a, d) > *after.matrix.at(b, d)) {
          c.fail(d + ": " + a + " and " + b + " inverted after adding a model");
        }
      }
    }
  }
}

/// Per dataset the best R is exactly 1; replay reproduces R bit for bit.
inline void anchor_and_replay(const ScoreTensor& t, Check& c) {
  const auto r = rank::mean_rank_scores(t);
  for (std::size_t d = 0; d < r.traces.size(); ++d) {
    ++c.cases;
    const auto col = column_of(r, d);
    if (*std::min_element(col.begin(), col.end()) != 1.0) c.fail(r.traces[d].dataset + ": best R is not 1");
    for (const auto& [m, rho] : rank::replay(r.traces[d])) {
      if (rho != *r.matrix.at(m, r.traces[d].dataset)) c.fail(r.traces[d].dataset + ": replay differs for " + m);
    }
  }
}

}  // namespace props
