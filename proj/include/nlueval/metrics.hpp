#pragma once

// Task metrics.  All functions are pure and order-invariant over samples.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlueval/common.hpp"
#include "nlueval/corpus.hpp"
#include "nlueval/genconstrain.hpp"
#include "nlueval/text.hpp"

namespace nlueval::metrics {

enum class ScoreKind { kMicroF1, kMacroF1, kMcc, kQaEm, kQaF1 };

struct Score {
  double value = 0.0;
  ScoreKind kind = ScoreKind::kMicroF1;

  Score() = default;
  Score(double v, ScoreKind k) : value(v), kind(k) {
    const double lo = k == ScoreKind::kMcc ? -1.0 : 0.0;
    if (!(v >= lo && v <= 1.0)) throw Error("score " + std::to_string(v) + " out of range");
  }
};

/// Harmonic mean of precision and recall from confusion counts; 0 when undefined.
constexpr double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// ---------------------------------------------------------------------------
// NER

/// Project predicted entity strings back onto tokens.  Each entity claims its
/// leftmost case-insensitive occurrence whose tokens are all still unclaimed;
/// tags are visited in mapping order and entities in list order.
inline std::vector<std::string> json_to_bio(const std::vector<std::string>& tokens,
                                            const constrain::EntityMapping& entities) {
  std::vector<std::string> tags(tokens.size(), "O");
  std::vector<bool> claimed(tokens.size(), false);
  std::vector<std::string> folded;
  folded.reserve(tokens.size());
  for (const auto& t : tokens) folded.push_back(text::to_lower(t));

  for (const auto& [type, strings] : entities) {
    for (const auto& entity : strings) {
      std::vector<std::string> needle = text::split_whitespace(text::to_lower(entity));
      if (needle.empty() || needle.size() > tokens.size()) continue;
      for (std::size_t i = 0; i + needle.size() <= tokens.size(); ++i) {
        bool match = true;
        for (std::size_t k = 0; k < needle.size() && match; ++k) {
          match = !claimed[i + k] && folded[i + k] == needle[k];
        }
        if (!match) continue;
        for (std::size_t k = 0; k < needle.size(); ++k) {
          claimed[i + k] = true;
          tags[i + k] = (k == 0 ? "B-" : "I-") + type;
        }
        break;
      }
    }
  }
  return tags;
}

/// Gold entities of a tag sequence as strings, keyed in `types` order.
inline constrain::EntityMapping bio_to_entities(const std::vector<std::string>& tokens,
                                                const std::vector<std::string>& tags,
                                                const std::vector<std::string>& types) {
  constrain::EntityMapping out = constrain::empty_mapping(types);
  for (const BioSpan& span : bio_spans(tags)) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& e) { return e.first == span.type; });
    if (it == out.end()) continue;
    std::string s;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      if (i > span.begin) s.push_back(' ');
      s += tokens[i];
    }
    it->second.push_back(std::move(s));
  }
  return out;
}

/// Span-level micro F1 over exact (type, begin, end) matches.  1 when neither
/// side has any span.
inline Score ner_micro_f1(const std::vector<std::vector<std::string>>& gold,
                          const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw Error("ner_micro_f1: " + std::to_string(gold.size()) + " gold vs " +
                std::to_string(pred.size()) + " predicted sentences");
  }
  std::size_t tp = 0, n_gold = 0, n_pred = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw Error("ner_micro_f1: sentence " + std::to_string(s) + " has " +
                  std::to_string(gold[s].size()) + " gold vs " + std::to_string(pred[s].size()) +
                  " predicted tags");
    }
    const auto g = bio_spans(gold[s]);
    const auto p = bio_spans(pred[s]);
    const std::set<BioSpan> gs(g.begin(), g.end());
    n_gold += gs.size();
    const std::set<BioSpan> ps(p.begin(), p.end());
    n_pred += ps.size();
    for (const auto& span : ps) tp += gs.count(span);
  }
  if (n_gold == 0 && n_pred == 0) return {1.0, ScoreKind::kMicroF1};
  return {f1_from_counts(tp, n_pred - tp, n_gold - tp), ScoreKind::kMicroF1};
}

// ---------------------------------------------------------------------------
// Classification

/// Unweighted mean of per-class F1 over `classes`.  A class absent from both
/// gold and predictions contributes 0.
template <typename Label>
Score macro_f1(std::span<const Label> gold, std::span<const Label> pred, std::span<const Label> classes) {
  if (gold.size() != pred.size()) {
    throw Error("macro_f1: " + std::to_string(gold.size()) + " gold vs " +
                std::to_string(pred.size()) + " predicted labels");
  }
  if (classes.empty()) throw Error("macro_f1: empty class set");
  double sum = 0.0;
  for (const Label& c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == c;
      const bool p = pred[i] == c;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    sum += f1_from_counts(tp, fp, fn);
  }
  return {sum / static_cast<double>(classes.size()), ScoreKind::kMacroF1};
}

template <typename Label>
Score macro_f1(const std::vector<Label>& gold, const std::vector<Label>& pred,
               const std::vector<Label>& classes) {
  return macro_f1(std::span<const Label>(gold), std::span<const Label>(pred),
                  std::span<const Label>(classes));
}

/// Matthews correlation coefficient from confusion counts; 0 when any
/// marginal is empty.
inline Score mcc_from_counts(double tp, double tn, double fp, double fn) {
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return {0.0, ScoreKind::kMcc};
  const double v = (tp * tn - fp * fn) / std::sqrt(denom);
  return {std::clamp(v, -1.0, 1.0), ScoreKind::kMcc};
}

/// MCC over binary labels, with `positive` marking the positive class.
template <typename Label>
Score mcc(std::span<const Label> gold, std::span<const Label> pred, const Label& positive) {
  if (gold.size() != pred.size()) {
    throw Error("mcc: " + std::to_string(gold.size()) + " gold vs " + std::to_string(pred.size()) +
                " predicted labels");
  }
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] == positive;
    const bool p = pred[i] == positive;
    if (g) {
      (p ? tp : fn) += 1;
    } else {
      (p ? fp : tn) += 1;
    }
  }
  return mcc_from_counts(tp, tn, fp, fn);
}

template <typename Label>
Score mcc(const std::vector<Label>& gold, const std::vector<Label>& pred, const Label& positive) {
  return mcc(std::span<const Label>(gold), std::span<const Label>(pred), positive);
}

inline Score mcc(const std::vector<int>& gold, const std::vector<int>& pred) {
  return mcc(gold, pred, 1);
}

// ---------------------------------------------------------------------------
// Extractive QA

/// Lowercase, drop punctuation, drop English articles, collapse whitespace.
inline std::vector<std::string> qa_normalize(std::string_view s, std::string_view language) {
  std::u32string kept;
  for (char32_t c : text::decode(s)) {
    if (!text::is_punct(c)) kept.push_back(text::to_lower(c));
  }
  std::vector<std::string> words = text::split_whitespace(text::encode(kept));
  if (language == "en") {
    std::erase_if(words, [](const std::string& w) { return w == "a" || w == "an" || w == "the"; });
  }
  return words;
}

struct QaScore {
  Score em;
  Score f1;
};

inline double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& w : gold) ++counts[w];
  std::size_t common = 0;
  for (const auto& w : pred) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

/// Exact match and token-overlap F1 against the best of `answers`.
inline QaScore qa_em_f1(std::string_view prediction, const std::vector<std::string>& answers,
                        std::string_view language = "en") {
  if (answers.empty()) throw Error("qa_em_f1: no reference answers");
  const auto p = qa_normalize(prediction, language);
  double em = 0.0, f1 = 0.0;
  for (const auto& a : answers) {
    const auto g = qa_normalize(a, language);
    if (p == g) em = 1.0;
    f1 = std::max(f1, token_f1(p, g));
  }
  return {{em, ScoreKind::kQaEm}, {f1, ScoreKind::kQaF1}};
}

}  // namespace nlueval::metrics
