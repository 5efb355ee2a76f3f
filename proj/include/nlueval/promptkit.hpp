#pragma once

// Few-shot prompt construction.
//
//   <prefix prompt>
//
//   <doc prefix>: <text>
//   <label prefix>: <label>
//
//   ...
//
//   <doc prefix>: <query text>
//   <label prefix>:

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nlueval/common.hpp"
#include "nlueval/corpus.hpp"
#include "nlueval/genconstrain.hpp"
#include "nlueval/lexicon.hpp"
#include "nlueval/registry.hpp"
#include "nlueval/rng.hpp"
#include "nlueval/text.hpp"

namespace nlueval {

struct PromptTemplate {
  std::string language;
  Task task = Task::kSentiment;
  std::string prefix_prompt;
  std::string doc_prefix;
  std::string label_prefix;
  std::optional<std::string> question_prefix;
  /// Canonical labels or entity types, in output order.
  std::vector<std::string> labels;
  LabelLexicon lexicon = LabelLexicon::builtin();

  void validate() const {
    for (const std::string* s : {&prefix_prompt, &doc_prefix, &label_prefix}) {
      if (text::contains_blank_line(*s)) throw Error("template text contains a blank line");
    }
    if (question_prefix && text::contains_blank_line(*question_prefix)) {
      throw Error("template text contains a blank line");
    }
    if ((task == Task::kQa) != question_prefix.has_value()) {
      throw Error("question prefix must be present exactly for QA templates");
    }
  }

  /// Surface strings of `labels` as they appear in prompts.  Classification
  /// labels are lowercased; entity types keep their casing since they become
  /// JSON keys.
  std::vector<std::string> localized_labels() const {
    std::vector<std::string> out;
    for (const auto& l : labels) out.push_back(surface(l));
    return out;
  }

  std::string surface(const std::string& canonical) const {
    std::string s = lexicon.localize(canonical, language);
    return task == Task::kNer ? s : text::to_lower(s);
  }

  constrain::OutputSchema ner_schema() const {
    constrain::OutputSchema schema;
    schema.keys = localized_labels();
    return schema;
  }
};

inline PromptTemplate make_template(const TemplateText& t, const DatasetSpec& spec) {
  PromptTemplate p{t.language,   t.task,       t.prefix_prompt, t.doc_prefix, t.label_prefix,
                   t.question_prefix, spec.labels, spec.lexicon()};
  p.validate();
  return p;
}

struct RenderedPrompt {
  std::string text;
  std::size_t shot_count = 0;
  std::size_t approx_tokens = 0;
};

/// Characters / 4, rounded up.
inline std::size_t approx_token_count(std::string_view s) { return (text::length(s) + 3) / 4; }

/// Indices of `n` demonstrations drawn uniformly without replacement from
/// `available` training samples, in draw order.
inline std::vector<std::size_t> few_shot_indices(std::size_t available, std::size_t n, std::uint64_t seed) {
  if (n > available) {
    throw Error("cannot draw " + std::to_string(n) + " shots from " + std::to_string(available) +
                " training samples");
  }
  Rng rng(seed);
  return sample_indices(available, n, rng);
}

template <typename T>
std::vector<T> sample_few_shot(const std::vector<T>& train, std::size_t n, std::uint64_t seed) {
  std::vector<T> out;
  out.reserve(n);
  for (auto i : few_shot_indices(train.size(), n, seed)) out.push_back(train[i]);
  return out;
}

namespace detail {

inline std::string_view document_of(const Sample& s) {
  if (const auto* c = std::get_if<ClassificationSample>(&s)) return c->text;
  if (const auto* q = std::get_if<QaSample>(&s)) return q->context;
  return {};
}

inline std::string ner_document(const NerSample& s) {
  std::string out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += s.tokens[i];
  }
  return out;
}

/// Gold answer as shown in a demonstration.
inline std::string gold_label(const PromptTemplate& t, const Sample& s) {
  if (const auto* c = std::get_if<ClassificationSample>(&s)) return t.surface(c->label);
  if (const auto* q = std::get_if<QaSample>(&s)) return q->answers.front().text;
  const auto& ner = std::get<NerSample>(s);
  constrain::EntityMapping mapping;
  for (const auto& type : t.labels) mapping.emplace_back(t.surface(type), std::vector<std::string>{});
  for (const BioSpan& span : bio_spans(ner.tags)) {
    auto it = std::find(t.labels.begin(), t.labels.end(), span.type);
    if (it == t.labels.end()) throw Error("entity type '" + span.type + "' is not in the template's label set");
    std::string e;
    for (std::size_t i = span.begin; i < span.end; ++i) {
      if (i > span.begin) e.push_back(' ');
      e += ner.tokens[i];
    }
    mapping[static_cast<std::size_t>(it - t.labels.begin())].second.push_back(std::move(e));
  }
  return constrain::canonical_json(mapping);
}

inline std::string block(const PromptTemplate& t, const Sample& s, const std::string* label) {
  std::string doc;
  if (const auto* ner = std::get_if<NerSample>(&s)) {
    doc = ner_document(*ner);
  } else {
    doc = std::string(document_of(s));
  }
  std::string out = t.doc_prefix + ": " + doc + "\n";
  if (const auto* q = std::get_if<QaSample>(&s)) out += *t.question_prefix + ": " + q->question + "\n";
  out += t.label_prefix + ":";
  if (label != nullptr) out += " " + *label;
  return out;
}

}  // namespace detail

inline RenderedPrompt render_prompt(const PromptTemplate& t, const std::vector<Sample>& shots,
                                    const Sample& query) {
  const auto check = [&](const Sample& s, const char* what) {
    if (!task_accepts(t.task, s)) throw Error(std::string(what) + " does not match the template's task");
    if (const auto* q = std::get_if<QaSample>(&s); q != nullptr && q->answers.empty() &&
                                                   std::string_view(what) == "shot") {
      throw Error("QA demonstration has no answer");
    }
  };
  RenderedPrompt out;
  out.text = t.prefix_prompt;
  for (const Sample& s : shots) {
    check(s, "shot");
    const std::string label = detail::gold_label(t, s);
    const std::string b = detail::block(t, s, &label);
    if (text::contains_blank_line(b)) throw Error("demonstration contains a blank line");
    out.text += "\n\n" + b;
  }
  check(query, "query");
  const std::string q = detail::block(t, query, nullptr);
  if (text::contains_blank_line(q)) throw Error("query contains a blank line; sanitize it first");
  out.text += "\n\n" + q;
  out.shot_count = shots.size();
  out.approx_tokens = approx_token_count(out.text);
  return out;
}

}  // namespace nlueval
