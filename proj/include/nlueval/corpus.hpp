#pragma once

// Benchmark datasets: sample types, validation, line-delimited JSON storage
// and deterministic split resizing.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlueval/common.hpp"
#include "nlueval/lexicon.hpp"
#include "nlueval/rng.hpp"
#include "nlueval/text.hpp"

namespace nlueval {

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

struct DatasetSpec {
  std::string id;
  std::string language;
  Task task = Task::kSentiment;
  std::size_t num_shots = 1;
  SplitSizes splits;
  Metric metric = Metric::kMacroF1;
  /// Canonical labels (classification) or entity types (NER); empty for QA.
  std::vector<std::string> labels;
  /// Localized strings for labels missing from the built-in lexicon.
  std::map<std::string, std::string> extra_localizations;

  void validate() const {
    if (id.empty()) throw Error("dataset spec has an empty id");
    if (num_shots == 0) throw Error("dataset '" + id + "': num_shots must be positive");
    if (splits.train == 0 || splits.val == 0 || splits.test == 0) {
      throw Error("dataset '" + id + "': split sizes must be positive");
    }
    if (task != Task::kQa && labels.empty()) {
      throw Error("dataset '" + id + "': label set is empty");
    }
  }

  /// Lexicon with this dataset's extra localizations layered on the built-in table.
  LabelLexicon lexicon() const {
    LabelLexicon lex = LabelLexicon::builtin();
    for (const auto& [canonical, localized] : extra_localizations) lex.set(language, canonical, localized);
    return lex;
  }
};

struct ClassificationSample {
  std::string text;
  std::string label;

  friend bool operator==(const ClassificationSample&, const ClassificationSample&) = default;
};

struct NerSample {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;

  friend bool operator==(const NerSample&, const NerSample&) = default;
};

struct QaAnswer {
  std::string text;
  std::size_t start = 0;

  friend bool operator==(const QaAnswer&, const QaAnswer&) = default;
};

struct QaSample {
  std::string context;
  std::string question;
  std::vector<QaAnswer> answers;

  friend bool operator==(const QaSample&, const QaSample&) = default;
};

using Sample = std::variant<ClassificationSample, NerSample, QaSample>;

constexpr bool task_accepts(Task task, const Sample& s) noexcept {
  switch (task) {
    case Task::kNer: return std::holds_alternative<NerSample>(s);
    case Task::kQa: return std::holds_alternative<QaSample>(s);
    default: return std::holds_alternative<ClassificationSample>(s);
  }
}

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

// ---------------------------------------------------------------------------
// BIO

struct BioSpan {
  std::string type;
  std::size_t begin = 0;  // first token
  std::size_t end = 0;    // one past the last token

  friend auto operator<=>(const BioSpan&, const BioSpan&) = default;
};

/// Entity type of a B-/I- tag, or nullopt for O.  Throws on malformed tags.
inline std::optional<std::string> bio_type(std::string_view tag) {
  if (tag == "O") return std::nullopt;
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return std::string(tag.substr(2));
  }
  throw Error("malformed BIO tag '" + std::string(tag) + "'");
}

/// Returns a description of the first BIO violation, or nullopt.
inline std::optional<std::string> find_bio_violation(const std::vector<std::string>& tags) {
  std::optional<std::string> open;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag != "O" && !(tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')) {
      return "token " + std::to_string(i) + ": malformed tag '" + tag + "'";
    }
    if (tag[0] == 'I' && (!open || *open != tag.substr(2))) {
      return "token " + std::to_string(i) + ": '" + tag + "' does not continue an entity of the same type";
    }
    open = tag == "O" ? std::nullopt : std::optional<std::string>(tag.substr(2));
  }
  return std::nullopt;
}

/// Entity spans of a tag sequence.  A stray I-X opens a new span.
inline std::vector<BioSpan> bio_spans(const std::vector<std::string>& tags) {
  std::vector<BioSpan> spans;
  std::optional<BioSpan> cur;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto type = bio_type(tags[i]);
    const bool continues = type && tags[i][0] == 'I' && cur && cur->type == *type;
    if (continues) continue;
    if (cur) {
      cur->end = i;
      spans.push_back(*cur);
      cur.reset();
    }
    if (type) cur = BioSpan{*type, i, i};
  }
  if (cur) {
    cur->end = tags.size();
    spans.push_back(*cur);
  }
  return spans;
}

// ---------------------------------------------------------------------------
// Sanitization and validation

/// Collapse blank lines in every text field.  QA answer offsets are remapped.
inline Sample sanitize(Sample s) {
  std::visit(
      [](auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ClassificationSample>) {
          v.text = text::collapse_newlines(v.text);
        } else if constexpr (std::is_same_v<T, NerSample>) {
          for (auto& t : v.tokens) t = text::collapse_newlines(t);
        } else {
          std::vector<std::size_t> offsets;
          for (const auto& a : v.answers) offsets.push_back(a.start);
          v.context = text::collapse_newlines(v.context, &offsets);
          v.question = text::collapse_newlines(v.question);
          for (std::size_t i = 0; i < v.answers.size(); ++i) {
            v.answers[i].text = text::collapse_newlines(v.answers[i].text);
            v.answers[i].start = offsets[i];
          }
        }
      },
      s);
  return s;
}

/// Throws Error describing the first violated sample invariant.
inline void validate_sample(const Sample& s, const DatasetSpec& spec) {
  if (!task_accepts(spec.task, s)) {
    throw Error("record shape does not match task " + std::string(to_string(spec.task)));
  }
  const auto label_known = [&](std::string_view l) {
    return std::find(spec.labels.begin(), spec.labels.end(), l) != spec.labels.end();
  };
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ClassificationSample>) {
          if (text::contains_blank_line(v.text)) throw Error("text contains a blank line");
          if (!label_known(v.label)) throw Error("unknown label '" + v.label + "'");
        } else if constexpr (std::is_same_v<T, NerSample>) {
          if (v.tokens.size() != v.tags.size()) {
            throw Error("tokens/tags length mismatch (" + std::to_string(v.tokens.size()) +
                        " vs " + std::to_string(v.tags.size()) + ")");
          }
          if (auto err = find_bio_violation(v.tags)) throw Error("BIO violation at " + *err);
          for (const auto& tag : v.tags) {
            if (tag != "O" && !label_known(tag.substr(2))) {
              throw Error("entity type '" + tag.substr(2) + "' is not declared for the dataset");
            }
          }
          for (const auto& tok : v.tokens) {
            if (text::contains_blank_line(tok)) throw Error("token contains a blank line");
          }
        } else {
          if (v.answers.empty()) throw Error("QA sample has no answers");
          if (text::contains_blank_line(v.context) || text::contains_blank_line(v.question)) {
            throw Error("QA text contains a blank line");
          }
          for (const auto& a : v.answers) {
            if (a.start > v.context.size() || v.context.compare(a.start, a.text.size(), a.text) != 0) {
              throw Error("answer '" + a.text + "' does not occur at offset " + std::to_string(a.start));
            }
          }
        }
      },
      s);
}

// ---------------------------------------------------------------------------
// JSON records

inline nlohmann::json to_json(const Sample& s) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ClassificationSample>) {
          return {{"text", v.text}, {"label", v.label}};
        } else if constexpr (std::is_same_v<T, NerSample>) {
          return {{"tokens", v.tokens}, {"tags", v.tags}};
        } else {
          nlohmann::json answers = nlohmann::json::array();
          for (const auto& a : v.answers) answers.push_back({{"text", a.text}, {"start", a.start}});
          return {{"context", v.context}, {"question", v.question}, {"answers", answers}};
        }
      },
      s);
}

inline Sample sample_from_json(const nlohmann::json& j, Task task) {
  if (!j.is_object()) throw Error("record is not a JSON object");
  try {
    switch (task) {
      case Task::kNer:
        return NerSample{j.at("tokens").get<std::vector<std::string>>(),
                         j.at("tags").get<std::vector<std::string>>()};
      case Task::kQa: {
        QaSample q{j.at("context").get<std::string>(), j.at("question").get<std::string>(), {}};
        for (const auto& a : j.at("answers")) {
          q.answers.push_back({a.at("text").get<std::string>(), a.at("start").get<std::size_t>()});
        }
        return q;
      }
      default:
        return ClassificationSample{j.at("text").get<std::string>(), j.at("label").get<std::string>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad record field: ") + e.what());
  }
}

/// Read one split file, sanitizing and validating each record.
inline std::vector<Sample> load_split(const std::filesystem::path& path, const DatasetSpec& spec) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(where + ": malformed record: " + e.what());
    }
    Sample s;
    try {
      s = sanitize(sample_from_json(j, spec.task));
      validate_sample(s, spec);
    } catch (const Error& e) {
      throw Error(where + ": sample " + std::to_string(out.size()) + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void save_split(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

inline nlohmann::json to_json(const DatasetSpec& spec) {
  nlohmann::json j = {
      {"id", spec.id},
      {"language", spec.language},
      {"task", to_string(spec.task)},
      {"num_shots", spec.num_shots},
      {"metric", to_string(spec.metric)},
      {"splits", {{"train", spec.splits.train}, {"val", spec.splits.val}, {"test", spec.splits.test}}},
      {"labels", spec.labels},
  };
  if (!spec.extra_localizations.empty()) j["localized_labels"] = spec.extra_localizations;
  return j;
}

inline DatasetSpec spec_from_json(const nlohmann::json& j) {
  try {
    DatasetSpec spec;
    spec.id = j.at("id").get<std::string>();
    spec.language = j.at("language").get<std::string>();
    spec.task = parse_task(j.at("task").get<std::string>());
    spec.num_shots = j.at("num_shots").get<std::size_t>();
    spec.metric = j.contains("metric") ? parse_metric(j.at("metric").get<std::string>())
                                       : default_metric(spec.task);
    const auto& sp = j.at("splits");
    spec.splits = {sp.at("train").get<std::size_t>(), sp.at("val").get<std::size_t>(),
                   sp.at("test").get<std::size_t>()};
    spec.labels = j.contains("labels") ? j.at("labels").get<std::vector<std::string>>()
                                       : default_labels(spec.task);
    if (j.contains("localized_labels")) {
      spec.extra_localizations = j.at("localized_labels").get<std::map<std::string, std::string>>();
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad dataset manifest: ") + e.what());
  }
}

inline constexpr std::string_view kManifestFile = "spec.json";

/// Load the train/val/test files of a dataset bundle directory and check
/// their sizes against the spec.
inline Dataset load_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  spec.validate();
  Dataset ds{spec, load_split(dir / "train.jsonl", spec), load_split(dir / "val.jsonl", spec),
             load_split(dir / "test.jsonl", spec)};
  const auto check = [&](std::string_view name, std::size_t expected, std::size_t actual) {
    if (expected != actual) {
      throw Error("dataset '" + spec.id + "': " + std::string(name) + " split has " +
                  std::to_string(actual) + " samples, expected " + std::to_string(expected));
    }
  };
  check("train", spec.splits.train, ds.train.size());
  check("val", spec.splits.val, ds.val.size());
  check("test", spec.splits.test, ds.test.size());
  return ds;
}

/// Load a bundle using the manifest stored inside it.
inline Dataset load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw Error("missing manifest " + (dir / kManifestFile).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("malformed manifest " + (dir / kManifestFile).string() + ": " + e.what());
  }
  return load_dataset(dir, spec_from_json(j));
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / kManifestFile, std::ios::binary);
    out << to_json(ds.spec).dump(2) << '\n';
  }
  save_split(dir / "train.jsonl", ds.train);
  save_split(dir / "val.jsonl", ds.val);
  save_split(dir / "test.jsonl", ds.test);
}

/// Uniform subsample without replacement, keeping the original relative
/// order.  Taking every sample returns the input unchanged.
template <typename T>
std::vector<T> resize_split(const std::vector<T>& samples, std::size_t target, std::uint64_t seed) {
  if (target > samples.size()) {
    throw Error("cannot resize split of " + std::to_string(samples.size()) + " samples to " +
                std::to_string(target));
  }
  if (target == samples.size()) return samples;
  Rng rng(seed);
  auto idx = sample_indices(samples.size(), target, rng);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  out.reserve(target);
  for (auto i : idx) out.push_back(samples[i]);
  return out;
}

}  // namespace nlueval
