#pragma once

// Evaluation protocol: per iteration, draw few-shot demonstrations, bootstrap
// the test split, query a backend for every prompt, parse and score.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlueval/common.hpp"
#include "nlueval/corpus.hpp"
#include "nlueval/genconstrain.hpp"
#include "nlueval/metrics.hpp"
#include "nlueval/promptkit.hpp"
#include "nlueval/rankscore.hpp"
#include "nlueval/rng.hpp"
#include "nlueval/text.hpp"

namespace nlueval::eval {

inline constexpr std::string_view kStopSequence = "\n\n";

struct GenerationParams {
  std::size_t max_new_tokens = 16;
  std::string stop_sequence = std::string(kStopSequence);
  double temperature = 0.0;
};

inline GenerationParams default_params(Task task) {
  GenerationParams p;
  switch (task) {
    case Task::kNer: p.max_new_tokens = 256; break;
    case Task::kQa: p.max_new_tokens = 32; break;
    default: p.max_new_tokens = 16; break;
  }
  return p;
}

struct BackendProfile {
  std::string id;
  bool generative = true;
  bool logit_access = false;
  /// Overrides the per-task defaults when set.
  std::optional<GenerationParams> params;

  void validate() const {
    if (id.empty()) throw Error("backend profile has an empty id");
    if (params) {
      if (params->temperature < 0.0) throw Error("backend '" + id + "': temperature must be >= 0");
      if (params->stop_sequence.empty()) throw Error("backend '" + id + "': stop sequence is empty");
    }
  }

  GenerationParams params_for(Task task) const { return params ? *params : default_params(task); }
};

struct CompletionRequest {
  std::string prompt;
  std::size_t max_tokens = 16;
  std::string stop = std::string(kStopSequence);
  double temperature = 0.0;
  /// Gold answer as it would be written in a demonstration.  Only mock
  /// backends read it; it never leaves the process.
  std::optional<std::string> expected;
  std::vector<std::string> candidates;
};

/// Raised by backends for failures that may succeed on retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendProfile& profile() const = 0;

  /// Free-form completion.  Must be callable from several threads.
  virtual std::string complete(const CompletionRequest& request) = 0;

  /// Token vocabulary for constrained decoding; ids are dense from 0.
  virtual const constrain::Vocabulary* vocabulary() const { return nullptr; }

  /// Scores for every vocabulary id given the text emitted so far.
  virtual std::vector<double> next_token_logits(const CompletionRequest&, std::string_view) {
    throw Error("backend '" + profile().id + "' has no logit access");
  }
};

// ---------------------------------------------------------------------------
// Mock backend

enum class MockBehavior { kGoldEcho, kFixedLabel, kNoisyGold, kScriptedJson };

inline MockBehavior parse_mock_behavior(std::string_view s) {
  if (s == "gold-echo") return MockBehavior::kGoldEcho;
  if (s == "fixed-label") return MockBehavior::kFixedLabel;
  if (s == "noisy-gold") return MockBehavior::kNoisyGold;
  if (s == "scripted-json") return MockBehavior::kScriptedJson;
  throw Error("unknown mock behavior '" + std::string(s) + "'");
}

struct MockOptions {
  MockBehavior behavior = MockBehavior::kGoldEcho;
  std::string fixed_output;           // kFixedLabel
  double epsilon = 0.0;               // kNoisyGold
  std::uint64_t seed = 0;
  std::vector<std::string> script;    // kScriptedJson; empty = follow the gold
  std::string trailing = "\n\nNext:"; // appended to completions, cut by the stop sequence
  std::size_t fail_first = 0;         // failing calls before the first success
  bool always_fail = false;
};

/// Single-byte tokens for printable ASCII and every UTF-8 lead/continuation
/// byte, plus multi-byte JSON punctuation.
inline constrain::Vocabulary default_mock_vocabulary() {
  constrain::Vocabulary v;
  constrain::TokenId id = 0;
  for (int c = 0x20; c < 0x7F; ++c) v.add(id++, std::string(1, static_cast<char>(c)));
  for (int c = 0x80; c <= 0xF4; ++c) {
    if (c == 0xC0 || c == 0xC1) continue;
    v.add(id++, std::string(1, static_cast<char>(c)));
  }
  for (const char* piece : {"{\"", "\": [", "\": []", "[]", "\"]", "\", \"", ", \"", "]}", "\"], \"", "], \""}) {
    v.add(id++, piece);
  }
  return v;
}

class MockBackend : public Backend {
 public:
  MockBackend(BackendProfile profile, MockOptions options)
      : profile_(std::move(profile)), options_(std::move(options)), vocab_(default_mock_vocabulary()), tokens_(vocab_.entries()) {
    profile_.validate();
    if (options_.epsilon < 0.0 || options_.epsilon > 1.0) throw Error("mock epsilon must lie in [0, 1]");
  }

  const BackendProfile& profile() const override { return profile_; }
  const constrain::Vocabulary* vocabulary() const override {
    return profile_.logit_access ? &vocab_ : nullptr;
  }

  std::string complete(const CompletionRequest& request) override {
    maybe_fail();
    return answer(request) + options_.trailing;
  }

  std::vector<double> next_token_logits(const CompletionRequest& request, std::string_view emitted) override {
    if (!profile_.logit_access) return Backend::next_token_logits(request, emitted);
    maybe_fail();
    const std::string target = answer(request);
    std::vector<double> logits(vocab_.size(), 0.0);
    if (!std::string_view(target).starts_with(emitted)) return logits;
    const std::string_view rest = std::string_view(target).substr(emitted.size());
    for (const auto& [id, tok] : tokens_) {
      // Longer matching tokens win.
      if (rest.starts_with(tok)) logits[static_cast<std::size_t>(id)] = static_cast<double>(tok.size());
    }
    return logits;
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  void maybe_fail() {
    const std::size_t n = calls_.fetch_add(1);
    if (options_.always_fail || n < options_.fail_first) {
      throw TransportError("mock backend '" + profile_.id + "' injected failure");
    }
  }

  std::string answer(const CompletionRequest& r) const {
    const std::string gold = r.expected.value_or("");
    switch (options_.behavior) {
      case MockBehavior::kGoldEcho: return gold;
      case MockBehavior::kFixedLabel: return options_.fixed_output;
      case MockBehavior::kScriptedJson:
        if (options_.script.empty()) return gold;
        return options_.script[fnv1a64(r.prompt) % options_.script.size()];
      case MockBehavior::kNoisyGold: {
        Rng rng(mix64(fnv1a64(r.prompt) ^ options_.seed));
        if (!rng.bernoulli(options_.epsilon)) return gold;
        std::vector<std::string> others;
        for (const auto& c : r.candidates) {
          if (c != gold) others.push_back(c);
        }
        if (others.empty()) return "";
        return others[rng.below(others.size())];
      }
    }
    return gold;
  }

  BackendProfile profile_;
  MockOptions options_;
  constrain::Vocabulary vocab_;
  std::vector<std::pair<constrain::TokenId, std::string>> tokens_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Retry and generation

struct RetryPolicy {
  std::size_t attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// Call `f` until it stops throwing TransportError or the attempts run out.
template <typename F>
auto with_retry(F&& f, const RetryPolicy& policy, const Sleeper& sleep) -> decltype(f()) {
  auto backoff = policy.initial_backoff;
  for (std::size_t attempt = 1;; ++attempt) {
    try {
      return f();
    } catch (const TransportError&) {
      if (attempt >= policy.attempts) throw;
      sleep(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
  }
}

enum class DecodingPath { kFree, kConstrained, kRepaired };

inline std::string to_string(DecodingPath p) {
  switch (p) {
    case DecodingPath::kFree: return "free";
    case DecodingPath::kConstrained: return "constrained";
    case DecodingPath::kRepaired: return "repaired";
  }
  return "free";
}

struct Generation {
  std::string text;
  DecodingPath path = DecodingPath::kFree;
  bool failed = false;
  std::string error;
};

inline std::string truncate_at_stop(std::string_view s, std::string_view stop) {
  if (stop.empty()) return std::string(s);
  const auto at = s.find(stop);
  return std::string(at == std::string_view::npos ? s : s.substr(0, at));
}

/// Greedy decoding restricted to the tokens the automaton allows.  Ties go to
/// the lowest token id.  When the budget runs out the shortest completion is
/// appended so the output is always accepted.
inline std::string constrained_decode(Backend& backend, const CompletionRequest& req,
                                      const constrain::Automaton& automaton, const RetryPolicy& retry,
                                      const Sleeper& sleep) {
  const constrain::Vocabulary& vocab = *backend.vocabulary();
  auto state = automaton.start();
  for (std::size_t step = 0; step < req.max_tokens && !state.accepting(); ++step) {
    const auto allowed = automaton.allowed_tokens(state, vocab);
    if (allowed.empty()) break;
    const auto logits =
        with_retry([&] { return backend.next_token_logits(req, state.emitted()); }, retry, sleep);
    if (logits.size() != vocab.size()) throw Error("backend returned logits of the wrong size");
    constrain::TokenId best = allowed.front();
    for (constrain::TokenId id : allowed) {
      if (logits[static_cast<std::size_t>(id)] > logits[static_cast<std::size_t>(best)]) best = id;
    }
    state = automaton.advance(state, best, vocab);
  }
  if (!state.accepting()) state = automaton.advance_bytes(state, automaton.shortest_completion(state));
  return state.emitted();
}

inline Generation generate(Backend& backend, const CompletionRequest& req, const constrain::Automaton* constraint,
                           const RetryPolicy& retry = {}, const Sleeper& sleep = real_sleep) {
  if (req.prompt.empty()) throw Error("empty prompt");
  Generation g;
  const bool constrained = constraint != nullptr && backend.profile().logit_access && backend.vocabulary() != nullptr;
  g.path = constrained ? DecodingPath::kConstrained
                       : (constraint != nullptr ? DecodingPath::kRepaired : DecodingPath::kFree);
  try {
    if (constrained) {
      g.text = constrained_decode(backend, req, *constraint, retry, sleep);
    } else {
      g.text = truncate_at_stop(with_retry([&] { return backend.complete(req); }, retry, sleep), req.stop);
    }
  } catch (const TransportError& e) {
    g.failed = true;
    g.error = e.what();
    g.text.clear();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Parsing

/// Index of the candidate closest in edit distance to the lowercased, trimmed
/// first line of `generation`.  Ties go to the earlier candidate.
inline std::size_t parse_classification_index(std::string_view generation,
                                              const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw Error("no classification candidates");
  const auto nl = generation.find('\n');
  const std::string_view first = generation.substr(0, nl);
  const std::u32string g = text::decode(text::to_lower(text::trim(first)));
  std::size_t best = 0;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::size_t d = text::edit_distance(g, text::decode(text::to_lower(candidates[i])));
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

inline std::string parse_classification(std::string_view generation, const std::vector<std::string>& candidates) {
  return candidates[parse_classification_index(generation, candidates)];
}

// ---------------------------------------------------------------------------
// Bootstrap

inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("cannot bootstrap an empty split");
  Rng rng(seed);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = static_cast<std::size_t>(rng.below(n));
  return out;
}

/// Same-size resample with replacement.
template <typename T>
std::vector<T> bootstrap_split(const std::vector<T>& test, std::uint64_t seed) {
  std::vector<T> out;
  out.reserve(test.size());
  for (auto i : bootstrap_indices(test.size(), seed)) out.push_back(test[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Run records

struct SampleOutput {
  std::size_t index = 0;  // position in the test split
  std::uint64_t prompt_hash = 0;
  std::string generation;
  nlohmann::json prediction;
  bool failed = false;
};

struct RunRecord {
  std::string model;
  std::string dataset;
  std::size_t iteration = 0;
  std::uint64_t seed = 0;
  double raw_score = 0.0;
  std::optional<double> qa_em;
  bool complete = true;
  bool generative = true;
  std::string language;
  Task task = Task::kSentiment;
  Metric metric = Metric::kMacroF1;
  DecodingPath decoding = DecodingPath::kFree;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::string> errors;
  std::vector<SampleOutput> outputs;
};

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& o : r.outputs) {
    outputs.push_back({{"index", o.index},
                       {"prompt_hash", text::hex64(o.prompt_hash)},
                       {"generation", o.generation},
                       {"prediction", o.prediction},
                       {"failed", o.failed}});
  }
  nlohmann::json j = {{"model", r.model},
                      {"dataset", r.dataset},
                      {"iteration", r.iteration},
                      {"seed", r.seed},
                      {"raw_score", r.raw_score},
                      {"complete", r.complete},
                      {"generative", r.generative},
                      {"language", r.language},
                      {"task", to_string(r.task)},
                      {"metric", to_string(r.metric)},
                      {"decoding", to_string(r.decoding)},
                      {"metadata", r.metadata},
                      {"errors", r.errors},
                      {"outputs", outputs}};
  if (r.qa_em) j["qa_em"] = *r.qa_em;
  return j;
}

inline DecodingPath parse_decoding_path(std::string_view s) {
  for (auto p : {DecodingPath::kFree, DecodingPath::kConstrained, DecodingPath::kRepaired}) {
    if (to_string(p) == s) return p;
  }
  throw Error("unknown decoding path '" + std::string(s) + "'");
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.model = j.at("model").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.iteration = j.at("iteration").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.raw_score = j.at("raw_score").get<double>();
  if (j.contains("qa_em")) r.qa_em = j.at("qa_em").get<double>();
  r.complete = j.at("complete").get<bool>();
  r.generative = j.at("generative").get<bool>();
  r.language = j.at("language").get<std::string>();
  r.task = parse_task(j.at("task").get<std::string>());
  r.metric = parse_metric(j.at("metric").get<std::string>());
  r.decoding = parse_decoding_path(j.at("decoding").get<std::string>());
  r.metadata = j.at("metadata");
  r.errors = j.at("errors").get<std::vector<std::string>>();
  for (const auto& o : j.at("outputs")) {
    SampleOutput s;
    s.index = o.at("index").get<std::size_t>();
    s.prompt_hash = std::stoull(o.at("prompt_hash").get<std::string>(), nullptr, 16);
    s.generation = o.at("generation").get<std::string>();
    s.prediction = o.at("prediction");
    s.failed = o.at("failed").get<bool>();
    r.outputs.push_back(std::move(s));
  }
  return r;
}

inline std::filesystem::path record_path(const std::filesystem::path& results_dir, const std::string& model,
                                         const std::string& dataset) {
  return results_dir / model / (dataset + ".jsonl");
}

inline void write_records(const std::filesystem::path& results_dir, const std::vector<RunRecord>& records) {
  std::map<std::filesystem::path, std::vector<const RunRecord*>> files;
  for (const auto& r : records) files[record_path(results_dir, r.model, r.dataset)].push_back(&r);
  for (const auto& [path, rs] : files) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const RunRecord* r : rs) out << to_json(*r).dump() << '\n';
  }
}

inline std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<RunRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

/// Predicted canonical label / answer text, or predicted BIO tags.
using Prediction = std::variant<std::string, std::vector<std::string>>;

struct IterationScore {
  double raw = 0.0;
  std::optional<double> em;
};

inline IterationScore score_predictions(const DatasetSpec& spec, const std::vector<const Sample*>& gold,
                                        const std::vector<Prediction>& pred) {
  if (gold.size() != pred.size()) throw Error("prediction count does not match the sample count");
  if (gold.empty()) return {};
  switch (spec.metric) {
    case Metric::kMicroF1: {
      std::vector<std::vector<std::string>> g, p;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        g.push_back(std::get<NerSample>(*gold[i]).tags);
        p.push_back(std::get<std::vector<std::string>>(pred[i]));
      }
      return {metrics::ner_micro_f1(g, p).value, std::nullopt};
    }
    case Metric::kMacroF1:
    case Metric::kMcc: {
      std::vector<std::string> g, p;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        g.push_back(std::get<ClassificationSample>(*gold[i]).label);
        p.push_back(std::get<std::string>(pred[i]));
      }
      if (spec.metric == Metric::kMacroF1) return {metrics::macro_f1(g, p, spec.labels).value, std::nullopt};
      const bool has_correct = std::find(spec.labels.begin(), spec.labels.end(), labels::kCorrect) != spec.labels.end();
      const std::string positive = has_correct ? std::string(labels::kCorrect) : spec.labels.front();
      return {metrics::mcc(g, p, positive).value, std::nullopt};
    }
    case Metric::kQaEmF1: {
      double em = 0.0, f1 = 0.0;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        std::vector<std::string> answers;
        for (const auto& a : std::get<QaSample>(*gold[i]).answers) answers.push_back(a.text);
        const auto s = metrics::qa_em_f1(std::get<std::string>(pred[i]), answers, spec.language);
        em += s.em.value;
        f1 += s.f1.value;
      }
      const double n = static_cast<double>(gold.size());
      return {f1 / n, em / n};
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Benchmark runner

struct RunOptions {
  std::size_t iterations = rank::kIterations;
  std::size_t workers = 1;
  RetryPolicy retry;
  Sleeper sleep = real_sleep;
  /// Consecutive failed samples after which the backend counts as unreachable.
  std::size_t abort_after_failures = 5;
};

struct BenchmarkRun {
  std::vector<RunRecord> records;  // iteration order
  bool complete = true;
  std::vector<std::string> log;
};

namespace detail {

struct PreparedSample {
  CompletionRequest request;
  std::uint64_t prompt_hash = 0;
};

inline std::string expected_output(const PromptTemplate& t, const Sample& s) {
  if (const auto* c = std::get_if<ClassificationSample>(&s)) return t.surface(c->label);
  if (const auto* q = std::get_if<QaSample>(&s)) return q->answers.front().text;
  const auto& ner = std::get<NerSample>(s);
  auto m = metrics::bio_to_entities(ner.tokens, ner.tags, t.labels);
  for (std::size_t k = 0; k < m.size(); ++k) m[k].first = t.surface(t.labels[k]);
  return constrain::canonical_json(m);
}

inline std::pair<Prediction, nlohmann::json> parse_prediction(const PromptTemplate& t, const Sample& s,
                                                              const std::string& generation) {
  if (std::holds_alternative<ClassificationSample>(s)) {
    const std::size_t i = parse_classification_index(generation, t.localized_labels());
    return {t.labels[i], t.labels[i]};
  }
  if (std::holds_alternative<QaSample>(s)) {
    const auto nl = generation.find('\n');
    std::string answer(text::trim(std::string_view(generation).substr(0, nl)));
    return {answer, answer};
  }
  const auto& ner = std::get<NerSample>(s);
  auto mapping = constrain::repair_or_reject(generation, t.ner_schema());
  nlohmann::json shown = nlohmann::json::object();
  for (std::size_t k = 0; k < mapping.size(); ++k) {
    shown[mapping[k].first] = mapping[k].second;
    mapping[k].first = t.labels[k];
  }
  if (ner.tokens.empty()) return {std::vector<std::string>{}, shown};
  return {metrics::json_to_bio(ner.tokens, mapping), shown};
}

}  // namespace detail

/// Run `options.iterations` evaluation rounds.  Iteration i draws its shots
/// and bootstrap from derive_seed(master_seed, i) only, so iterations may run
/// in any order.
inline BenchmarkRun run_benchmark(Backend& backend, const Dataset& dataset, const PromptTemplate& tmpl,
                                  std::uint64_t master_seed, const RunOptions& options = {}) {
  const DatasetSpec& spec = dataset.spec;
  if (tmpl.task != spec.task) throw Error("template task does not match dataset '" + spec.id + "'");
  if (dataset.test.empty()) throw Error("dataset '" + spec.id + "' has an empty test split");
  const BackendProfile& profile = backend.profile();
  const GenerationParams params = profile.params_for(spec.task);
  std::optional<constrain::Automaton> automaton;
  if (spec.task == Task::kNer) automaton.emplace(tmpl.ner_schema());
  const std::vector<std::string> candidates =
      spec.task == Task::kNer || spec.task == Task::kQa ? std::vector<std::string>{} : tmpl.localized_labels();

  std::atomic<bool> aborted{false};
  std::vector<std::optional<RunRecord>> slots(options.iterations);

  const auto run_iteration = [&](std::size_t it) {
    RunRecord rec;
    rec.model = profile.id;
    rec.dataset = spec.id;
    rec.iteration = it;
    rec.seed = derive_seed(master_seed, it);
    rec.generative = profile.generative;
    rec.language = spec.language;
    rec.task = spec.task;
    rec.metric = spec.metric;
    rec.decoding = automaton ? (profile.logit_access && backend.vocabulary() ? DecodingPath::kConstrained
                                                                             : DecodingPath::kRepaired)
                             : DecodingPath::kFree;

    const auto shot_idx = few_shot_indices(dataset.train.size(), spec.num_shots, derive_seed(rec.seed, 0));
    const auto boot_idx = bootstrap_indices(dataset.test.size(), derive_seed(rec.seed, 1));
    std::vector<Sample> shots;
    for (auto i : shot_idx) shots.push_back(dataset.train[i]);
    rec.metadata = {{"master_seed", master_seed},
                    {"shot_indices", shot_idx},
                    {"few_shot_policy", "fixed-per-iteration"},
                    {"bootstrap", "same-size-with-replacement"},
                    {"max_new_tokens", params.max_new_tokens},
                    {"temperature", params.temperature}};

    std::map<std::size_t, std::pair<SampleOutput, Prediction>> cache;
    std::vector<const Sample*> gold;
    std::vector<Prediction> preds;
    std::size_t consecutive_failures = 0;
    for (std::size_t test_index : boot_idx) {
      if (aborted.load()) {
        rec.complete = false;
        break;
      }
      auto hit = cache.find(test_index);
      if (hit == cache.end()) {
        const Sample& query = dataset.test[test_index];
        CompletionRequest req;
        req.prompt = render_prompt(tmpl, shots, query).text;
        req.max_tokens = params.max_new_tokens;
        req.stop = params.stop_sequence;
        req.temperature = params.temperature;
        req.expected = detail::expected_output(tmpl, query);
        req.candidates = candidates;
        Generation g = generate(backend, req, automaton ? &*automaton : nullptr, options.retry, options.sleep);
        SampleOutput out;
        out.index = test_index;
        out.prompt_hash = fnv1a64(req.prompt);
        out.generation = g.text;
        out.failed = g.failed;
        if (g.failed) {
          rec.errors.push_back("sample " + std::to_string(test_index) + ": " + g.error);
          if (++consecutive_failures >= options.abort_after_failures) {
            aborted.store(true);
            rec.complete = false;
            rec.errors.push_back("backend unreachable; aborting");
          }
        } else {
          consecutive_failures = 0;
        }
        auto [pred, shown] = detail::parse_prediction(tmpl, query, g.text);
        out.prediction = std::move(shown);
        hit = cache.emplace(test_index, std::make_pair(std::move(out), std::move(pred))).first;
        if (!rec.complete) break;
      }
      rec.outputs.push_back(hit->second.first);
      gold.push_back(&dataset.test[test_index]);
      preds.push_back(hit->second.second);
    }
    const IterationScore s = score_predictions(spec, gold, preds);
    rec.raw_score = s.raw;
    rec.qa_em = s.em;
    slots[it] = std::move(rec);
  };

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t it = next.fetch_add(1);
      if (it >= options.iterations || aborted.load()) return;
      run_iteration(it);
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(options.iterations, 1));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::mutex error_mu;
    std::exception_ptr first_error;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        try {
          worker();
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          aborted.store(true);
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  BenchmarkRun run;
  for (auto& slot : slots) {
    if (!slot) {
      run.complete = false;
      continue;
    }
    if (!slot->complete) run.complete = false;
    for (const auto& e : slot->errors) {
      run.log.push_back(spec.id + " iteration " + std::to_string(slot->iteration) + ": " + e);
    }
    run.records.push_back(std::move(*slot));
  }
  if (run.records.size() != options.iterations) {
    run.log.push_back(spec.id + ": " + std::to_string(run.records.size()) + " of " +
                      std::to_string(options.iterations) + " iterations recorded");
  }
  return run;
}

// ---------------------------------------------------------------------------
// Results directory -> score tensor

inline constexpr std::string_view kImportedFile = "imported.jsonl";

/// Group run records into tensor cells.  A cell is complete when it holds
/// exactly `iterations` complete records with distinct indices.
inline void add_records(rank::ScoreTensor& tensor, const std::vector<RunRecord>& records,
                        std::size_t iterations = rank::kIterations) {
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> cells;
  for (const auto& r : records) cells[{r.model, r.dataset}].push_back(&r);
  for (auto& [key, rs] : cells) {
    std::sort(rs.begin(), rs.end(), [](const RunRecord* a, const RunRecord* b) { return a->iteration < b->iteration; });
    std::vector<double> scores;
    bool complete = rs.size() == iterations;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      scores.push_back(rs[i]->raw_score);
      if (!rs[i]->complete || rs[i]->iteration != i) complete = false;
    }
    tensor.set(key.first, key.second, std::move(scores), complete);
    tensor.set_generative(key.first, rs.front()->generative);
    tensor.set_dataset_info(key.second, {rs.front()->language, rs.front()->task, true});
  }
}

inline void add_score_line(rank::ScoreTensor& tensor, const rank::ScoreLine& l,
                           std::size_t iterations = rank::kIterations) {
  tensor.set(l.model, l.dataset, l.scores, l.scores.size() == iterations);
  tensor.set_generative(l.model, l.generative);
  if (l.language || l.task) tensor.set_dataset_info(l.dataset, {l.language.value_or(""), l.task, true});
}

inline std::vector<rank::ScoreLine> read_score_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<rank::ScoreLine> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(rank::score_line_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Tensor over every run-record file under `results_dir`, plus the imported
/// score vectors at its root.
inline rank::ScoreTensor load_results(const std::filesystem::path& results_dir) {
  if (!std::filesystem::is_directory(results_dir)) {
    throw Error("results directory '" + results_dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(results_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  rank::ScoreTensor tensor;
  std::vector<RunRecord> records;
  std::vector<rank::ScoreLine> imported;
  for (const auto& f : files) {
    if (f.parent_path() == results_dir && f.filename() == kImportedFile) {
      auto lines = read_score_lines(f);
      imported.insert(imported.end(), lines.begin(), lines.end());
    } else {
      auto rs = read_records(f);
      records.insert(records.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
    }
  }
  add_records(tensor, records);
  for (const auto& l : imported) add_score_line(tensor, l);
  if (tensor.models().empty()) throw Error("no results found under '" + results_dir.string() + "'");
  return tensor;
}

}  // namespace nlueval::eval
