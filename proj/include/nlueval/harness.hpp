#pragma once

// Orchestration: configuration, benchmark runs, leaderboards, the
// generative-flag correlation and the mean-score matrix export.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlueval/common.hpp"
#include "nlueval/corpus.hpp"
#include "nlueval/evalengine.hpp"
#include "nlueval/lexicon.hpp"
#include "nlueval/promptkit.hpp"
#include "nlueval/rankscore.hpp"
#include "nlueval/registry.hpp"
#include "nlueval/stats.hpp"

namespace nlueval::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
  std::string id;
  std::string backend = "mock";  // mock | http
  std::string endpoint;
  std::string api_key_env;
  bool generative = true;
  bool logit_access = false;
  eval::MockOptions mock;
};

struct Config {
  std::vector<ModelConfig> models;
  std::vector<fs::path> datasets;  // bundle directories
  std::optional<fs::path> templates;
  std::uint64_t master_seed = 4242;
  double alpha = rank::kDefaultAlpha;
  std::size_t workers = 1;
  fs::path results_dir = "results";
  fs::path output_dir = "out";
};

inline Config config_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    Config c;
    for (const auto& m : j.at("models")) {
      ModelConfig mc;
      mc.id = m.at("id").get<std::string>();
      mc.backend = m.value("backend", "mock");
      if (mc.backend != "mock" && mc.backend != "http") {
        throw Error("model '" + mc.id + "': unknown backend '" + mc.backend + "'");
      }
      mc.endpoint = m.value("endpoint", "");
      mc.api_key_env = m.value("api_key_env", "");
      mc.generative = m.value("generative", true);
      mc.logit_access = m.value("logit_access", false);
      if (m.contains("mock")) {
        const auto& o = m.at("mock");
        mc.mock.behavior = eval::parse_mock_behavior(o.value("behavior", "gold-echo"));
        mc.mock.fixed_output = o.value("fixed_output", "");
        mc.mock.epsilon = o.value("epsilon", 0.0);
        mc.mock.seed = o.value("seed", std::uint64_t{0});
        mc.mock.script = o.value("script", std::vector<std::string>{});
      }
      c.models.push_back(std::move(mc));
    }
    for (const auto& d : j.at("datasets")) c.datasets.push_back(resolve(d.get<std::string>()));
    if (j.contains("templates")) c.templates = resolve(j.at("templates").get<std::string>());
    c.master_seed = j.value("master_seed", c.master_seed);
    c.alpha = j.value("alpha", c.alpha);
    c.workers = j.value("workers", c.workers);
    c.results_dir = resolve(j.value("results_dir", std::string("results")));
    c.output_dir = resolve(j.value("output_dir", std::string("out")));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad config: ") + e.what());
  }
}

inline Config load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("config " + path.string() + " is not valid JSON");
  return config_from_json(j, path.parent_path());
}

using BackendFactory = std::function<std::unique_ptr<eval::Backend>(const ModelConfig&)>;

inline std::unique_ptr<eval::Backend> make_mock_backend(const ModelConfig& m) {
  if (m.backend != "mock") throw Error("model '" + m.id + "': backend '" + m.backend + "' is not available here");
  eval::BackendProfile p{m.id, m.generative, m.logit_access, std::nullopt};
  return std::make_unique<eval::MockBackend>(std::move(p), m.mock);
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkSummary {
  std::size_t cells = 0;
  bool complete = true;
  std::vector<std::string> log;
};

inline BenchmarkSummary run_benchmarks(const Config& cfg, const BackendFactory& factory,
                                       const std::vector<std::string>& only_models = {},
                                       const std::vector<std::string>& only_datasets = {}) {
  std::vector<Dataset> datasets;
  for (const auto& dir : cfg.datasets) datasets.push_back(load_bundle(dir));
  TemplatePack pack = builtin_templates();
  if (cfg.templates) {
    std::ifstream in(*cfg.templates);
    if (!in) throw Error("cannot open template pack " + cfg.templates->string());
    for (auto& [id, t] : template_pack_from_json(nlohmann::json::parse(in))) pack[id] = t;
  }

  const auto require_known = [](const std::vector<std::string>& wanted, const std::set<std::string>& known,
                                const char* what) {
    for (const auto& w : wanted) {
      if (known.count(w) == 0) throw Error(std::string("unknown ") + what + " id '" + w + "'");
    }
  };
  std::set<std::string> model_ids, dataset_ids;
  for (const auto& m : cfg.models) model_ids.insert(m.id);
  for (const auto& d : datasets) dataset_ids.insert(d.spec.id);
  require_known(only_models, model_ids, "model");
  require_known(only_datasets, dataset_ids, "dataset");
  const auto selected = [](const std::vector<std::string>& filter, const std::string& id) {
    return filter.empty() || std::find(filter.begin(), filter.end(), id) != filter.end();
  };

  BenchmarkSummary summary;
  eval::RunOptions opts;
  opts.workers = cfg.workers;
  for (const auto& m : cfg.models) {
    if (!selected(only_models, m.id)) continue;
    auto backend = factory(m);
    for (const auto& ds : datasets) {
      if (!selected(only_datasets, ds.spec.id)) continue;
      auto it = pack.find(ds.spec.id);
      if (it == pack.end()) throw Error("no prompt template for dataset '" + ds.spec.id + "'");
      const PromptTemplate tmpl = make_template(it->second, ds.spec);
      auto run = eval::run_benchmark(*backend, ds, tmpl, cfg.master_seed, opts);
      eval::write_records(cfg.results_dir, run.records);
      ++summary.cells;
      summary.complete = summary.complete && run.complete;
      summary.log.insert(summary.log.end(), run.log.begin(), run.log.end());
      if (!run.complete) {
        summary.log.push_back(m.id + " on " + ds.spec.id + ": incomplete, partial results kept");
        break;
      }
    }
  }
  return summary;
}

/// Results tensor with dataset metadata filled in from the built-in catalogue
/// where the records do not carry it.
inline rank::ScoreTensor load_tensor(const fs::path& results_dir) {
  rank::ScoreTensor t = eval::load_results(results_dir);
  for (const auto& d : t.datasets()) {
    auto info = t.dataset_info(d);
    if (!info.language.empty() && info.task) continue;
    if (const DatasetSpec* spec = find_builtin_dataset(d)) {
      if (info.language.empty()) info.language = spec->language;
      if (!info.task) info.task = spec->task;
      t.set_dataset_info(d, info);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest representation that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Leaderboards

struct CellSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over iterations
};

struct LeaderboardRow {
  std::string model;
  bool generative = false;
  double aggregate = 1.0;
  std::map<std::string, CellSummary> datasets;
};

struct Leaderboard {
  std::string language;
  std::vector<std::string> datasets;
  std::vector<LeaderboardRow> rows;  // ascending aggregate
  std::vector<std::string> warnings;
};

inline std::map<std::string, std::vector<std::string>> datasets_by_language(const rank::ScoreTensor& t) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& d : t.datasets()) {
    const auto& lang = t.dataset_info(d).language;
    if (lang.empty()) throw Error("dataset '" + d + "' has no language");
    out[board_language(lang)].push_back(d);
  }
  return out;
}

inline Leaderboard build_leaderboard(const rank::ScoreTensor& tensor, const std::string& language,
                                     const std::vector<std::string>& datasets, double alpha) {
  Leaderboard board;
  board.language = language;
  board.datasets = datasets;
  const rank::ScoreTensor sub = tensor.restricted(datasets);
  const auto result = rank::mean_rank_scores(sub, alpha);
  board.warnings = result.warnings;
  const auto& mx = result.matrix;
  for (std::size_t m = 0; m < mx.models.size(); ++m) {
    if (std::isnan(mx.aggregate[m])) continue;
    LeaderboardRow row;
    row.model = mx.models[m];
    row.generative = sub.generative(row.model);
    row.aggregate = mx.aggregate[m];
    for (const auto& d : datasets) {
      const auto* c = sub.cell(row.model, d);
      if (c == nullptr || !c->complete) continue;
      row.datasets[d] = {stats::mean(c->scores), std::sqrt(stats::sample_variance(c->scores))};
    }
    board.rows.push_back(std::move(row));
  }
  std::stable_sort(board.rows.begin(), board.rows.end(), [](const auto& a, const auto& b) {
    if (a.aggregate != b.aggregate) return a.aggregate < b.aggregate;
    return a.model < b.model;
  });
  return board;
}

inline std::vector<Leaderboard> build_leaderboards(const rank::ScoreTensor& tensor, double alpha) {
  std::vector<Leaderboard> out;
  for (const auto& [lang, ds] : datasets_by_language(tensor)) out.push_back(build_leaderboard(tensor, lang, ds, alpha));
  return out;
}

inline std::string render_text(const Leaderboard& board) {
  std::string out = "Model ID | Decoder | Score (\xE2\x86\x93)\n";
  for (const auto& r : board.rows) {
    out += r.model + " | " + (r.generative ? "decoder" : "encoder") + " | " + format_fixed(r.aggregate, 2) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const Leaderboard& board) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : board.rows) {
    nlohmann::json ds = nlohmann::json::object();
    for (const auto& [d, s] : r.datasets) ds[d] = {{"mean", s.mean}, {"std", s.stddev}};
    rows.push_back({{"model", r.model}, {"generative", r.generative}, {"score", r.aggregate}, {"datasets", ds}});
  }
  return {{"language", board.language}, {"datasets", board.datasets}, {"rows", rows}, {"warnings", board.warnings}};
}

// ---------------------------------------------------------------------------
// Generative-flag correlation

struct TaskCorrelation {
  Task task = Task::kNer;
  std::optional<double> r;  // nullopt = insufficient data
  std::size_t models = 0;
};

struct CorrelationReport {
  std::vector<TaskCorrelation> tasks;
};

/// Per task, Pearson correlation between the 0/1 generative flag and the
/// negated mean rank score over that task's datasets.  Positive r means
/// generative models do better.
inline CorrelationReport correlate_generative(const rank::ScoreTensor& tensor,
                                              const std::map<std::string, bool>& flags,
                                              double alpha = rank::kDefaultAlpha) {
  CorrelationReport report;
  for (Task task : kAllTasks) {
    TaskCorrelation tc;
    tc.task = task;
    std::vector<std::string> ds;
    for (const auto& d : tensor.datasets()) {
      if (tensor.dataset_info(d).task == task) ds.push_back(d);
    }
    if (!ds.empty()) {
      const auto res = rank::mean_rank_scores(tensor.restricted(ds), alpha);
      std::vector<double> x, y;
      for (std::size_t m = 0; m < res.matrix.models.size(); ++m) {
        auto f = flags.find(res.matrix.models[m]);
        if (f == flags.end() || std::isnan(res.matrix.aggregate[m])) continue;
        x.push_back(f->second ? 1.0 : 0.0);
        y.push_back(-res.matrix.aggregate[m]);
      }
      tc.models = x.size();
      if (x.size() >= 3) {
        try {
          tc.r = stats::pearson(x, y);
        } catch (const Error&) {
          tc.r.reset();  // zero variance in the flag or in performance
        }
      }
    }
    report.tasks.push_back(tc);
  }
  return report;
}

inline CorrelationReport correlate_generative(const rank::ScoreTensor& tensor, double alpha = rank::kDefaultAlpha) {
  std::map<std::string, bool> flags;
  for (const auto& m : tensor.models()) flags[m] = tensor.generative(m);
  return correlate_generative(tensor, flags, alpha);
}

inline nlohmann::json to_json(const CorrelationReport& report) {
  nlohmann::json tasks = nlohmann::json::object();
  for (const auto& t : report.tasks) {
    nlohmann::json j = {{"models", t.models}};
    if (t.r) {
      j["r"] = *t.r;
    } else {
      j["r"] = "insufficient data";
    }
    tasks[std::string(to_string(t.task))] = j;
  }
  return {{"performance", "negated mean rank score"}, {"statistic", "pearson"}, {"tasks", tasks}};
}

// ---------------------------------------------------------------------------
// Matrix export

/// models x datasets mean raw scores; empty where a cell is missing or
/// incomplete.  Rows and columns in lexicographic id order.
inline std::string export_matrix_csv(const rank::ScoreTensor& tensor) {
  const auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::string out = "model";
  const auto datasets = tensor.datasets();
  for (const auto& d : datasets) out += "," + quote(d);
  out += "\n";
  for (const auto& m : tensor.models()) {
    out += quote(m);
    for (const auto& d : datasets) {
      out += ",";
      const auto* c = tensor.cell(m, d);
      if (c != nullptr && c->complete && !c->scores.empty()) out += format_double(stats::mean(c->scores));
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

inline nlohmann::json to_json(const rank::RankScoreResult& r) {
  nlohmann::json scores = nlohmann::json::object();
  for (std::size_t m = 0; m < r.matrix.models.size(); ++m) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t d = 0; d < r.matrix.datasets.size(); ++d) {
      if (r.matrix.scores[m][d]) row[r.matrix.datasets[d]] = *r.matrix.scores[m][d];
    }
    nlohmann::json entry = {{"datasets", row}};
    if (std::isnan(r.matrix.aggregate[m])) {
      entry["aggregate"] = nullptr;
    } else {
      entry["aggregate"] = r.matrix.aggregate[m];
    }
    scores[r.matrix.models[m]] = entry;
  }
  return {{"models", scores}, {"warnings", r.warnings}};
}

inline void write_leaderboards(const std::vector<Leaderboard>& boards, const fs::path& out_dir) {
  for (const auto& b : boards) {
    write_json(out_dir / "leaderboard" / (b.language + ".json"), to_json(b));
    write_file(out_dir / "leaderboard" / (b.language + ".txt"), render_text(b));
  }
}

/// Rank scores, traces and leaderboards for everything under `results_dir`.
inline std::vector<std::string> aggregate(const fs::path& results_dir, const fs::path& out_dir, double alpha) {
  const auto tensor = load_tensor(results_dir);
  const auto result = rank::mean_rank_scores(tensor, alpha);
  write_json(out_dir / "rank_scores.json", to_json(result));
  for (const auto& t : result.traces) write_json(out_dir / "traces" / (t.dataset + ".json"), rank::to_json(t));
  write_leaderboards(build_leaderboards(tensor, alpha), out_dir);
  return result.warnings;
}

inline void leaderboard(const fs::path& results_dir, const fs::path& out_dir, double alpha,
                        const std::vector<std::string>& languages = {}) {
  const auto tensor = load_tensor(results_dir);
  auto boards = build_leaderboards(tensor, alpha);
  if (!languages.empty()) {
    std::vector<Leaderboard> keep;
    for (const auto& lang : languages) {
      auto it = std::find_if(boards.begin(), boards.end(),
                             [&](const Leaderboard& b) { return b.language == board_language(lang); });
      if (it == boards.end()) throw Error("no results for the '" + lang + "' leaderboard");
      keep.push_back(*it);
    }
    boards = std::move(keep);
  }
  write_leaderboards(boards, out_dir);
}

inline CorrelationReport analyze(const fs::path& results_dir, const fs::path& out_dir, double alpha) {
  const auto report = correlate_generative(load_tensor(results_dir), alpha);
  write_json(out_dir / "analysis.json", to_json(report));
  return report;
}

inline void export_matrix(const fs::path& results_dir, const fs::path& out_file) {
  write_file(out_file, export_matrix_csv(load_tensor(results_dir)));
}

/// Merge external score vectors into results/imported.jsonl, replacing
/// earlier vectors for the same (model, dataset).
inline std::size_t import_scores(const fs::path& input, const fs::path& results_dir) {
  const auto incoming = eval::read_score_lines(input);
  const fs::path target = results_dir / eval::kImportedFile;
  std::map<std::pair<std::string, std::string>, rank::ScoreLine> merged;
  if (fs::exists(target)) {
    for (auto& l : eval::read_score_lines(target)) merged[{l.model, l.dataset}] = std::move(l);
  }
  for (const auto& l : incoming) {
    if (l.scores.size() < 2) throw Error("score vector for (" + l.model + ", " + l.dataset + ") has fewer than two values");
    merged[{l.model, l.dataset}] = l;
  }
  std::string out;
  for (const auto& [_, l] : merged) out += rank::to_json(l).dump() + "\n";
  write_file(target, out);
  return incoming.size();
}

}  // namespace nlueval::harness
