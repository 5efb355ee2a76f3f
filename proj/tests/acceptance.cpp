// Acceptance gate: one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "e2e.hpp"
#include "properties.hpp"
#include "walks.hpp"

using namespace nlueval;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::printf("%s %d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string describe(const char* name, const props::Check& c) {
  std::ostringstream os;
  os << name << " " << c.cases - c.failures << "/" << c.cases;
  if (!c.ok()) os << " [" << c.first_failure << "]";
  return os.str();
}

nlohmann::json load(const std::string& rel) {
  std::ifstream in(std::string(NLUEVAL_TEST_DIR) + "/" + rel);
  return nlohmann::json::parse(in);
}

void criterion1() {
  const auto t0 = Clock::now();
  props::Check scale, adjacent, anchored, mag, mag_anchored, minimal, anchor;
  Rng rng(1);
  constexpr int kTensors = 200;
  for (int i = 0; i < kTensors; ++i) {
    const auto t = props::random_tensor(derive_seed(2024, static_cast<std::uint64_t>(i)));
    props::scale_shift(t, rng, scale);
    props::robustness_adjacent(t, adjacent);
    props::robustness_anchor(t, anchored);
    props::magnitude(t, rng, mag, &mag_anchored);
    props::minimal_change(t, rng, minimal);
    props::anchor_and_replay(t, anchor);
  }
  const double secs = seconds_since(t0);
  const bool ok = scale.ok() && adjacent.ok() && anchored.ok() && mag.ok() && minimal.ok() && anchor.ok() && secs < 60;
  std::ostringstream os;
  os << kTensors << " tensors in " << secs << "s; " << describe("scale/shift", scale) << "; "
     << describe("robustness(adjacent)", adjacent) << "; " << describe("robustness(anchor)", anchored) << "; "
     << describe("magnitude", mag) << "; " << describe("magnitude(anchor adjacent)", mag_anchored) << "; "
     << describe("minimal-change", minimal) << "; "
     << describe("best=1/replay", anchor);
  report(1, ok, os.str());
}

void criterion2() {
  const auto ref = load("data/welch_reference.json");
  double worst = 0.0;
  for (const auto& c : ref) {
    const auto a = c["a"].get<std::vector<double>>();
    const auto b = c["b"].get<std::vector<double>>();
    worst = std::max(worst, std::fabs(stats::welch_t_one_tailed(a, b).p_value - c["p"].get<double>()));
  }
  const std::vector<double> v{0.3, 0.5, 0.4, 0.6};
  const std::vector<double> flat{0.5, 0.5}, low{0.2, 0.2};
  const bool conventions = stats::welch_t_one_tailed(v, v).t == 0.0 && stats::welch_t_one_tailed(v, v).p_value == 0.5 &&
                           stats::welch_t_one_tailed(flat, flat).p_value == 0.5 &&
                           stats::welch_t_one_tailed(flat, low).p_value == 0.0;
  std::ostringstream os;
  os << ref.size() << " reference pairs, max |dp| = " << worst << "; conventions " << (conventions ? "hold" : "broken");
  report(2, ref.size() == 50 && worst <= 1e-6 && conventions, os.str());
}

void criterion3() {
  const auto f = load("data/rank_fixture.json");
  rank::ScoreTensor t;
  for (const auto& [m, s] : f["scores"].items()) t.set(m, "toy", s.get<std::vector<double>>());
  const auto r = rank::mean_rank_scores(t, f["alpha"].get<double>());
  const auto& trace = r.traces.at(0);
  double worst = std::fabs(trace.sigma - f["sigma"].get<double>());
  bool same_path = trace.steps.size() == f["steps"].size();
  for (std::size_t k = 0; same_path && k < trace.steps.size(); ++k) {
    const auto& w = f["steps"][k];
    const auto& s = trace.steps[k];
    same_path = same_path && s.model == w["model"].get<std::string>();
    worst = std::max(worst, std::fabs(s.rho - w["rho"].get<double>()));
    if (k == 0) continue;
    same_path = same_path && s.anchor == w["anchor"].get<std::string>() &&
                s.significant == w["significant"].get<bool>();
    worst = std::max({worst, std::fabs(*s.p_value - w["p_value"].get<double>()),
                      std::fabs(s.increment - w["increment"].get<double>())});
  }
  bool replay_ok = true;
  const auto back = rank::trace_from_json(nlohmann::json::parse(rank::to_json(trace).dump()));
  for (const auto& [m, rho] : rank::replay(back)) replay_ok = replay_ok && rho == *r.matrix.at(m, "toy");
  std::ostringstream os;
  os << "max deviation " << worst << "; order/anchors " << (same_path ? "match" : "differ") << "; replay "
     << (replay_ok ? "bit-identical" : "differs");
  report(3, same_path && worst <= 1e-9 && replay_ok, os.str());
}

void criterion4() {
  const auto t0 = Clock::now();
  constrain::OutputSchema schema;
  schema.keys = {"Person", "Location", "Organization"};
  const constrain::Automaton a(schema);
  const auto vocab = walks::vocabulary(schema.keys);
  std::size_t ok = 0, steps = 0;
  std::string first_failure;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto r = walks::walk(a, vocab, derive_seed(4, i));
    steps += r.steps;
    if (r.ok) {
      ++ok;
    } else if (first_failure.empty()) {
      first_failure = r.failure;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << ok << "/1000 walks over " << vocab.size() << " tokens accepted and parsed (" << steps << " steps, " << secs
     << "s)";
  if (!first_failure.empty()) os << " [" << first_failure << "]";
  report(4, ok == 1000 && vocab.size() == 200 && secs < 30, os.str());
}

void criterion5() {
  using V = std::vector<std::string>;
  const bool micro = metrics::ner_micro_f1({{"B-PER", "O", "B-LOC", "I-LOC"}, {"B-ORG", "O"}},
                                           {{"B-PER", "O", "B-LOC", "I-LOC"}, {"O", "B-PER"}})
                         .value == 2.0 / 3.0;
  const bool macro = metrics::macro_f1(V{"pos", "pos", "neg", "neu"}, V{"pos", "neg", "neg", "neu"},
                                       V{"pos", "neg", "neu"})
                         .value == (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0;
  const bool mcc = metrics::mcc({1, 1, 0, 0}, {1, 0, 1, 0}).value == 0.0;
  const bool qa = metrics::qa_em_f1("tower of Eiffel", {"Eiffel Tower"}).f1.value ==
                  2.0 * (2.0 / 3.0 * 2.0 / 2.0) / (2.0 / 3.0 + 2.0 / 2.0);

  Rng rng(5);
  std::size_t out_of_range = 0;
  const V classes{"a", "b", "c"};
  const V words{"the", "cat", "sat", "on", "a", "mat", "!"};
  const V tags{"O", "B-PER", "I-PER", "B-LOC", "I-LOC"};
  for (int i = 0; i < 10000; ++i) {
    const auto n = 1 + rng.below(16);
    V g, p;
    std::vector<int> gb, pb;
    std::vector<V> ng(1), np(1);
    for (std::uint64_t k = 0; k < n; ++k) {
      g.push_back(classes[rng.below(3)]);
      p.push_back(classes[rng.below(3)]);
      gb.push_back(static_cast<int>(rng.below(2)));
      pb.push_back(static_cast<int>(rng.below(2)));
      ng[0].push_back(tags[rng.below(tags.size())]);
      np[0].push_back(tags[rng.below(tags.size())]);
    }
    std::string pred, ans;
    for (std::uint64_t k = 0, m = rng.below(5); k < m; ++k) pred += words[rng.below(words.size())] + " ";
    for (std::uint64_t k = 0, m = 1 + rng.below(4); k < m; ++k) ans += words[rng.below(words.size())] + " ";
    const double f = metrics::macro_f1(g, p, classes).value;
    const double m = metrics::mcc(gb, pb).value;
    const double nf = metrics::ner_micro_f1(ng, np).value;
    const auto q = metrics::qa_em_f1(pred, {ans});
    const auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(f) || !(m >= -1.0 && m <= 1.0) || !in01(nf) || !in01(q.f1.value) || !in01(q.em.value)) ++out_of_range;
  }
  std::ostringstream os;
  os << "micro 2/3 " << (micro ? "exact" : "wrong") << ", macro 7/9 " << (macro ? "exact" : "wrong") << ", MCC 0 "
     << (mcc ? "exact" : "wrong") << ", QA 0.8 " << (qa ? "exact" : "wrong") << "; " << out_of_range
     << "/10000 fuzzed instances out of range";
  report(5, micro && macro && mcc && qa && out_of_range == 0, os.str());
}

/// Runs the fixture benchmark with `model` into `root/results` and returns the records file.
std::string run_fixture(const fs::path& root, const nlohmann::json& model, std::uint64_t seed) {
  const auto ds = fixtures::sentiment_dataset(64, 16, 64);
  save_dataset(root / "data" / "toy-sent", ds);
  harness::write_json(root / "templates.json", to_json(TemplatePack{{"toy-sent", builtin_templates().at("sst5")}}));
  harness::write_json(root / "config.json", {{"models", {model}},
                                             {"datasets", {"data/toy-sent"}},
                                             {"templates", "templates.json"},
                                             {"master_seed", seed}});
  const auto cfg = harness::load_config(root / "config.json");
  if (!harness::run_benchmarks(cfg, harness::make_mock_backend).complete) throw Error("fixture run incomplete");
  return fixtures::read_file(eval::record_path(cfg.results_dir, model["id"].get<std::string>(), "toy-sent"));
}

void criterion6and7() {
  const auto t0 = Clock::now();
  fixtures::TempDir a("accept-a"), b("accept-b"), c("accept-c");
  const nlohmann::json echo = {{"id", "echo"}};
  const nlohmann::json noisy = {{"id", "noisy"}, {"mock", {{"behavior", "noisy-gold"}, {"epsilon", 0.2}, {"seed", 7}}}};

  run_fixture(a.path(), echo, 42);
  const auto tensor = harness::load_tensor(a.path() / "results");
  bool all_one = true;
  for (double s : tensor.cell("echo", "toy-sent")->scores) all_one = all_one && s == 1.0;
  harness::aggregate(a.path() / "results", a.path() / "out", rank::kDefaultAlpha);
  const auto board = fixtures::read_file(a.path() / "out" / "leaderboard" / "en.txt");
  const bool agg_one = board.find("echo | decoder | 1.00\n") != std::string::npos;

  const auto first = run_fixture(b.path(), noisy, 42);
  const auto second = run_fixture(c.path(), noisy, 42);
  const auto band = e2e::noisy_band(64, 0.2, 20000, 99);
  std::size_t inside = 0, total = 0;
  const auto noisy_tensor = harness::load_tensor(b.path() / "results");
  for (double s : noisy_tensor.cell("noisy", "toy-sent")->scores) {
    ++total;
    inside += std::fabs(s - band.mean) <= 3.0 * band.sd;
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "gold-echo scores " << (all_one ? "all 1.0" : "not all 1.0") << ", aggregate "
     << (agg_one ? "1.00" : "not 1.00") << "; noisy ε=0.2: " << inside << "/" << total << " iterations within "
     << band.mean << " ± " << 3.0 * band.sd << "; same seed results " << (first == second ? "byte-identical" : "differ")
     << " (" << secs << "s)";
  report(6, all_one && agg_one && inside == total && total == 10 && first == second && secs < 10, os.str());

  bool ten = true;
  std::size_t cells = 0;
  for (const auto* t : {&tensor, &noisy_tensor}) {
    for (const auto& m : t->models()) {
      for (const auto& d : t->datasets()) {
        const auto* cell = t->cell(m, d);
        if (cell == nullptr || !cell->complete) continue;
        ++cells;
        ten = ten && cell->scores.size() == rank::kIterations;
      }
    }
  }
  double frac = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto idx = eval::bootstrap_indices(256, derive_seed(77, s));
    frac += static_cast<double>(std::set<std::size_t>(idx.begin(), idx.end()).size()) / 256.0;
  }
  frac /= 1000.0;
  std::ostringstream os7;
  os7 << cells << " complete cells with 10 scores: " << (ten ? "yes" : "no") << "; bootstrap distinct fraction "
      << frac << " vs " << 1.0 - std::exp(-1.0);
  report(7, ten && cells == 2 && std::fabs(frac - (1.0 - std::exp(-1.0))) <= 0.02, os7.str());
}

void criterion8() {
  const auto tmpl = [](const char* id) { return make_template(builtin_templates().at(id), *find_builtin_dataset(id)); };
  const auto golden = [](const char* name) {
    return fixtures::read_file(std::string(NLUEVAL_TEST_DIR) + "/golden/" + name);
  };
  std::vector<std::string> bad;
  const auto expect = [&](const std::string& got, const char* file) {
    if (got != golden(file)) bad.push_back(file);
  };
  expect(render_prompt(tmpl("sst5"),
                       {ClassificationSample{"great movie", "positive"},
                        ClassificationSample{"the plot dragged on", "negative"}},
                       ClassificationSample{"awful plot", "negative"})
             .text,
         "en_sentiment.txt");
  expect(render_prompt(tmpl("scala-en"),
                       {ClassificationSample{"The cat sat on the mat.", "correct"},
                        ClassificationSample{"Cat the mat on sat.", "incorrect"}},
                       ClassificationSample{"She have two dogs.", "incorrect"})
             .text,
         "en_acceptability.txt");
  expect(render_prompt(tmpl("conll-en"),
                       {NerSample{{"Anna", "lives", "in", "New", "York"}, {"B-PER", "O", "O", "B-LOC", "I-LOC"}},
                        NerSample{{"The", "weather", "was", "nice"}, {"O", "O", "O", "O"}}},
                       NerSample{{"Microsoft", "hired", "Bob"}, {"B-ORG", "O", "B-PER"}})
             .text,
         "en_ner.txt");
  const auto qa = render_prompt(tmpl("squad"),
                                {QaSample{"The Eiffel Tower is in Paris.", "Where is the Eiffel Tower?", {{"Paris", 23}}},
                                 QaSample{"Water boils at 100 degrees Celsius at sea level.",
                                          "At what temperature does water boil?", {{"100 degrees Celsius", 15}}}},
                                QaSample{"Mount Everest is the highest mountain on Earth.",
                                         "What is the highest mountain?", {{"Mount Everest", 0}}})
                      .text;
  expect(qa, "en_qa.txt");
  const bool qa_prefix = qa.find("\nAnswer in max 3 words:") != std::string::npos;

  std::size_t shot_mismatch = 0;
  for (const auto& s : builtin_datasets()) {
    std::size_t want = 0;
    switch (s.task) {
      case Task::kNer: want = 8; break;
      case Task::kSentiment: want = 12; break;
      case Task::kAcceptability: want = 12; break;
      case Task::kQa: want = s.id == "norquad" ? 2 : 4; break;
    }
    shot_mismatch += s.num_shots != want;
  }
  std::ostringstream os;
  os << 4 - bad.size() << "/4 golden prompts byte-identical";
  for (const auto& b : bad) os << " [mismatch " << b << "]";
  os << "; QA label prefix " << (qa_prefix ? "present" : "missing") << "; shot counts: " << shot_mismatch << " of "
     << builtin_datasets().size() << " datasets differ";
  report(8, bad.empty() && qa_prefix && shot_mismatch == 0 && builtin_datasets().size() == 31, os.str());
}

void criterion9() {
  const auto report9 = harness::correlate_generative(e2e::dominance_tensor());
  std::optional<double> qa, ner;
  for (const auto& t : report9.tasks) {
    if (t.task == Task::kQa) qa = t.r;
    if (t.task == Task::kNer) ner = t.r;
  }
  std::ostringstream os;
  os << "r(QA) = " << (qa ? std::to_string(*qa) : "n/a") << ", r(NER) = " << (ner ? std::to_string(*ner) : "n/a");
  report(9, qa && ner && *qa == 1.0 && *ner == -1.0, os.str());
}

}  // namespace

int main() {
  const std::vector<void (*)()> steps{criterion1, criterion2, criterion3, criterion4, criterion5, criterion6and7,
                                      criterion8, criterion9};
  for (auto* step : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      std::printf("FAIL: criterion raised: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
