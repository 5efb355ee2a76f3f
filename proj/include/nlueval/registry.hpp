#pragma once

// Built-in benchmark configuration: the dataset catalogue with split sizes and
// shot counts, and the per-dataset prompt template text.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlueval/common.hpp"
#include "nlueval/corpus.hpp"
#include "nlueval/lexicon.hpp"

namespace nlueval {

/// Template strings for one dataset, without label bindings.
struct TemplateText {
  std::string language;
  Task task = Task::kSentiment;
  std::string prefix_prompt;
  std::string doc_prefix;
  std::string label_prefix;
  std::optional<std::string> question_prefix;

  friend bool operator==(const TemplateText&, const TemplateText&) = default;
};

using TemplatePack = std::map<std::string, TemplateText>;

inline const std::vector<DatasetSpec>& builtin_datasets() {
  static const std::vector<DatasetSpec> specs = [] {
    struct Row {
      const char* id;
      const char* lang;
      Task task;
      std::size_t test;
      std::size_t shots;
    };
    static constexpr Row rows[] = {
        {"dansk", "da", Task::kNer, 1024, 8},
        {"suc3", "sv", Task::kNer, 2048, 8},
        {"norne-nb", "nb", Task::kNer, 2048, 8},
        {"norne-nn", "nn", Task::kNer, 2048, 8},
        {"mim-gold-ner", "is", Task::kNer, 2048, 8},
        {"fone", "fo", Task::kNer, 2048, 8},
        {"germeval", "de", Task::kNer, 1024, 8},
        {"conll-nl", "nl", Task::kNer, 1024, 8},
        {"conll-en", "en", Task::kNer, 2048, 8},
        {"angry-tweets", "da", Task::kSentiment, 2048, 12},
        {"swerec", "sv", Task::kSentiment, 2048, 12},
        {"norec", "nb", Task::kSentiment, 2048, 12},
        {"sb10k", "de", Task::kSentiment, 1024, 12},
        {"dutch-social", "nl", Task::kSentiment, 1024, 12},
        {"sst5", "en", Task::kSentiment, 2048, 12},
        {"scala-da", "da", Task::kAcceptability, 2048, 12},
        {"scala-sv", "sv", Task::kAcceptability, 2048, 12},
        {"scala-nb", "nb", Task::kAcceptability, 2048, 12},
        {"scala-nn", "nn", Task::kAcceptability, 2048, 12},
        {"scala-is", "is", Task::kAcceptability, 2048, 12},
        {"scala-fo", "fo", Task::kAcceptability, 1024, 12},
        {"scala-de", "de", Task::kAcceptability, 2048, 12},
        {"scala-nl", "nl", Task::kAcceptability, 2048, 12},
        {"scala-en", "en", Task::kAcceptability, 2048, 12},
        {"scandiqa-da", "da", Task::kQa, 2048, 4},
        {"scandiqa-sv", "sv", Task::kQa, 2048, 4},
        {"norquad", "nb", Task::kQa, 2048, 2},
        {"nqii", "is", Task::kQa, 1024, 4},
        {"germanquad", "de", Task::kQa, 2048, 4},
        {"squad-nl", "nl", Task::kQa, 2048, 4},
        {"squad", "en", Task::kQa, 2048, 4},
    };
    std::vector<DatasetSpec> out;
    for (const Row& r : rows) {
      DatasetSpec s;
      s.id = r.id;
      s.language = r.lang;
      s.task = r.task;
      s.num_shots = r.shots;
      s.splits = {1024, 256, r.test};
      s.metric = default_metric(r.task);
      s.labels = default_labels(r.task);
      out.push_back(std::move(s));
    }
    return out;
  }();
  return specs;
}

inline const DatasetSpec* find_builtin_dataset(std::string_view id) {
  const auto& all = builtin_datasets();
  auto it = std::find_if(all.begin(), all.end(), [&](const DatasetSpec& s) { return s.id == id; });
  return it == all.end() ? nullptr : &*it;
}

inline const TemplatePack& builtin_templates() {
  static const TemplatePack pack = [] {
    TemplatePack p;
    const auto ner = [&](const char* id, const char* lang, const char* prefix, const char* doc,
                         const char* label) {
      p[id] = {lang, Task::kNer, prefix, doc, label, std::nullopt};
    };
    const auto sent = [&](const char* id, const char* lang, const char* prefix, const char* doc,
                          const char* label) {
      p[id] = {lang, Task::kSentiment, prefix, doc, label, std::nullopt};
    };
    const auto la = [&](const char* id, const char* lang, const char* prefix, const char* doc,
                        const char* label) {
      p[id] = {lang, Task::kAcceptability, prefix, doc, label, std::nullopt};
    };
    const auto qa = [&](const char* id, const char* lang, const char* prefix, const char* doc,
                        const char* question, const char* label) {
      p[id] = {lang, Task::kQa, prefix, doc, label, std::string(question)};
    };

    ner("dansk", "da",
        "Følgende er sætninger og JSON-ordbøger med de navngivne enheder, som forekommer i den "
        "givne sætning.",
        "Sætning", "Navngivne enheder");
    ner("suc3", "sv",
        "Följande är meningar och JSON-ordböcker med de namngivna enheter som förekommer i den "
        "givna meningen.",
        "Mening", "Namngivna entiteter");
    for (const char* id : {"norne-nb", "norne-nn"}) {
      ner(id, id[7] == 'b' ? "nb" : "nn",
          "Følgende er fraser og JSON-ordbøker med de navngitte enhetene som forekommer i den "
          "gitte frasen.",
          "Frase", "Navngitte enheter");
    }
    ner("mim-gold-ner", "is",
        "Eftirfarandi eru setningar ásamt JSON lyklum með nefndum einingum sem koma fyrir í "
        "setningunum.",
        "Setning", "Nefndar einingar");
    ner("fone", "fo",
        "Her eru nakrir setningar og nakrar JSON orðabøkur við nevndar eindir, sum eru í "
        "setningunum.",
        "Setningur", "Nevndar eindir");
    ner("germeval", "de",
        "Es folgen Sätze und JSON-Wörterbücher mit den benannten Entitäten, die in der "
        "angegebenen Phrase vorkommen.",
        "Satz", "Benannte Entitäten");
    ner("conll-nl", "nl",
        "Hieronder staan zinnen en JSON woordenboeken met de genoemde entiteiten die voorkomen "
        "in de gegeven zin.",
        "Zin", "Genoemde entiteiten");
    ner("conll-en", "en",
        "Below are sentences and JSON dictionaries with the named entities that occur in the "
        "given sentence.",
        "Sentence", "Named entities");

    sent("angry-tweets", "da",
         "Følgende er tweets og deres sentiment, som kan være 'positiv', 'neutral' eller "
         "'negativ'.",
         "Tweet", "Sentiment");
    sent("swerec", "sv",
         "Följande är recensioner och deras sentiment, som kan vara 'positiv', 'neutral' eller "
         "'negativ'.",
         "Recension", "Sentiment");
    sent("norec", "nb",
         "Følgende er anmeldelser og deres sentiment, som kan være 'positiv', 'nøytral' eller "
         "'negativ'.",
         "Anmeldelse", "Sentiment");
    sent("sb10k", "de",
         "Im Folgenden sind Tweets und ihre Stimmung aufgeführt, die 'positiv', 'neutral' oder "
         "'negativ' sein kann.",
         "Tweet", "Stimmungslage");
    sent("dutch-social", "nl",
         "Hieronder staan tweets en hun sentiment, dat 'positief', 'neutraal' of 'negatief' kan "
         "zijn.",
         "Tweet", "Sentiment");
    sent("sst5", "en",
         "The following are tweets are their sentiment, which can be 'positive', 'neutral' or "
         "'negative'.",
         "Tweet", "Sentiment");

    la("scala-da", "da", "Følgende er sætninger og om de er grammatisk korrekte.", "Sætning",
       "Grammatisk korrekt");
    la("scala-sv", "sv", "Följande är meningar och huruvida de är grammatiskt korrekta.", "Mening",
       "Grammatisk korrekt");
    for (const char* id : {"scala-nb", "scala-nn"}) {
      la(id, id[7] == 'b' ? "nb" : "nn", "Følgende er setninger og hvorvidt de er grammatisk korrekte.",
         "Setning", "Grammatisk korrekt");
    }
    la("scala-is", "is", "Eftirfarandi eru setningar og hvort þær eru málfræðilega réttar.",
       "Setning", "Málfræðilega rétt");
    la("scala-fo", "fo", "Hetta eru nakrir setningar og um teir eru mállæruliga rættir.",
       "Setningur", "Mállæruliga rættur");
    la("scala-de", "de", "Die folgenden Sätze und ob sie grammatikalisch korrekt sind.", "Satz",
       "Grammatikalisch richtig");
    la("scala-nl", "nl", "Hieronder staan zinnen en of ze grammaticaal correct zijn.", "Zin",
       "Grammaticaal correct");
    la("scala-en", "en", "The following are sentences and whether they are grammatically correct.",
       "Sentence", "Grammatically correct");

    qa("scandiqa-da", "da", "Følgende er tekster med tilhørende spørgsmål og svar.", "Tekst",
       "Spørgsmål", "Svar med maks. 3 ord");
    qa("scandiqa-sv", "sv", "Nedan följer texter med tillhörande frågor och svar.", "Text", "Fråga",
       "Svar på max 3 ord");
    qa("norquad", "nb", "Her følger tekster med tilhørende spørsmål og svar.", "Tekst", "Spørsmål",
       "Svar på maks 3 ord");
    qa("nqii", "is", "Eftirfarandi eru textar með tilheyrandi spurningum og svörum.", "Texti",
       "Spurning", "Svaraðu með að hámarki 3 orðum");
    qa("germanquad", "de", "Im Folgenden finden Sie Texte mit den dazugehörigen Fragen und Antworten.",
       "Text", "Fragen", "Fragen Antwort in maximal 3 Wörtern");
    qa("squad-nl", "nl", "Hieronder volgen teksten met bijbehorende vragen en antwoorden.", "Tekst",
       "Vraag", "Antwoord in max 3 woorden");
    qa("squad", "en", "The following are texts with accompanying questions and answers.", "Text",
       "Question", "Answer in max 3 words");
    return p;
  }();
  return pack;
}

inline nlohmann::json to_json(const TemplatePack& pack) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, t] : pack) {
    nlohmann::json e = {{"language", t.language},
                        {"task", to_string(t.task)},
                        {"prefix_prompt", t.prefix_prompt},
                        {"doc_prefix", t.doc_prefix},
                        {"label_prefix", t.label_prefix}};
    if (t.question_prefix) e["question_prefix"] = *t.question_prefix;
    j[id] = std::move(e);
  }
  return j;
}

inline TemplatePack template_pack_from_json(const nlohmann::json& j) {
  TemplatePack pack;
  try {
    for (const auto& [id, e] : j.items()) {
      TemplateText t;
      t.language = e.at("language").get<std::string>();
      t.task = parse_task(e.at("task").get<std::string>());
      t.prefix_prompt = e.at("prefix_prompt").get<std::string>();
      t.doc_prefix = e.at("doc_prefix").get<std::string>();
      t.label_prefix = e.at("label_prefix").get<std::string>();
      if (e.contains("question_prefix")) t.question_prefix = e.at("question_prefix").get<std::string>();
      pack.emplace(id, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad template pack: ") + e.what());
  }
  return pack;
}

}  // namespace nlueval
