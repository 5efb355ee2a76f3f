#pragma once

// Localized label strings.  The built-in table holds the label conversions
// used by the benchmark's prompt templates; datasets may add entries (for
// example a MISC tag) through their manifest.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nlueval/common.hpp"

namespace nlueval {

namespace labels {
inline constexpr std::string_view kPer = "PER";
inline constexpr std::string_view kLoc = "LOC";
inline constexpr std::string_view kOrg = "ORG";
inline constexpr std::string_view kMisc = "MISC";
inline constexpr std::string_view kNegative = "negative";
inline constexpr std::string_view kNeutral = "neutral";
inline constexpr std::string_view kPositive = "positive";
inline constexpr std::string_view kCorrect = "correct";
inline constexpr std::string_view kIncorrect = "incorrect";
}  // namespace labels

/// Canonical label set of a task.  NER defaults to the three tabled tags.
inline std::vector<std::string> default_labels(Task task) {
  switch (task) {
    case Task::kNer:
      return {std::string(labels::kPer), std::string(labels::kLoc), std::string(labels::kOrg)};
    case Task::kSentiment:
      return {std::string(labels::kNegative), std::string(labels::kNeutral),
              std::string(labels::kPositive)};
    case Task::kAcceptability:
      return {std::string(labels::kCorrect), std::string(labels::kIncorrect)};
    case Task::kQa:
      return {};
  }
  return {};
}

/// Languages sharing a leaderboard.  Both Norwegian written standards report
/// on the Norwegian board.
inline std::string board_language(std::string_view language) {
  if (language == "nb" || language == "nn" || language == "no") return "no";
  return std::string(language);
}

class LabelLexicon {
 public:
  static const LabelLexicon& builtin() {
    static const LabelLexicon lex = make_builtin();
    return lex;
  }

  void set(std::string_view language, std::string_view canonical, std::string localized) {
    table_[key(language, canonical)] = std::move(localized);
  }

  std::optional<std::string> find(std::string_view canonical, std::string_view language) const {
    if (auto it = table_.find(key(language, canonical)); it != table_.end()) return it->second;
    return std::nullopt;
  }

  std::string localize(std::string_view canonical, std::string_view language) const {
    if (auto s = find(canonical, language)) return *s;
    throw Error("no localized label for '" + std::string(canonical) + "' in language '" +
                std::string(language) + "'");
  }

  /// Every (language, canonical) pair -> localized string, in key order.
  const std::map<std::pair<std::string, std::string>, std::string>& entries() const noexcept {
    return table_;
  }

 private:
  static std::pair<std::string, std::string> key(std::string_view language,
                                                 std::string_view canonical) {
    // nb/nn/no share one row of the table.
    return {board_language(language), std::string(canonical)};
  }

  static LabelLexicon make_builtin() {
    struct Row {
      const char* lang;
      const char* per;
      const char* loc;
      const char* org;
      const char* negative;
      const char* neutral;
      const char* positive;
      const char* correct;
      const char* incorrect;
    };
    static constexpr Row rows[] = {
        {"da", "Person", "Sted", "Organisation", "Negativ", "Neutral", "Positiv", "Ja", "Nej"},
        {"sv", "Person", "Plats", "Organisation", "Negativ", "Neutral", "Positiv", "Ja", "Nej"},
        {"no", "Person", "Sted", "Organisasjon", "Negativ", "Nøytral", "Positiv", "Ja", "Nei"},
        {"is", "Einstaklingur", "Staðsetning", "Stofnun", nullptr, nullptr, nullptr, "Já", "Nei"},
        {"fo", "Persónur", "Staður", "Felagsskapur", nullptr, nullptr, nullptr, "Ja", "Nei"},
        {"de", "Person", "Ort", "Organisation", "Negativ", "Neutral", "Positiv", "Ja", "Nein"},
        {"nl", "Persoon", "Locatie", "Organisatie", "Negatief", "Neutraal", "Positief", "Ja",
         "Nee"},
        {"en", "Person", "Location", "Organization", "Negative", "Neutral", "Positive", "Yes",
         "No"},
    };
    LabelLexicon lex;
    for (const Row& r : rows) {
      const std::pair<std::string_view, const char*> cells[] = {
          {labels::kPer, r.per},           {labels::kLoc, r.loc},
          {labels::kOrg, r.org},           {labels::kNegative, r.negative},
          {labels::kNeutral, r.neutral},   {labels::kPositive, r.positive},
          {labels::kCorrect, r.correct},   {labels::kIncorrect, r.incorrect},
      };
      for (const auto& [canonical, localized] : cells) {
        if (localized != nullptr) lex.set(r.lang, canonical, localized);
      }
    }
    return lex;
  }

  std::map<std::pair<std::string, std::string>, std::string> table_;
};

/// Localized surface string for a canonical label from the built-in table.
inline std::string localize_label(std::string_view canonical, std::string_view language) {
  return LabelLexicon::builtin().localize(canonical, language);
}

}  // namespace nlueval
