#pragma once

// Constrained decoding for NER output.
//
// The accepted language is the canonical JSON object
//
//   {"K1": ["e", ...], "K2": [...], ...}
//
// with every schema key present exactly once in schema order, one space after
// each ':' and ',', and every value an array of at most max_entities_per_key
// non-empty strings of at most max_entity_chars characters drawn from the
// schema charset.  Inside strings only \" and \\ escapes are allowed.
//
// The automaton runs over UTF-8 bytes.  Multi-byte characters are validated
// per RFC 3629 so that every accepted string is well-formed UTF-8.

#include <algorithm>
#include <atomic>
#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlueval/common.hpp"
#include "nlueval/text.hpp"

namespace nlueval::constrain {

/// Ordered tag -> entity strings.  Order follows the schema keys.
using EntityMapping = std::vector<std::pair<std::string, std::vector<std::string>>>;

using TokenId = std::int32_t;

/// Characters allowed inside entity strings.  ASCII is chosen per character;
/// non-ASCII code points are allowed or rejected as a block.
struct Charset {
  std::bitset<128> ascii;
  bool non_ascii = false;

  static Charset printable() {
    Charset c;
    for (int b = 0x20; b < 0x7F; ++b) c.ascii.set(static_cast<std::size_t>(b));
    c.non_ascii = true;
    return c;
  }

  static Charset of(std::string_view chars, bool non_ascii = false) {
    Charset c;
    for (unsigned char ch : chars) {
      if (ch >= 0x80) throw Error("Charset::of takes ASCII characters only");
      c.ascii.set(ch);
    }
    c.non_ascii = non_ascii;
    return c;
  }

  bool allows(unsigned char ch) const { return ch < 0x80 ? ascii.test(ch) : non_ascii; }
};

struct OutputSchema {
  std::vector<std::string> keys;
  Charset charset = Charset::printable();
  std::size_t max_entities_per_key = 32;
  std::size_t max_entity_chars = 128;
};

inline void append_json_string(std::string& out, std::string_view s) {
  out.push_back('"');
  for (unsigned char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
      out.push_back(static_cast<char>(c));
    } else if (c < 0x20 || c == 0x7F) {
      out.push_back(' ');
    } else {
      out.push_back(static_cast<char>(c));
    }
  }
  out.push_back('"');
}

/// Canonical serialization, the same form the automaton accepts.
inline std::string canonical_json(const EntityMapping& mapping) {
  std::string out = "{";
  for (std::size_t k = 0; k < mapping.size(); ++k) {
    if (k > 0) out += ", ";
    append_json_string(out, mapping[k].first);
    out += ": [";
    for (std::size_t e = 0; e < mapping[k].second.size(); ++e) {
      if (e > 0) out += ", ";
      append_json_string(out, mapping[k].second[e]);
    }
    out += "]";
  }
  out += "}";
  return out;
}

inline EntityMapping empty_mapping(const std::vector<std::string>& keys) {
  EntityMapping m;
  for (const auto& k : keys) m.emplace_back(k, std::vector<std::string>{});
  return m;
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Token strings indexed by a byte trie so that mask computation can share
/// work between tokens with common prefixes.
class Vocabulary {
 public:
  Vocabulary() { nodes_.emplace_back(); }

  explicit Vocabulary(const std::vector<std::pair<TokenId, std::string>>& entries) : Vocabulary() {
    for (const auto& [id, s] : entries) add(id, s);
  }

  void add(TokenId id, std::string token) {
    if (token.empty()) throw Error("vocabulary token " + std::to_string(id) + " is empty");
    if (strings_.count(id) != 0) throw Error("duplicate vocabulary token id " + std::to_string(id));
    std::uint32_t node = 0;
    for (unsigned char c : token) {
      auto& kids = nodes_[node].children;
      auto it = std::lower_bound(kids.begin(), kids.end(), c,
                                 [](const auto& p, unsigned char v) { return p.first < v; });
      if (it != kids.end() && it->first == c) {
        node = it->second;
      } else {
        const auto fresh = static_cast<std::uint32_t>(nodes_.size());
        kids.insert(it, {c, fresh});
        nodes_.emplace_back();
        node = fresh;
      }
    }
    nodes_[node].ids.push_back(id);
    strings_.emplace(id, std::move(token));
  }

  std::size_t size() const noexcept { return strings_.size(); }

  const std::string& token(TokenId id) const {
    auto it = strings_.find(id);
    if (it == strings_.end()) throw Error("token id " + std::to_string(id) + " is not in the vocabulary");
    return it->second;
  }

  /// (id, string) pairs sorted by id.
  std::vector<std::pair<TokenId, std::string>> entries() const {
    std::vector<std::pair<TokenId, std::string>> out(strings_.begin(), strings_.end());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  friend class Automaton;

  struct Node {
    std::vector<std::pair<unsigned char, std::uint32_t>> children;
    std::vector<TokenId> ids;
  };

  std::vector<Node> nodes_;
  std::unordered_map<TokenId, std::string> strings_;
};

// ---------------------------------------------------------------------------
// Automaton

/// Position of the matcher.  Small and trivially copyable; equality means the
/// same set of accepted continuations.
struct Cursor {
  enum class Phase : std::uint8_t { kLiteral, kListOpen, kString, kEscape, kUtf8, kAfterString, kDone };

  Phase phase = Phase::kLiteral;
  std::uint8_t utf8_left = 0;  // continuation bytes still expected
  std::uint8_t utf8_lo = 0;    // range of the next continuation byte
  std::uint8_t utf8_hi = 0;
  std::uint32_t key = 0;       // index of the key whose list is being built
  std::uint32_t literal = 0;   // literal being matched (kLiteral only)
  std::uint32_t pos = 0;       // bytes of the literal already matched
  std::uint32_t entities = 0;  // strings opened in the current list
  std::uint32_t chars = 0;     // characters in the current string

  friend bool operator==(const Cursor&, const Cursor&) = default;
};

/// Decoding session state: the automaton position plus everything emitted so far.
class ConstraintState {
 public:
  const std::string& emitted() const noexcept { return emitted_; }
  const Cursor& cursor() const noexcept { return cursor_; }
  bool accepting() const noexcept { return cursor_.phase == Cursor::Phase::kDone; }

  friend bool operator==(const ConstraintState& a, const ConstraintState& b) {
    return a.owner_ == b.owner_ && a.cursor_ == b.cursor_ && a.emitted_ == b.emitted_;
  }

 private:
  friend class Automaton;
  std::uint64_t owner_ = 0;
  Cursor cursor_;
  std::string emitted_;
};

class Automaton {
 public:
  explicit Automaton(OutputSchema schema) : schema_(std::move(schema)), serial_(next_serial()) {
    if (schema_.keys.empty()) throw Error("output schema has no keys");
    std::unordered_set<std::string> seen;
    for (const auto& k : schema_.keys) {
      if (k.empty()) throw Error("output schema has an empty key");
      if (!seen.insert(k).second) throw Error("duplicate output schema key '" + k + "'");
      for (unsigned char c : k) {
        if (c < 0x20 || c == '"' || c == '\\') {
          throw Error("output schema key '" + k + "' needs escaping");
        }
      }
    }
    for (unsigned char c = 0; c < 0x20; ++c) {
      if (schema_.charset.ascii.test(c)) throw Error("charset contains a control character");
    }
    if (schema_.charset.ascii.test(0x7F)) throw Error("charset contains DEL");
    if (schema_.charset.ascii.none() && !schema_.charset.non_ascii) throw Error("charset is empty");
    if (schema_.max_entity_chars == 0) throw Error("max_entity_chars must be positive");

    for (std::size_t k = 0; k < schema_.keys.size(); ++k) {
      std::string lit = k == 0 ? "{" : ", ";
      append_json_string(lit, schema_.keys[k]);
      lit += ": [";
      literals_.push_back(std::move(lit));
    }
    close_literal_ = static_cast<std::uint32_t>(literals_.size());
    literals_.push_back("}");
    separator_literal_ = static_cast<std::uint32_t>(literals_.size());
    literals_.push_back(", \"");
  }

  const OutputSchema& schema() const noexcept { return schema_; }

  ConstraintState start() const {
    ConstraintState s;
    s.owner_ = serial_;
    return s;
  }

  /// Cursor after consuming one byte, or nullopt if the byte leaves the language.
  std::optional<Cursor> step(Cursor c, unsigned char b) const {
    using Phase = Cursor::Phase;
    const auto& cs = schema_.charset;
    switch (c.phase) {
      case Phase::kLiteral: {
        const std::string& lit = literals_[c.literal];
        if (static_cast<unsigned char>(lit[c.pos]) != b) return std::nullopt;
        if (++c.pos < lit.size()) return c;
        if (c.literal == close_literal_) {
          c.phase = Phase::kDone;
        } else if (c.literal == separator_literal_) {
          ++c.entities;
          c.phase = Phase::kString;
          c.chars = 0;
        } else {
          c.key = c.literal;
          c.phase = Phase::kListOpen;
          c.entities = 0;
        }
        c.pos = 0;
        c.literal = 0;
        return c;
      }
      case Phase::kListOpen:
        if (b == ']') return close_list(c);
        if (b == '"' && schema_.max_entities_per_key > 0) {
          c.phase = Phase::kString;
          c.entities = 1;
          c.chars = 0;
          return c;
        }
        return std::nullopt;
      case Phase::kString:
        if (b == '"') {
          if (c.chars == 0) return std::nullopt;
          c.phase = Phase::kAfterString;
          return c;
        }
        if (c.chars >= schema_.max_entity_chars) return std::nullopt;
        if (b == '\\') {
          if (!cs.allows('"') && !cs.allows('\\')) return std::nullopt;
          c.phase = Phase::kEscape;
          return c;
        }
        if (b < 0x80) {
          if (!cs.allows(b)) return std::nullopt;
          ++c.chars;
          return c;
        }
        if (!cs.non_ascii) return std::nullopt;
        return utf8_lead(c, b);
      case Phase::kEscape:
        if ((b == '"' || b == '\\') && cs.allows(b)) {
          ++c.chars;
          c.phase = Phase::kString;
          return c;
        }
        return std::nullopt;
      case Phase::kUtf8:
        if (b < c.utf8_lo || b > c.utf8_hi) return std::nullopt;
        c.utf8_lo = 0x80;
        c.utf8_hi = 0xBF;
        if (--c.utf8_left == 0) {
          ++c.chars;
          c.phase = Phase::kString;
          c.utf8_lo = c.utf8_hi = 0;
        }
        return c;
      case Phase::kAfterString:
        if (b == ']') return close_list(c);
        if (b == ',' && c.entities < schema_.max_entities_per_key) {
          c.phase = Phase::kLiteral;
          c.literal = separator_literal_;
          c.pos = 1;
          return c;
        }
        return std::nullopt;
      case Phase::kDone:
        return std::nullopt;
    }
    return std::nullopt;
  }

  /// Cursor after consuming `bytes`, or nullopt.
  std::optional<Cursor> step(Cursor c, std::string_view bytes) const {
    for (unsigned char b : bytes) {
      auto next = step(c, b);
      if (!next) return std::nullopt;
      c = *next;
    }
    return c;
  }

  /// State reached by emitting `text` from the start, if `text` is a viable prefix.
  std::optional<ConstraintState> state_for(std::string_view text) const {
    auto c = step(Cursor{}, text);
    if (!c) return std::nullopt;
    ConstraintState s = start();
    s.cursor_ = *c;
    s.emitted_ = std::string(text);
    return s;
  }

  bool accepts(std::string_view text) const {
    auto c = step(Cursor{}, text);
    return c && c->phase == Cursor::Phase::kDone;
  }

  /// Ids of tokens that keep the output a viable prefix, ascending.
  std::vector<TokenId> allowed_tokens(const ConstraintState& state, const Vocabulary& vocab) const {
    check_owner(state);
    std::vector<TokenId> out;
    struct Frame {
      std::uint32_t node;
      Cursor cursor;
    };
    std::vector<Frame> stack{{0, state.cursor_}};
    while (!stack.empty()) {
      const Frame f = stack.back();
      stack.pop_back();
      const auto& node = vocab.nodes_[f.node];
      out.insert(out.end(), node.ids.begin(), node.ids.end());
      for (const auto& [byte, child] : node.children) {
        if (auto next = step(f.cursor, byte)) stack.push_back({child, *next});
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  ConstraintState advance(const ConstraintState& state, TokenId token, const Vocabulary& vocab) const {
    check_owner(state);
    const std::string& s = vocab.token(token);
    auto c = step(state.cursor_, s);
    if (!c) {
      throw Error("token " + std::to_string(token) + " ('" + s + "') is not allowed after '" +
                  state.emitted_ + "'");
    }
    ConstraintState next = state;
    next.cursor_ = *c;
    next.emitted_ += s;
    return next;
  }

  /// Character-level advance, used as the reference for token-level decoding.
  ConstraintState advance_bytes(const ConstraintState& state, std::string_view bytes) const {
    check_owner(state);
    ConstraintState next = state;
    for (unsigned char b : bytes) {
      auto c = step(next.cursor_, b);
      if (!c) throw Error("byte not allowed after '" + next.emitted_ + "'");
      next.cursor_ = *c;
      next.emitted_.push_back(static_cast<char>(b));
    }
    return next;
  }

  /// Shortest byte string that completes the output from `state`.
  std::string shortest_completion(const ConstraintState& state) const {
    check_owner(state);
    using Phase = Cursor::Phase;
    std::string out;
    Cursor c = state.cursor_;
    while (c.phase != Phase::kDone) {
      unsigned char b = 0;
      switch (c.phase) {
        case Phase::kLiteral: b = static_cast<unsigned char>(literals_[c.literal][c.pos]); break;
        case Phase::kListOpen:
        case Phase::kAfterString: b = ']'; break;
        case Phase::kString: b = c.chars > 0 ? '"' : smallest_char(); break;
        case Phase::kEscape: b = schema_.charset.allows('"') ? '"' : '\\'; break;
        case Phase::kUtf8: b = c.utf8_lo; break;
        case Phase::kDone: break;
      }
      if (c.phase == Phase::kString && c.chars == 0 && b >= 0x80) {
        // No ASCII in the charset: complete with U+00A0 (C2 A0).
        out += "\xC2\xA0";
        c = *step(c, std::string_view("\xC2\xA0"));
        continue;
      }
      out.push_back(static_cast<char>(b));
      c = *step(c, b);
    }
    return out;
  }

 private:
  static std::uint64_t next_serial() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  void check_owner(const ConstraintState& s) const {
    if (s.owner_ != serial_) throw Error("constraint state does not belong to this automaton");
  }

  Cursor close_list(Cursor c) const {
    c.entities = 0;
    c.chars = 0;
    c.phase = Cursor::Phase::kLiteral;
    c.pos = 0;
    c.literal = c.key + 1 < schema_.keys.size() ? c.key + 1 : close_literal_;
    return c;
  }

  static std::optional<Cursor> utf8_lead(Cursor c, unsigned char b) {
    std::uint8_t left = 0;
    std::uint8_t lo = 0x80;
    std::uint8_t hi = 0xBF;
    if (b >= 0xC2 && b <= 0xDF) {
      left = 1;
    } else if (b >= 0xE0 && b <= 0xEF) {
      left = 2;
      if (b == 0xE0) lo = 0xA0;
      if (b == 0xED) hi = 0x9F;
    } else if (b >= 0xF0 && b <= 0xF4) {
      left = 3;
      if (b == 0xF0) lo = 0x90;
      if (b == 0xF4) hi = 0x8F;
    } else {
      return std::nullopt;
    }
    c.phase = Cursor::Phase::kUtf8;
    c.utf8_left = left;
    c.utf8_lo = lo;
    c.utf8_hi = hi;
    return c;
  }

  unsigned char smallest_char() const {
    for (unsigned char ch = 0x20; ch < 0x7F; ++ch) {
      if (ch != '"' && ch != '\\' && schema_.charset.allows(ch)) return ch;
    }
    if (schema_.charset.allows('"') || schema_.charset.allows('\\')) return '\\';
    return 0xC2;
  }

  OutputSchema schema_;
  std::uint64_t serial_;
  std::vector<std::string> literals_;
  std::uint32_t close_literal_ = 0;
  std::uint32_t separator_literal_ = 0;
};

inline Automaton compile_schema(OutputSchema schema) { return Automaton(std::move(schema)); }

// ---------------------------------------------------------------------------
// Fallback parsing for unconstrained generations

/// Byte length of the first complete JSON object at the start of `s`
/// (after leading whitespace), or nullopt.
inline std::optional<std::size_t> first_object_extent(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
  if (i == s.size() || s[i] != '{') return std::nullopt;
  int depth = 0;
  bool in_string = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      ++depth;
    } else if (c == '}' || c == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

/// Map a free-form generation onto the schema keys.  Text after the first
/// complete object is ignored, missing keys become empty lists and unknown
/// keys are dropped.  Anything unparseable yields the all-empty mapping.
inline EntityMapping repair_or_reject(std::string_view raw, const OutputSchema& schema) {
  EntityMapping empty = empty_mapping(schema.keys);
  const auto extent = first_object_extent(raw);
  if (!extent) return empty;
  const auto parsed = nlohmann::json::parse(raw.substr(0, *extent), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return empty;
  EntityMapping out = empty;
  for (auto& [key, values] : out) {
    auto it = parsed.find(key);
    if (it == parsed.end()) continue;
    if (!it->is_array()) return empty;
    for (const auto& v : *it) {
      if (!v.is_string()) return empty;
      values.push_back(v.get<std::string>());
    }
  }
  return out;
}

}  // namespace nlueval::constrain
