//
// Copyright 2026 The Mergen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Table-driven romanization: Hangul -> Yale Latin and Manchu script ->
// Abkai Latin, with the inverse parses. The mapping tables live in plain
// TSV files under data/translit/ so they can be audited and corrected
// without touching code.

#pragma once

#include <array>
#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mergen/error.hpp"
#include "mergen/io.hpp"
#include "mergen/unicode.hpp"

namespace mergen::translit {

inline constexpr char32_t kHangulFirst = 0xAC00;
inline constexpr char32_t kHangulLast = 0xD7A3;
inline constexpr int kInitialCount = 19;
inline constexpr int kMedialCount = 21;
inline constexpr int kFinalCount = 28;  // index 0 = no final

struct JamoTriple {
  int initial = 0;  // 0..18
  int medial = 0;   // 0..20
  int final = 0;    // 0..27, 0 = none

  bool operator==(const JamoTriple&) const = default;
};

inline bool is_hangul_syllable(char32_t cp) { return cp >= kHangulFirst && cp <= kHangulLast; }

inline JamoTriple decompose_hangul(char32_t cp) {
  if (!is_hangul_syllable(cp)) {
    throw Error(Err::NotASyllable, "U+" + std::to_string(static_cast<std::uint32_t>(cp)) +
                                       " is outside the precomposed Hangul block");
  }
  int q = static_cast<int>(cp - kHangulFirst);
  return JamoTriple{q / 588, (q % 588) / 28, q % 28};
}

inline char32_t compose_hangul(const JamoTriple& j) {
  return kHangulFirst + static_cast<char32_t>(j.initial * 588 + j.medial * 28 + j.final);
}

// Characters copied through unchanged on romanization. Anything that is not
// Hangul/Manchu, whitespace, ASCII Latin, or in this set raises
// UnmappableCharacter: silently dropping characters would corrupt the
// alignment of parallel text.
inline bool is_pass_punct(char32_t cp) {
  return (cp >= U'0' && cp <= U'9') || cp == U'.' || cp == U',' || cp == U'?' || cp == U'!' ||
         cp == U'-';
}

inline bool is_space_cp(char32_t cp) { return cp == U' ' || cp == U'\t'; }

inline bool is_ascii_letter(char32_t cp) {
  return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
}

struct YaleTables {
  std::array<std::string, kInitialCount> initials;
  std::array<std::string, kMedialCount> medials;
  std::array<std::string, kFinalCount> finals;  // [0] = ""
};

// Manchu letter table. backward maps each Latin value to its canonical unit;
// lossy_units are variant letterforms whose round trip lands on the canonical
// letter instead of themselves.
struct MappingTable {
  std::vector<char32_t> units;  // file order
  std::unordered_map<char32_t, std::string> forward;
  std::unordered_map<std::string, char32_t> backward;
  std::unordered_set<char32_t> lossy_units;
  std::size_t max_latin_len = 1;
};

namespace detail {

// Strips comments, splits "unit<TAB>latin[<TAB>flags]". The latin field may
// be empty (Yale null initial).
struct TableLine {
  std::string unit;
  std::string latin;
  std::string flags;
};

inline std::vector<TableLine> parse_table_file(const std::string& path) {
  std::vector<TableLine> out;
  for (const std::string& raw : read_lines(path)) {
    if (raw.empty() || raw[0] == '#') continue;
    std::size_t t1 = raw.find('\t');
    if (t1 == std::string::npos) {
      throw Error(Err::MalformedLine, path + ": expected unit<TAB>latin, got \"" + raw + "\"");
    }
    TableLine line;
    line.unit = raw.substr(0, t1);
    std::size_t t2 = raw.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      line.latin = raw.substr(t1 + 1);
    } else {
      line.latin = raw.substr(t1 + 1, t2 - t1 - 1);
      line.flags = raw.substr(t2 + 1);
    }
    out.push_back(std::move(line));
  }
  return out;
}

template <std::size_t N>
void load_yale_file(const std::string& path, std::array<std::string, N>& dst, std::size_t offset) {
  auto lines = parse_table_file(path);
  if (lines.size() + offset != N) {
    throw Error(Err::BadConfig, path + ": expected " + std::to_string(N - offset) +
                                    " entries, found " + std::to_string(lines.size()));
  }
  for (std::size_t i = 0; i < lines.size(); ++i) dst[i + offset] = lines[i].latin;
}

}  // namespace detail

struct Tables {
  YaleTables yale;
  MappingTable abkai;

  static Tables load(const std::string& dir) {
    Tables t;
    detail::load_yale_file(dir + "/yale_initial.tsv", t.yale.initials, 0);
    detail::load_yale_file(dir + "/yale_medial.tsv", t.yale.medials, 0);
    t.yale.finals[0] = "";
    detail::load_yale_file(dir + "/yale_final.tsv", t.yale.finals, 1);

    for (const auto& line : detail::parse_table_file(dir + "/abkai.tsv")) {
      auto cps = decode_utf8(line.unit);
      if (cps.size() != 1) {
        throw Error(Err::MalformedLine, "abkai.tsv: unit must be a single code point: " + line.unit);
      }
      char32_t unit = cps[0];
      if (line.latin.empty()) {
        throw Error(Err::MalformedLine, "abkai.tsv: empty latin value for " + line.unit);
      }
      bool lossy = line.flags == "lossy";
      if (t.abkai.forward.count(unit)) {
        throw Error(Err::MalformedLine, "abkai.tsv: duplicate unit " + line.unit);
      }
      t.abkai.units.push_back(unit);
      t.abkai.forward[unit] = line.latin;
      if (lossy) {
        t.abkai.lossy_units.insert(unit);
        if (!t.abkai.backward.count(line.latin)) {
          throw Error(Err::BadConfig,
                      "abkai.tsv: lossy unit " + line.unit + " has no canonical owner of \"" +
                          line.latin + "\"; list the canonical unit first");
        }
      } else {
        if (t.abkai.backward.count(line.latin)) {
          throw Error(Err::BadConfig, "abkai.tsv: latin \"" + line.latin +
                                          "\" claimed twice by non-lossy units");
        }
        t.abkai.backward[line.latin] = unit;
      }
      t.abkai.max_latin_len = std::max(t.abkai.max_latin_len, line.latin.size());
    }
    return t;
  }
};

// ---------------------------------------------------------------------------
// Hangul <-> Yale

inline std::string yale_romanize_syllable(const YaleTables& y, char32_t cp) {
  JamoTriple j = decompose_hangul(cp);
  return y.initials[j.initial] + y.medials[j.medial] + y.finals[j.final];
}

inline std::string yale_romanize(const Tables& t, const std::string& text) {
  std::string out;
  for (char32_t cp : decode_utf8(text)) {
    if (is_hangul_syllable(cp)) {
      out += yale_romanize_syllable(t.yale, cp);
    } else if (is_space_cp(cp) || is_pass_punct(cp) || is_ascii_letter(cp)) {
      append_utf8(out, cp);
    } else {
      throw Error(Err::UnmappableCharacter,
                  "U+" + std::to_string(static_cast<std::uint32_t>(cp)) + " in \"" + text + "\"");
    }
  }
  return out;
}

namespace detail {

// Candidate jamo spellings for one slot, longest first so the parse is
// greedy. The empty spelling (null initial, no final) sorts last.
struct SlotCandidates {
  std::vector<std::pair<std::string, int>> items;

  template <std::size_t N>
  static SlotCandidates from(const std::array<std::string, N>& table) {
    SlotCandidates s;
    for (std::size_t i = 0; i < N; ++i) s.items.emplace_back(table[i], static_cast<int>(i));
    std::stable_sort(s.items.begin(), s.items.end(), [](const auto& a, const auto& b) {
      return a.first.size() > b.first.size();
    });
    return s;
  }
};

// Backtracking recognizer over one alphabetic word. Longest-match choices are
// explored first, so the result is the greedy parse whenever the greedy parse
// is viable; memoized failures keep it linear in practice.
class YaleWordParser {
 public:
  explicit YaleWordParser(const YaleTables& y)
      : initials_(SlotCandidates::from(y.initials)),
        medials_(SlotCandidates::from(y.medials)),
        finals_(SlotCandidates::from(y.finals)) {}

  // Returns the syllables for `word`, or empty optional-equivalent via throw.
  std::vector<JamoTriple> parse(const std::string& word) const {
    std::vector<JamoTriple> out;
    std::vector<char> failed(word.size() + 1, 0);
    if (!parse_from(word, 0, failed, out)) {
      throw Error(Err::AmbiguousParse, "no valid syllabification for \"" + word + "\"");
    }
    return out;
  }

 private:
  static bool match_at(const std::string& w, std::size_t pos, const std::string& piece) {
    return w.compare(pos, piece.size(), piece) == 0;
  }

  bool parse_from(const std::string& w, std::size_t pos, std::vector<char>& failed,
                  std::vector<JamoTriple>& out) const {
    if (pos == w.size()) return true;
    if (failed[pos]) return false;
    for (const auto& [ini, ini_idx] : initials_.items) {
      if (!match_at(w, pos, ini)) continue;
      std::size_t p1 = pos + ini.size();
      for (const auto& [med, med_idx] : medials_.items) {
        if (med.empty() || !match_at(w, p1, med)) continue;
        std::size_t p2 = p1 + med.size();
        for (const auto& [fin, fin_idx] : finals_.items) {
          if (!match_at(w, p2, fin)) continue;
          out.push_back(JamoTriple{ini_idx, med_idx, fin_idx});
          if (parse_from(w, p2 + fin.size(), failed, out)) return true;
          out.pop_back();
        }
      }
    }
    failed[pos] = 1;
    return false;
  }

  SlotCandidates initials_;
  SlotCandidates medials_;
  SlotCandidates finals_;
};

}  // namespace detail

// Inverse of yale_romanize: any successful parse re-romanizes to the exact
// input, and single syllables always recover themselves.
inline std::string yale_deromanize(const Tables& t, const std::string& latin) {
  detail::YaleWordParser parser(t.yale);
  std::string out;
  std::size_t i = 0;
  while (i < latin.size()) {
    char c = latin[i];
    if (c >= 'a' && c <= 'z') {
      std::size_t j = i;
      while (j < latin.size() && latin[j] >= 'a' && latin[j] <= 'z') ++j;
      for (const JamoTriple& syl : parser.parse(latin.substr(i, j - i))) {
        append_utf8(out, compose_hangul(syl));
      }
      i = j;
    } else if (is_space_cp(static_cast<char32_t>(c)) ||
               is_pass_punct(static_cast<char32_t>(static_cast<unsigned char>(c)))) {
      out.push_back(c);
      ++i;
    } else {
      throw Error(Err::AmbiguousParse,
                  "unexpected character '" + std::string(1, c) + "' in \"" + latin + "\"");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manchu <-> Abkai

struct AbkaiResult {
  std::string latin;
  // Code-point indices of lossy letters in the input; the side report of
  // positions whose round trip is not the identity.
  std::vector<std::size_t> lossy_positions;
};

inline AbkaiResult abkai_romanize(const Tables& t, const std::string& text) {
  AbkaiResult res;
  auto cps = decode_utf8(text);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    char32_t cp = cps[i];
    auto it = t.abkai.forward.find(cp);
    if (it != t.abkai.forward.end()) {
      res.latin += it->second;
      if (t.abkai.lossy_units.count(cp)) res.lossy_positions.push_back(i);
    } else if (is_space_cp(cp) || is_pass_punct(cp) || is_ascii_letter(cp)) {
      append_utf8(res.latin, cp);
    } else {
      throw Error(Err::UnmappableCharacter,
                  "U+" + std::to_string(static_cast<std::uint32_t>(cp)) + " in \"" + text + "\"");
    }
  }
  return res;
}

inline std::string abkai_deromanize(const Tables& t, const std::string& latin) {
  std::string out;
  std::size_t i = 0;
  while (i < latin.size()) {
    char c = latin[i];
    if ((c >= 'a' && c <= 'z') || c == '\'') {
      std::size_t len = std::min(t.abkai.max_latin_len, latin.size() - i);
      bool matched = false;
      for (; len >= 1; --len) {
        auto it = t.abkai.backward.find(latin.substr(i, len));
        if (it != t.abkai.backward.end()) {
          append_utf8(out, it->second);
          i += len;
          matched = true;
          break;
        }
      }
      if (!matched) {
        throw Error(Err::AmbiguousParse, "no Manchu letter matches \"" + latin.substr(i) +
                                             "\" (offset " + std::to_string(i) + ")");
      }
    } else if (is_space_cp(static_cast<char32_t>(c)) ||
               is_pass_punct(static_cast<char32_t>(static_cast<unsigned char>(c)))) {
      out.push_back(c);
      ++i;
    } else {
      throw Error(Err::AmbiguousParse,
                  "unexpected character '" + std::string(1, c) + "' in \"" + latin + "\"");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Script sniffing: romanization is an optional stage, applied only when the
// text actually carries Hangul or Manchu code points.

enum class Script { latin, hangul, manchu };

inline Script sniff_script(const std::string& text) {
  for (char32_t cp : decode_utf8(text)) {
    if (is_hangul_syllable(cp)) return Script::hangul;
    if (cp >= 0x1800 && cp <= 0x18AF) return Script::manchu;
  }
  return Script::latin;
}

}  // namespace mergen::translit
