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

// Parallel/monolingual corpus handling: TSV loading, minimum-length
// filtering, seeded shuffling, and the fixed 8:1:1 split.

#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "mergen/error.hpp"
#include "mergen/io.hpp"
#include "mergen/rng.hpp"

namespace mergen::corpus {

using Sentence = std::vector<std::string>;  // whitespace tokens, none empty

enum class Origin { laodang, dictionary, synthetic };

struct ParallelPair {
  Sentence source;  // Manchu side, romanized
  Sentence target;  // Korean side, romanized
  Origin origin = Origin::synthetic;

  bool operator==(const ParallelPair& o) const {
    return source == o.source && target == o.target;
  }
};

// Ratios are fixed at 8:1:1; the seed is recorded for provenance (split
// itself never reshuffles).
struct SplitSpec {
  std::uint64_t seed = 0;
};

inline std::vector<ParallelPair> parse_parallel(const std::vector<std::string>& lines,
                                                const std::string& origin_name,
                                                Origin origin = Origin::synthetic) {
  std::vector<ParallelPair> pairs;
  pairs.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw Error(Err::MalformedLine,
                  origin_name + ":" + std::to_string(i + 1) + ": expected source<TAB>target");
    }
    ParallelPair p;
    p.source = split_ws(line.substr(0, tab));
    p.target = split_ws(line.substr(tab + 1));
    p.origin = origin;
    if (p.source.empty() || p.target.empty()) {
      throw Error(Err::EmptySide, origin_name + ":" + std::to_string(i + 1));
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<ParallelPair> load_parallel(const std::string& path,
                                               Origin origin = Origin::synthetic) {
  return parse_parallel(read_lines(path), path, origin);
}

inline std::string format_pair(const ParallelPair& p) {
  return join(p.source) + "\t" + join(p.target);
}

inline void save_parallel(const std::string& path, const std::vector<ParallelPair>& pairs) {
  std::vector<std::string> lines;
  lines.reserve(pairs.size());
  for (const auto& p : pairs) lines.push_back(format_pair(p));
  write_lines(path, lines);
}

// One sentence per line.
inline std::vector<Sentence> load_monolingual(const std::string& path) {
  std::vector<Sentence> out;
  for (const std::string& line : read_lines(path)) {
    Sentence s = split_ws(line);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

// Keeps pairs whose source sentence has at least n tokens. The length
// criterion is about the source side; dictionary targets may be one gloss.
inline std::vector<ParallelPair> filter_min_len(const std::vector<ParallelPair>& pairs,
                                                std::size_t n) {
  std::vector<ParallelPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.source.size() >= n) out.push_back(p);
  }
  return out;
}

inline std::vector<Sentence> filter_min_len(const std::vector<Sentence>& sentences, std::size_t n) {
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    if (s.size() >= n) out.push_back(s);
  }
  return out;
}

inline std::vector<ParallelPair> shuffle(std::vector<ParallelPair> pairs, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(pairs);
  return pairs;
}

struct Split {
  std::vector<ParallelPair> train;
  std::vector<ParallelPair> valid;
  std::vector<ParallelPair> test;
};

// Contiguous 8:1:1 slices of an already-shuffled list. valid and test each
// get floor(N/10); the remainder goes to train.
inline Split split(const std::vector<ParallelPair>& pairs, const SplitSpec& = {}) {
  const std::size_t n = pairs.size();
  if (n < 10) {
    throw Error(Err::TooSmall, "need at least 10 pairs to split 8:1:1, got " + std::to_string(n));
  }
  const std::size_t tenth = n / 10;
  Split s;
  s.train.assign(pairs.begin(), pairs.end() - 2 * tenth);
  s.valid.assign(pairs.end() - 2 * tenth, pairs.end() - tenth);
  s.test.assign(pairs.end() - tenth, pairs.end());
  return s;
}

inline std::vector<Sentence> source_sentences(const std::vector<ParallelPair>& pairs) {
  std::vector<Sentence> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

inline std::vector<Sentence> target_sentences(const std::vector<ParallelPair>& pairs) {
  std::vector<Sentence> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

}  // namespace mergen::corpus
