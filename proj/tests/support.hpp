// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Test-only helpers: independent reference implementations that share no
// code with the library, scratch directories and small fixture builders.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "radllama/expert_eval.hpp"
#include "radllama/rng.hpp"

namespace radllama::testing {

// ---------------------------------------------------------------------------
// Brute-force ROUGE.

struct OracleScore {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Character-by-character tokenizer written independently of rouge_tokenize.
inline std::vector<std::string> oracle_tokens(const std::string& s) {
  std::vector<std::string> out(1);
  for (char ch : s) {
    const bool digit = ch >= '0' && ch <= '9';
    const bool lower = ch >= 'a' && ch <= 'z';
    const bool upper = ch >= 'A' && ch <= 'Z';
    if (digit || lower) {
      out.back() += ch;
    } else if (upper) {
      out.back() += static_cast<char>(ch - 'A' + 'a');
    } else if (!out.back().empty()) {
      out.emplace_back();
    }
  }
  if (out.back().empty()) out.pop_back();
  return out;
}

inline OracleScore oracle_from(double m, double nc, double nr) {
  OracleScore s;
  if (nc == 0 || nr == 0) return s;
  s.precision = m / nc;
  s.recall = m / nr;
  s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
  return s;
}

/// Clipped n-gram overlap by explicit matching: each reference n-gram can be
/// consumed by at most one candidate n-gram.
inline OracleScore oracle_rouge_n(const std::vector<std::string>& c,
                                  const std::vector<std::string>& r, std::size_t n) {
  auto grams = [n](const std::vector<std::string>& t) {
    std::vector<std::vector<std::string>> g;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      g.emplace_back(t.begin() + static_cast<std::ptrdiff_t>(i),
                     t.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
    return g;
  };
  const auto cg = grams(c);
  const auto rg = grams(r);
  std::vector<bool> used(rg.size(), false);
  std::size_t m = 0;
  for (const auto& g : cg) {
    for (std::size_t j = 0; j < rg.size(); ++j) {
      if (!used[j] && rg[j] == g) {
        used[j] = true;
        ++m;
        break;
      }
    }
  }
  return oracle_from(static_cast<double>(m), static_cast<double>(cg.size()),
                     static_cast<double>(rg.size()));
}

inline bool is_subsequence(const std::vector<const std::string*>& sub,
                           const std::vector<std::string>& of) {
  std::size_t j = 0;
  for (const auto& tok : of) {
    if (j < sub.size() && *sub[j] == tok) ++j;
  }
  return j == sub.size();
}

/// LCS by enumerating every subsequence of the shorter side.
inline std::size_t oracle_lcs(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& t = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  const std::uint32_t limit = 1u << s.size();
  std::vector<const std::string*> sub;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    const auto k = static_cast<std::size_t>(std::popcount(mask));
    if (k <= best) continue;
    sub.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(&s[i]);
    }
    if (is_subsequence(sub, t)) best = k;
  }
  return best;
}

inline OracleScore oracle_rouge_l(const std::vector<std::string>& c,
                                  const std::vector<std::string>& r) {
  return oracle_from(static_cast<double>(oracle_lcs(c, r)), static_cast<double>(c.size()),
                     static_cast<double>(r.size()));
}

/// Every token sequence over `alphabet` with length <= max_len, shortest first.
inline std::vector<std::vector<std::string>> all_sequences(
    const std::vector<std::string>& alphabet, std::size_t max_len) {
  std::vector<std::vector<std::string>> out{{}};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i) {
      for (const auto& a : alphabet) {
        auto next = out[i];
        next.push_back(a);
        out.push_back(std::move(next));
      }
    }
    begin = end;
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

/// Hand-built candidate/reference pairs: punctuation, case, repeats,
/// reordering, empties and non-ASCII bytes.
inline std::vector<std::pair<std::string, std::string>> constructed_rouge_pairs() {
  return {
      {"the cat sat", "the cat"},
      {"a b c d", "a c d b"},
      {"Heart size normal.", "heart size is normal"},
      {"No acute cardiopulmonary process.", "No acute cardiopulmonary process."},
      {"", "normal study"},
      {"normal study", ""},
      {"", ""},
      {"X-ray shows no effusion", "x ray: no pleural effusion"},
      {"the the the the", "the cat the"},
      {"a a b b a a", "a b a b a b"},
      {"Mild cardiomegaly. Mild edema.", "mild edema, mild cardiomegaly"},
      {"left lower lobe opacity", "right lower lobe opacity"},
      {"1 2 3 4 5 6 7 8", "8 7 6 5 4 3 2 1"},
      {"Hyperexpanded lungs without focal opacity.", "The lungs are hyperexpanded."},
      {"effusion!!!pneumothorax???", "effusion pneumothorax"},
      {"caf\xC3\xA9 opacity", "cafe opacity"},
      {"Stable chest radiograph", "STABLE chest RADIOGRAPH"},
      {"no no no", "no"},
      {"tube in standard position", "support device in standard position"},
      {"old granulomatous disease", "granulomatous disease old"},
  };
}

// ---------------------------------------------------------------------------
// Files.

/// Fresh directory under the system temp path, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("radllama-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << body;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Ratings.

/// Complete design of sums.size() raters x `samples` for one model. Every score is
/// 4 except understandability, which is spread over the samples so that
/// rater k's total equals sums[k].
inline std::vector<ExpertRating> ratings_with_sums(const std::vector<int>& sums,
                                                   std::size_t samples,
                                                   const std::string& model = "m") {
  std::vector<ExpertRating> out;
  for (std::size_t k = 0; k < sums.size(); ++k) {
    int remaining = sums[k];
    for (std::size_t s = 0; s < samples; ++s) {
      const auto left = static_cast<int>(samples - s);
      // Highest score that still leaves at least 1 for every later sample.
      const int u = std::clamp(remaining - (left - 1), kMinScore, kMaxScore);
      remaining -= u;
      ExpertRating r{"rater" + std::to_string(k + 1), "s" + std::to_string(s), model,
                     {u, 4, 4, 4, 4}};
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace radllama::testing
