// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "radllama/error.hpp"

namespace radllama {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static RougeScore from_counts(std::size_t matches, std::size_t cand_total,
                                std::size_t ref_total) {
    if (cand_total == 0 || ref_total == 0) return {};
    RougeScore s;
    s.precision = static_cast<double>(matches) / static_cast<double>(cand_total);
    s.recall = static_cast<double>(matches) / static_cast<double>(ref_total);
    s.f1 = harmonic(s.precision, s.recall);
    return s;
  }

  static double harmonic(double p, double r) {
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

/// Lowercase, split on every non-alphanumeric byte, drop empties. Bytes
/// outside ASCII count as separators. No stemming or stopwords.
inline std::vector<std::string> rouge_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (c < 128 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace detail {

using Ngram = std::vector<std::string_view>;

inline std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                 std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    Ngram g(toks.begin() + static_cast<std::ptrdiff_t>(i),
            toks.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[std::move(g)];
  }
  return counts;
}

// Two-row dynamic program.
inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Clipped n-gram overlap on pre-tokenized sequences.
inline RougeScore rouge_n_tokens(const std::vector<std::string>& cand,
                                 const std::vector<std::string>& ref, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kBadConfig, "rouge n must be >= 1");
  const auto cc = detail::ngram_counts(cand, n);
  const auto rc = detail::ngram_counts(ref, n);
  const std::size_t cand_total = cand.size() >= n ? cand.size() - n + 1 : 0;
  const std::size_t ref_total = ref.size() >= n ? ref.size() - n + 1 : 0;
  std::size_t matches = 0;
  for (const auto& [g, c] : cc) {
    if (auto it = rc.find(g); it != rc.end()) matches += std::min(c, it->second);
  }
  return RougeScore::from_counts(matches, cand_total, ref_total);
}

inline RougeScore rouge_n(std::string_view candidate, std::string_view reference,
                          std::size_t n) {
  return rouge_n_tokens(rouge_tokenize(candidate), rouge_tokenize(reference), n);
}

inline RougeScore rouge_l_tokens(const std::vector<std::string>& cand,
                                 const std::vector<std::string>& ref) {
  return RougeScore::from_counts(detail::lcs_length(cand, ref), cand.size(), ref.size());
}

inline RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l_tokens(rouge_tokenize(candidate), rouge_tokenize(reference));
}

struct RougeTriple {
  RougeScore rouge1, rouge2, rougeL;
};

inline RougeTriple score_pair(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_tokenize(candidate);
  const auto r = rouge_tokenize(reference);
  return {rouge_n_tokens(c, r, 1), rouge_n_tokens(c, r, 2), rouge_l_tokens(c, r)};
}

/// Unweighted mean over pairs of P, R and F1 for each variant.
inline RougeTriple corpus_rouge(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw Error(ErrorKind::kEmptyCorpus, "no candidate/reference pairs");
  RougeTriple acc;
  auto add = [](RougeScore& a, const RougeScore& b) {
    a.precision += b.precision;
    a.recall += b.recall;
    a.f1 += b.f1;
  };
  for (const auto& [cand, ref] : pairs) {
    const RougeTriple s = score_pair(cand, ref);
    add(acc.rouge1, s.rouge1);
    add(acc.rouge2, s.rouge2);
    add(acc.rougeL, s.rougeL);
  }
  const double n = static_cast<double>(pairs.size());
  for (RougeScore* s : {&acc.rouge1, &acc.rouge2, &acc.rougeL}) {
    s->precision /= n;
    s->recall /= n;
    s->f1 /= n;
  }
  return acc;
}

}  // namespace radllama
