// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "radllama/error.hpp"
#include "radllama/report_corpus.hpp"
#include "radllama/tsv.hpp"

namespace radllama {

inline constexpr std::size_t kNumCriteria = 5;
inline constexpr std::array<std::string_view, kNumCriteria> kCriteria = {
    "understandability", "coherence", "relevance", "conciseness",
    "clinical_utility"};
inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;

struct ExpertRating {
  std::string rater_id;
  std::string sample_id;
  std::string model_id;
  std::array<int, kNumCriteria> scores{};

  bool operator==(const ExpertRating&) const = default;
};

struct CriterionAggregate {
  std::string model_id;
  std::string criterion;
  double score = 0.0;
  double max_possible = 0.0;
};

inline std::string ratings_header() {
  std::string h = "rater_id\tsample_id\tmodel_id";
  for (auto c : kCriteria) {
    h += '\t';
    h += c;
  }
  return h;
}

/// Parses TSV ratings from a stream. `name` only labels error messages.
/// Row numbers count the header as row 1.
inline std::vector<ExpertRating> parse_ratings(std::istream& in,
                                               const std::string& name = "ratings") {
  std::string line;
  if (!std::getline(in, line) || detail::chomp_cr(line) != ratings_header()) {
    throw Error(ErrorKind::kMalformedRow, name + " row 1: expected header '" +
                                              ratings_header() + "'");
  }
  std::vector<ExpertRating> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view body = detail::chomp_cr(line);
    if (text::is_blank(body)) continue;
    const std::string where = name + " row " + std::to_string(row);
    auto cols = detail::split_tabs(body);
    if (cols.size() != 3 + kNumCriteria) {
      throw Error(ErrorKind::kMalformedRow,
                  where + ": expected " + std::to_string(3 + kNumCriteria) +
                      " columns, found " + std::to_string(cols.size()));
    }
    ExpertRating r{cols[0], cols[1], cols[2], {}};
    if (r.rater_id.empty() || r.sample_id.empty() || r.model_id.empty()) {
      throw Error(ErrorKind::kMalformedRow, where + ": empty id column");
    }
    for (std::size_t c = 0; c < kNumCriteria; ++c) {
      const std::string& cell = cols[3 + c];
      char* end = nullptr;
      const long v = std::strtol(cell.c_str(), &end, 10);
      if (cell.empty() || *end != '\0') {
        throw Error(ErrorKind::kMalformedRow, where + ": " + std::string(kCriteria[c]) +
                                                  " is not an integer: '" + cell + "'");
      }
      if (v < kMinScore || v > kMaxScore) {
        throw Error(ErrorKind::kOutOfRange, where + ": " + std::string(kCriteria[c]) +
                                                " = " + cell + " outside [1,5]");
      }
      r.scores[c] = static_cast<int>(v);
    }
    if (!seen.emplace(r.rater_id, r.sample_id, r.model_id).second) {
      throw Error(ErrorKind::kDuplicateKey, where + ": repeated (" + r.rater_id +
                                                ", " + r.sample_id + ", " +
                                                r.model_id + ")");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<ExpertRating> load_ratings(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  return parse_ratings(f, path.filename().string());
}

inline std::string format_ratings(const std::vector<ExpertRating>& ratings) {
  std::ostringstream os;
  os << ratings_header() << '\n';
  for (const auto& r : ratings) {
    os << r.rater_id << '\t' << r.sample_id << '\t' << r.model_id;
    for (int s : r.scores) os << '\t' << s;
    os << '\n';
  }
  return os.str();
}

namespace detail {

struct Design {
  std::set<std::string> raters;
  // model -> samples
  std::map<std::string, std::set<std::string>> samples;
  std::map<std::tuple<std::string, std::string, std::string>, const ExpertRating*> cells;
};

inline Design check_complete(const std::vector<ExpertRating>& ratings) {
  if (ratings.empty()) throw Error(ErrorKind::kEmptyInput, "no ratings");
  Design d;
  for (const auto& r : ratings) {
    d.raters.insert(r.rater_id);
    d.samples[r.model_id].insert(r.sample_id);
    d.cells[{r.rater_id, r.model_id, r.sample_id}] = &r;
  }
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& rater : d.raters) {
    for (const auto& [model, samples] : d.samples) {
      for (const auto& sample : samples) {
        if (d.cells.count({rater, model, sample})) continue;
        if (n_missing++ < 10) {
          missing += (missing.empty() ? "" : "; ") + rater + "/" + sample + "/" + model;
        }
      }
    }
  }
  if (n_missing > 0) {
    if (n_missing > 10) missing += "; ... " + std::to_string(n_missing - 10) + " more";
    throw Error(ErrorKind::kIncompleteDesign,
                std::to_string(n_missing) + " missing rater/sample/model cells: " + missing);
  }
  return d;
}

}  // namespace detail

/// Per model and criterion: each rater's total over samples, averaged over
/// raters. Output is ordered by model id, then criterion order.
inline std::vector<CriterionAggregate> aggregate_ratings(
    const std::vector<ExpertRating>& ratings) {
  const detail::Design d = detail::check_complete(ratings);
  std::vector<CriterionAggregate> out;
  for (const auto& [model, samples] : d.samples) {
    for (std::size_t c = 0; c < kNumCriteria; ++c) {
      // Integer totals keep the result independent of row order.
      long long total = 0;
      for (const auto& rater : d.raters) {
        for (const auto& sample : samples) {
          total += d.cells.at({rater, model, sample})->scores[c];
        }
      }
      out.push_back({model, std::string(kCriteria[c]),
                     static_cast<double>(total) / static_cast<double>(d.raters.size()),
                     static_cast<double>(kMaxScore * samples.size())});
    }
  }
  return out;
}

struct InterRater {
  std::string model_id;
  std::string criterion;
  double mean_abs_diff = 0.0;
};

/// Mean over samples of |first rater - second rater|, raters in id order.
inline std::vector<InterRater> inter_rater(const std::vector<ExpertRating>& ratings) {
  std::set<std::string> raters;
  for (const auto& r : ratings) raters.insert(r.rater_id);
  if (raters.size() != 2) {
    throw Error(ErrorKind::kNeedTwoRaters,
                "found " + std::to_string(raters.size()) + " raters");
  }
  const detail::Design d = detail::check_complete(ratings);
  const std::string& r1 = *d.raters.begin();
  const std::string& r2 = *d.raters.rbegin();
  std::vector<InterRater> out;
  for (const auto& [model, samples] : d.samples) {
    for (std::size_t c = 0; c < kNumCriteria; ++c) {
      long long diff = 0;
      for (const auto& s : samples) {
        diff += std::abs(d.cells.at({r1, model, s})->scores[c] -
                         d.cells.at({r2, model, s})->scores[c]);
      }
      out.push_back({model, std::string(kCriteria[c]),
                     static_cast<double>(diff) / static_cast<double>(samples.size())});
    }
  }
  return out;
}

}  // namespace radllama
