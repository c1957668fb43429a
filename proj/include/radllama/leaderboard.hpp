// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "radllama/error.hpp"
#include "radllama/report_corpus.hpp"
#include "radllama/rouge.hpp"
#include "radllama/tsv.hpp"

namespace radllama {

enum class Provenance { kComputed, kFixture };

inline std::string_view to_string(Provenance p) {
  return p == Provenance::kComputed ? "computed" : "fixture";
}

struct LeaderboardRow {
  std::string model_id;
  std::vector<std::optional<double>> values;  // aligned with Leaderboard::columns
  Provenance provenance = Provenance::kComputed;
};

struct Leaderboard {
  std::vector<std::string> columns;  // e.g. "MIMIC-CXR/rouge-1"
  std::vector<LeaderboardRow> rows;
};

enum class TableFormat { kText, kTsv, kMarkdown };

inline TableFormat parse_format(std::string_view s) {
  if (s == "text") return TableFormat::kText;
  if (s == "tsv") return TableFormat::kTsv;
  if (s == "markdown") return TableFormat::kMarkdown;
  throw Error(ErrorKind::kBadConfig, "unknown format '" + std::string(s) + "'");
}

inline constexpr std::string_view kFixtureVersion = "#fixture-v1";

/// Reads a versioned score table. Lines starting with '#' after the version
/// line are comments; the first other line is the header.
inline Leaderboard parse_fixture(std::istream& in, const std::string& name = "fixture") {
  std::string line;
  if (!std::getline(in, line) || detail::chomp_cr(line) != kFixtureVersion) {
    throw Error(ErrorKind::kMalformedRow,
                name + " row 1: expected '" + std::string(kFixtureVersion) + "'");
  }
  Leaderboard lb;
  bool have_header = false;
  std::set<std::string> ids;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view body = detail::chomp_cr(line);
    if (text::is_blank(body) || body.front() == '#') continue;
    const std::string where = name + " row " + std::to_string(row);
    auto cols = detail::split_tabs(body);
    if (!have_header) {
      if (cols.size() < 2 || cols[0] != "model_id") {
        throw Error(ErrorKind::kMalformedRow, where + ": header must start with model_id");
      }
      lb.columns.assign(cols.begin() + 1, cols.end());
      have_header = true;
      continue;
    }
    if (cols.size() != lb.columns.size() + 1) {
      throw Error(ErrorKind::kMalformedRow, where + ": column count mismatch");
    }
    if (!ids.insert(cols[0]).second) {
      throw Error(ErrorKind::kDuplicateKey, where + ": repeated model " + cols[0]);
    }
    LeaderboardRow r{cols[0], {}, Provenance::kFixture};
    for (std::size_t c = 1; c < cols.size(); ++c) {
      if (cols[c].empty() || cols[c] == "-") {
        r.values.emplace_back();
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cols[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cols[c].size()) {
        throw Error(ErrorKind::kMalformedRow, where + ": bad number '" + cols[c] + "'");
      }
      if (v < 0.0 || v > 1.0) {
        throw Error(ErrorKind::kOutOfRange, where + ": " + cols[c] + " outside [0,1]");
      }
      r.values.emplace_back(v);
    }
    lb.rows.push_back(std::move(r));
  }
  if (!have_header) throw Error(ErrorKind::kMalformedRow, name + ": no header");
  return lb;
}

inline Leaderboard load_fixture(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  return parse_fixture(f, path.filename().string());
}

inline std::size_t column_index(const Leaderboard& lb, std::string_view column) {
  for (std::size_t i = 0; i < lb.columns.size(); ++i) {
    if (lb.columns[i] == column) return i;
  }
  throw Error(ErrorKind::kBadConfig, "no column '" + std::string(column) + "'");
}

/// Descending by `column`; missing values sort last; ties by model id.
inline void sort_rows(Leaderboard& lb, std::size_t column) {
  std::stable_sort(lb.rows.begin(), lb.rows.end(),
                   [column](const LeaderboardRow& a, const LeaderboardRow& b) {
                     const auto& va = a.values[column];
                     const auto& vb = b.values[column];
                     if (va.has_value() != vb.has_value()) return va.has_value();
                     if (va && *va != *vb) return *va > *vb;
                     return a.model_id < b.model_id;
                   });
}

/// Row indices holding the maximum of each column (all ties included).
inline std::vector<std::set<std::size_t>> column_leaders(const Leaderboard& lb) {
  std::vector<std::set<std::size_t>> best(lb.columns.size());
  for (std::size_t c = 0; c < lb.columns.size(); ++c) {
    std::optional<double> top;
    for (const auto& r : lb.rows) {
      if (r.values[c] && (!top || *r.values[c] > *top)) top = r.values[c];
    }
    for (std::size_t i = 0; top && i < lb.rows.size(); ++i) {
      if (lb.rows[i].values[c] == top) best[c].insert(i);
    }
  }
  return best;
}

inline std::string format_value(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline std::string render_leaderboard(const Leaderboard& lb, TableFormat fmt) {
  std::vector<std::string> head{"model_id"};
  head.insert(head.end(), lb.columns.begin(), lb.columns.end());
  head.push_back("provenance");
  std::vector<std::vector<std::string>> cells;
  const auto best = column_leaders(lb);
  for (std::size_t i = 0; i < lb.rows.size(); ++i) {
    const auto& r = lb.rows[i];
    std::vector<std::string> line{r.model_id};
    for (std::size_t c = 0; c < lb.columns.size(); ++c) {
      std::string v = format_value(r.values[c]);
      if (fmt == TableFormat::kMarkdown && best[c].count(i)) v = "**" + v + "**";
      line.push_back(std::move(v));
    }
    line.emplace_back(to_string(r.provenance));
    cells.push_back(std::move(line));
  }

  std::ostringstream os;
  auto join = [&os](const std::vector<std::string>& xs, std::string_view sep,
                    std::string_view lead, std::string_view trail) {
    os << lead;
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? sep : "") << xs[i];
    os << trail << '\n';
  };
  switch (fmt) {
    case TableFormat::kTsv:
      join(head, "\t", "", "");
      for (const auto& l : cells) join(l, "\t", "", "");
      break;
    case TableFormat::kMarkdown: {
      join(head, " | ", "| ", " |");
      std::vector<std::string> rule(head.size(), "---");
      for (std::size_t c = 1; c + 1 < rule.size(); ++c) rule[c] = "---:";
      join(rule, " | ", "| ", " |");
      for (const auto& l : cells) join(l, " | ", "| ", " |");
      break;
    }
    case TableFormat::kText: {
      std::vector<std::size_t> width(head.size());
      for (std::size_t c = 0; c < head.size(); ++c) {
        width[c] = head[c].size();
        for (const auto& l : cells) width[c] = std::max(width[c], l[c].size());
      }
      auto pad = [&](const std::vector<std::string>& l) {
        std::vector<std::string> out;
        for (std::size_t c = 0; c < l.size(); ++c) {
          std::string s = l[c];
          const std::string fill(width[c] - s.size(), ' ');
          // Model ids and provenance flush left, numbers flush right.
          out.push_back(c == 0 || c + 1 == l.size() ? s + fill : fill + s);
        }
        return out;
      };
      join(pad(head), "  ", "", "");
      for (const auto& l : cells) join(pad(l), "  ", "", "");
      break;
    }
  }
  return os.str();
}

// Prediction and reference files: JSON Lines with "source_id" and "text".

using TextById = std::map<std::string, std::string>;

inline TextById read_texts(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  TextById out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (text::is_blank(line)) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kMalformedRecord, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("source_id") || !j.contains("text") ||
        !j["source_id"].is_string() || !j["text"].is_string()) {
      throw Error(ErrorKind::kMalformedRecord,
                  where + ": need string fields source_id and text");
    }
    const std::string id = j["source_id"].get<std::string>();
    if (!out.emplace(id, j["text"].get<std::string>()).second) {
      throw Error(ErrorKind::kDuplicateKey, where + ": repeated source_id " + id);
    }
  }
  return out;
}

inline void write_texts(const std::vector<std::pair<std::string, std::string>>& rows,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  for (const auto& [id, t] : rows) {
    nlohmann::ordered_json j;
    j["source_id"] = id;
    j["text"] = t;
    f << j.dump() << '\n';
  }
  if (!f) throw Error(ErrorKind::kIoError, "short write to " + path.string());
}

/// Candidate/reference pairs in id order; any id present on one side only
/// is an error and every such id is named.
inline std::vector<std::pair<std::string, std::string>> align_texts(
    const TextById& predictions, const TextById& references,
    std::vector<std::string>* ids = nullptr) {
  std::vector<std::string> only_pred, only_ref;
  for (const auto& [id, _] : predictions) {
    if (!references.count(id)) only_pred.push_back(id);
  }
  for (const auto& [id, _] : references) {
    if (!predictions.count(id)) only_ref.push_back(id);
  }
  if (!only_pred.empty() || !only_ref.empty()) {
    std::string msg;
    auto list = [&msg](std::string_view label, const std::vector<std::string>& xs) {
      if (xs.empty()) return;
      if (!msg.empty()) msg += "; ";
      msg += std::string(label) + ":";
      for (const auto& x : xs) msg += " " + x;
    };
    list("missing from references", only_pred);
    list("missing from predictions", only_ref);
    throw Error(ErrorKind::kIdMismatch, msg);
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& [id, cand] : predictions) {
    pairs.emplace_back(cand, references.at(id));
    if (ids) ids->push_back(id);
  }
  return pairs;
}

struct RougeRun {
  RougeTriple corpus;
  std::vector<std::string> ids;
  std::vector<RougeTriple> per_sample;
};

inline RougeRun eval_rouge_run(const TextById& predictions, const TextById& references) {
  RougeRun run;
  const auto pairs = align_texts(predictions, references, &run.ids);
  run.corpus = corpus_rouge(pairs);
  for (const auto& [c, r] : pairs) run.per_sample.push_back(score_pair(c, r));
  return run;
}

inline std::string per_sample_tsv(const RougeRun& run) {
  std::ostringstream os;
  os << "source_id\trouge-1\trouge-2\trouge-L\n";
  for (std::size_t i = 0; i < run.ids.size(); ++i) {
    const auto& s = run.per_sample[i];
    os << run.ids[i] << '\t' << format_value(s.rouge1.f1) << '\t'
       << format_value(s.rouge2.f1) << '\t' << format_value(s.rougeL.f1) << '\n';
  }
  return os.str();
}

/// One computed row for a dataset label, F1 values.
inline Leaderboard computed_board(const std::string& model_id, const std::string& label,
                                  const RougeTriple& t) {
  Leaderboard lb;
  lb.columns = {label + "/rouge-1", label + "/rouge-2", label + "/rouge-L"};
  lb.rows.push_back({model_id, {t.rouge1.f1, t.rouge2.f1, t.rougeL.f1},
                     Provenance::kComputed});
  return lb;
}

}  // namespace radllama
