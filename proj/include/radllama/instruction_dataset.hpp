// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "radllama/error.hpp"
#include "radllama/report_corpus.hpp"
#include "radllama/rng.hpp"

namespace radllama {

inline constexpr std::string_view kDefaultInstruction =
    "Derive the impression from findings in the radiology report";

struct InstructionPair {
  std::string instruction;
  std::string input;   // findings
  std::string output;  // impression
  std::string source_id;

  bool operator==(const InstructionPair&) const = default;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<InstructionPair> train;
  std::vector<InstructionPair> val;
  std::vector<InstructionPair> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// One pair per report that yields a findings/impression pair and passes
/// the filters, in report order.
inline std::vector<InstructionPair> build_pairs(
    const std::vector<RadiologyReport>& reports, std::string_view instruction,
    const FilterConfig& rules = {}) {
  if (instruction.empty()) {
    throw Error(ErrorKind::kBadConfig, "instruction template is empty");
  }
  std::vector<InstructionPair> pairs;
  for (const auto& r : reports) {
    auto p = extract_pair(r);
    if (!p || !filter_pair(p->first, p->second, rules).accepted) continue;
    pairs.push_back({std::string(instruction), std::move(p->first),
                     std::move(p->second), r.id});
  }
  return pairs;
}

// Prompt scaffold, split around the input so callers can tokenize pieces.
inline constexpr std::string_view kInstructionHeader = "### Instruction:\n\n";
inline constexpr std::string_view kInputHeader = "\n\n### Input:\n\n";
inline constexpr std::string_view kResponseHeader = "\n\n### Response:";
inline constexpr std::string_view kResponseSeparator = "\n\n";

inline std::string render_prompt(const InstructionPair& pair,
                                 bool include_output) {
  std::string out;
  out.reserve(kInstructionHeader.size() + pair.instruction.size() +
              kInputHeader.size() + pair.input.size() +
              kResponseHeader.size() + kResponseSeparator.size() +
              pair.output.size());
  out += kInstructionHeader;
  out += pair.instruction;
  out += kInputHeader;
  out += pair.input;
  out += kResponseHeader;
  if (include_output) {
    out += kResponseSeparator;
    out += pair.output;
  }
  return out;
}

/// Shuffles by per-pair keys hash(seed, source_id) and partitions by
/// cumulative ratio: val and test take floor(n * ratio), train the rest.
/// Pairs sharing a source_id stay in the same split.
inline DatasetSplit split_dataset(const std::vector<InstructionPair>& pairs,
                                  SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kBadRatios,
                "ratios must be non-negative and sum to 1, got " +
                    std::to_string(ratios.train) + "," +
                    std::to_string(ratios.val) + "," +
                    std::to_string(ratios.test));
  }
  // Group by source id, then order groups by keyed hash.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    groups[pairs[i].source_id].push_back(i);
  }
  struct Keyed {
    std::uint64_t key;
    const std::string* id;
    const std::vector<std::size_t>* members;
  };
  std::vector<Keyed> order;
  order.reserve(groups.size());
  for (const auto& [id, members] : groups) {
    order.push_back({mix64(hash_bytes(id) ^ mix64(seed)), &id, &members});
  }
  std::sort(order.begin(), order.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : *a.id < *b.id;
  });

  const auto n = static_cast<double>(pairs.size());
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
  const std::size_t n_train = pairs.size() - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  for (const Keyed& g : order) {
    std::vector<InstructionPair>* dst = &split.test;
    if (split.train.size() < n_train) {
      dst = &split.train;
    } else if (split.val.size() < n_val) {
      dst = &split.val;
    }
    for (std::size_t i : *g.members) dst->push_back(pairs[i]);
  }
  return split;
}

inline std::string pair_to_json_line(const InstructionPair& p) {
  nlohmann::ordered_json j;
  j["instruction"] = p.instruction;
  j["input"] = p.input;
  j["output"] = p.output;
  j["source_id"] = p.source_id;
  return j.dump();
}

inline void write_pairs(const std::vector<InstructionPair>& pairs,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  for (const auto& p : pairs) {
    std::string line;
    try {
      line = pair_to_json_line(p);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kMalformedRecord,
                  "pair '" + p.source_id + "': " + e.what());
    }
    f << line << '\n';
  }
  if (!f) throw Error(ErrorKind::kIoError, "short write to " + path.string());
}

inline std::vector<InstructionPair> read_pairs(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  std::vector<InstructionPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (text::is_blank(line)) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::kMalformedRecord,
                   path.filename().string() + " line " +
                       std::to_string(lineno) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("not an object");
    InstructionPair p;
    for (auto [key, dst] : std::array<std::pair<const char*, std::string*>, 4>{
             {{"instruction", &p.instruction},
              {"input", &p.input},
              {"output", &p.output},
              {"source_id", &p.source_id}}}) {
      auto it = j.find(key);
      if (it == j.end()) throw fail(std::string("missing \"") + key + "\"");
      if (!it->is_string()) throw fail(std::string("\"") + key + "\" not a string");
      *dst = it->get<std::string>();
    }
    if (p.input.empty() || p.output.empty()) throw fail("empty input or output");
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace radllama
