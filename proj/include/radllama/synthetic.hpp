// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "radllama/instruction_dataset.hpp"
#include "radllama/rng.hpp"

// Random inputs for property tests. Reports follow the chest radiograph
// layout of the bundled corpus but mix in the irregularities real exports
// have: unknown headers, lower-case target headers, empty sections,
// preambles and redaction placeholders.

namespace radllama::synthetic {

inline constexpr std::array<std::string_view, 14> kFindingPhrases = {
    "The lungs are clear.",
    "Heart size is normal.",
    "No pleural effusion or pneumothorax.",
    "There is mild cardiomegaly.",
    "Small left pleural effusion is present.",
    "Patchy opacity in the right lower lobe.",
    "The lungs are hyperexpanded.",
    "Mediastinal contours are unremarkable.",
    "Degenerative changes of the thoracic spine.",
    "Endotracheal tube terminates 4 cm above the carina.",
    "No focal consolidation.",
    "Healed right rib fractures.",
    "Pulmonary vascular congestion is noted.",
    "Calcified granuloma in the left upper lobe.",
};

inline constexpr std::array<std::string_view, 10> kImpressionPhrases = {
    "No acute cardiopulmonary process.",
    "Mild cardiomegaly.",
    "Right lower lobe pneumonia.",
    "Small left pleural effusion.",
    "Hyperexpanded lungs without focal opacity.",
    "Support device in standard position.",
    "Mild pulmonary edema.",
    "Stable chest radiograph.",
    "Old granulomatous disease.",
    "No pneumothorax.",
};

inline constexpr std::array<std::string_view, 6> kOtherHeaders = {
    "INDICATION", "COMPARISON", "TECHNIQUE", "HISTORY", "EXAMINATION", "CLINICAL HISTORY"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& xs, Rng& rng) {
  return xs[rng.below(N)];
}

inline std::string phrase_run(Rng& rng, std::size_t lo, std::size_t hi,
                              bool from_findings) {
  const std::size_t n = lo + rng.below(hi - lo + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += rng.uniform() < 0.2 ? "\n" : " ";
    out += from_findings ? pick(kFindingPhrases, rng) : pick(kImpressionPhrases, rng);
  }
  return out;
}

/// A plausible report; roughly one in eight lacks findings or impression.
inline std::string random_report(Rng& rng) {
  std::string out;
  if (rng.uniform() < 0.3) out += "FINAL REPORT\n";
  std::vector<std::pair<std::string, std::string>> sections;
  const std::size_t n_other = rng.below(3);
  for (std::size_t i = 0; i < n_other; ++i) {
    sections.emplace_back(std::string(pick(kOtherHeaders, rng)),
                          rng.uniform() < 0.15 ? "" : "Routine evaluation.");
  }
  if (rng.uniform() > 0.06) {
    sections.emplace_back(rng.uniform() < 0.2 ? "Findings" : "FINDINGS",
                          phrase_run(rng, 1, 5, true));
  }
  if (rng.uniform() > 0.06) {
    std::string imp = phrase_run(rng, 1, 2, false);
    if (rng.uniform() < 0.05) imp += " Discussed with Dr. ___.";
    sections.emplace_back(rng.uniform() < 0.2 ? "impression" : "IMPRESSION", imp);
  }
  for (const auto& [h, body] : sections) {
    out += h;
    out += ':';
    out += rng.uniform() < 0.3 ? "\n" : " ";
    out += body;
    out += '\n';
    if (rng.uniform() < 0.2) out += '\n';
  }
  return out;
}

/// Arbitrary bytes forming valid UTF-8: ASCII (controls included), two-,
/// three- and four-byte sequences.
inline std::string random_utf8(Rng& rng, std::size_t max_code_points) {
  const std::size_t n = rng.below(max_code_points + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::uint32_t cp = 0;
    if (u < 0.6) {
      cp = static_cast<std::uint32_t>(rng.below(0x80));
    } else if (u < 0.8) {
      cp = 0x80 + static_cast<std::uint32_t>(rng.below(0x800 - 0x80));
    } else if (u < 0.95) {
      do {
        cp = 0x800 + static_cast<std::uint32_t>(rng.below(0x10000 - 0x800));
      } while (cp >= 0xD800 && cp <= 0xDFFF);
    } else {
      cp = 0x10000 + static_cast<std::uint32_t>(rng.below(0x110000 - 0x10000));
    }
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

/// Pairs whose text fields may contain quotes, backslashes, tabs, newlines
/// and non-ASCII, for persistence round trips.
inline InstructionPair random_pair(Rng& rng, std::size_t index) {
  auto field = [&rng] {
    std::string s = random_utf8(rng, 24);
    if (rng.uniform() < 0.3) s += "\"quoted\\n\"\n\tline";
    return s.empty() ? std::string("x") : s;
  };
  return {std::string(kDefaultInstruction), field(), field(),
          "r" + std::to_string(index) + "#" + std::to_string(rng.below(3))};
}

}  // namespace radllama::synthetic
