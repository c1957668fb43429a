// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "radllama/error.hpp"

namespace radllama {

enum class ReportSource { kMimicCxrStyle, kOpenIStyle, kSynthetic };

inline std::string_view to_string(ReportSource s) {
  switch (s) {
    case ReportSource::kMimicCxrStyle: return "mimic-cxr-style";
    case ReportSource::kOpenIStyle: return "openi-style";
    case ReportSource::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

inline ReportSource parse_source(std::string_view name) {
  if (name == "mimic-cxr-style") return ReportSource::kMimicCxrStyle;
  if (name == "openi-style") return ReportSource::kOpenIStyle;
  if (name == "synthetic") return ReportSource::kSynthetic;
  throw Error(ErrorKind::kBadConfig, "unknown report source '" +
                                         std::string(name) + "'");
}

struct Section {
  std::string header;  // uppercase, no colon
  std::string body;    // trimmed

  bool operator==(const Section&) const = default;
};

struct RadiologyReport {
  std::string id;
  ReportSource source = ReportSource::kSynthetic;
  std::string raw_text;
  std::string preamble;  // text before the first header, trimmed
  std::vector<Section> sections;
  std::optional<std::string> findings;
  std::optional<std::string> impression;

  const Section* section(std::string_view header) const {
    for (const auto& s : sections) {
      if (s.header == header) return &s;
    }
    return nullptr;
  }
};

struct FilterConfig {
  std::size_t min_findings_tokens = 5;
  std::size_t min_impression_tokens = 2;
};

struct FilterResult {
  bool accepted = true;
  std::string rule;  // empty when accepted
};

struct CorpusStats {
  std::size_t total_reports = 0;
  std::size_t with_findings = 0;
  std::size_t with_impression = 0;
  std::size_t usable_pairs = 0;
  std::map<std::string, std::size_t> filtered_out;

  std::string to_tsv() const {
    std::ostringstream os;
    os << "rule\tcount\n";
    os << "total_reports\t" << total_reports << '\n';
    os << "with_findings\t" << with_findings << '\n';
    os << "with_impression\t" << with_impression << '\n';
    os << "usable_pairs\t" << usable_pairs << '\n';
    for (const auto& [rule, n] : filtered_out) {
      os << "filtered:" << rule << '\t' << n << '\n';
    }
    return os.str();
  }
};

namespace text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(s.substr(start));
      break;
    }
    lines.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

inline std::size_t count_whitespace_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

inline std::string to_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace text

namespace detail {

inline bool is_upper_word(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) {
    return c >= 'A' && c <= 'Z';
  });
}

inline bool is_alpha_word(std::string_view w) {
  return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
  });
}

// Target headers are recognized in any letter case.
inline bool is_target_header(std::string_view phrase) {
  const std::string up = text::to_upper(phrase);
  return up == "FINDINGS" || up == "IMPRESSION";
}

struct HeaderMatch {
  std::string header;      // normalized
  std::string_view rest;   // text after the colon on the same line
};

// Line-anchored `WORD:` or `WORD WORD:`; leading blanks allowed; the colon
// must be followed by whitespace or end of line.
inline std::optional<HeaderMatch> match_header(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  const auto colon = line.find(':', i);
  if (colon == std::string_view::npos) return std::nullopt;
  if (colon + 1 < line.size() && !text::is_space(line[colon + 1])) {
    return std::nullopt;
  }
  const std::string_view phrase = line.substr(i, colon - i);
  const auto sp = phrase.find(' ');
  std::string_view w1 = phrase.substr(0, sp);
  std::string_view w2 =
      sp == std::string_view::npos ? std::string_view{} : phrase.substr(sp + 1);
  if (w2.find(' ') != std::string_view::npos) return std::nullopt;
  if (sp != std::string_view::npos && w2.empty()) return std::nullopt;
  const bool upper = is_upper_word(w1) && (w2.empty() || is_upper_word(w2));
  const bool target =
      w2.empty() && is_alpha_word(w1) && is_target_header(w1);
  if (!upper && !target) return std::nullopt;
  return HeaderMatch{text::to_upper(phrase), line.substr(colon + 1)};
}

}  // namespace detail

/// Segments a report on header lines and pulls out FINDINGS / IMPRESSION.
/// Text before the first header is kept as the preamble; a report with no
/// headers has no sections and absent findings/impression.
inline RadiologyReport parse_report(std::string_view raw_text, std::string id,
                                    ReportSource source) {
  if (text::is_blank(raw_text)) {
    throw Error(ErrorKind::kEmptyInput, "report '" + id + "' is blank");
  }
  RadiologyReport rep;
  rep.id = std::move(id);
  rep.source = source;
  rep.raw_text = std::string(raw_text);

  std::string current_header;
  std::string body;
  bool in_section = false;
  auto flush = [&] {
    const std::string trimmed(text::trim(body));
    if (in_section) {
      rep.sections.push_back({current_header, trimmed});
    } else {
      rep.preamble = trimmed;
    }
    body.clear();
  };
  for (std::string_view line : text::split_lines(raw_text)) {
    if (auto m = detail::match_header(line)) {
      flush();
      in_section = true;
      current_header = std::move(m->header);
      body.assign(m->rest);
    } else {
      if (!body.empty() || in_section) body.push_back('\n');
      body.append(line);
    }
  }
  flush();

  for (const auto& s : rep.sections) {
    if (s.header == "FINDINGS" && !rep.findings && !s.body.empty()) {
      rep.findings = s.body;
    } else if (s.header == "IMPRESSION" && !rep.impression && !s.body.empty()) {
      rep.impression = s.body;
    }
  }
  return rep;
}

/// Both fields, when present and non-blank.
inline std::optional<std::pair<std::string, std::string>> extract_pair(
    const RadiologyReport& report) {
  if (!report.findings || !report.impression) return std::nullopt;
  if (text::is_blank(*report.findings) || text::is_blank(*report.impression)) {
    return std::nullopt;
  }
  return std::make_pair(*report.findings, *report.impression);
}

/// Three or more consecutive underscores (de-identification redaction).
inline bool has_placeholder(std::string_view s) {
  return s.find("___") != std::string_view::npos;
}

inline FilterResult filter_pair(std::string_view findings,
                                std::string_view impression,
                                const FilterConfig& rules = {}) {
  if (text::count_whitespace_tokens(findings) < rules.min_findings_tokens) {
    return {false, "min_findings_tokens"};
  }
  if (text::count_whitespace_tokens(impression) < rules.min_impression_tokens) {
    return {false, "min_impression_tokens"};
  }
  if (has_placeholder(impression)) return {false, "placeholder"};
  return {};
}

/// Why a report does or does not yield a usable pair. Empty string = usable.
inline std::string rejection_reason(const RadiologyReport& report,
                                    const FilterConfig& rules) {
  if (!report.findings) return "missing_findings";
  if (!report.impression) return "missing_impression";
  const auto pair = extract_pair(report);
  if (!pair) return "missing_impression";
  return filter_pair(pair->first, pair->second, rules).rule;
}

inline constexpr std::string_view kReportDelimiter = "=====";

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Splits on lines that are exactly "=====" (a trailing CR is tolerated).
// Returns a single segment when no delimiter line is present.
inline std::vector<std::string> split_segments(std::string_view content,
                                               bool& delimited) {
  std::vector<std::string> segs(1);
  delimited = false;
  for (std::string_view line : text::split_lines(content)) {
    std::string_view l = line;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (l == kReportDelimiter) {
      delimited = true;
      segs.emplace_back();
      continue;
    }
    if (!segs.back().empty()) segs.back().push_back('\n');
    segs.back().append(line);
  }
  return segs;
}

}  // namespace detail

/// Reads one file or every regular file of a directory (non-recursive,
/// dot-files skipped). Multi-report files yield ids "<file>#<k>". Blank
/// single-report files are counted under filtered_out["empty_report"].
inline std::pair<std::vector<RadiologyReport>, CorpusStats> ingest_corpus(
    const std::filesystem::path& path, ReportSource source,
    const FilterConfig& rules = {}) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) {
    throw Error(ErrorKind::kIoError, "no such path " + path.string());
  }
  std::vector<fs::path> files;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (!name.empty() && name.front() == '.') continue;
      files.push_back(entry.path());
    }
    if (ec) throw Error(ErrorKind::kIoError, ec.message());
  } else {
    files.push_back(path);
  }

  std::vector<RadiologyReport> reports;
  CorpusStats stats;
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    const std::string content = detail::read_file(file);
    bool delimited = false;
    auto segs = detail::split_segments(content, delimited);
    if (!delimited) {
      if (text::is_blank(content)) {
        ++stats.filtered_out["empty_report"];
        continue;
      }
      reports.push_back(parse_report(content, name, source));
      continue;
    }
    for (std::size_t k = 0; k < segs.size(); ++k) {
      if (text::is_blank(segs[k])) {
        throw Error(ErrorKind::kMalformedDelimiter,
                    name + " segment " + std::to_string(k) + " is empty");
      }
      reports.push_back(
          parse_report(segs[k], name + "#" + std::to_string(k), source));
    }
  }
  std::sort(reports.begin(), reports.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  for (const auto& r : reports) {
    ++stats.total_reports;
    if (r.findings) ++stats.with_findings;
    if (r.impression) ++stats.with_impression;
    const std::string why = rejection_reason(r, rules);
    if (why.empty()) {
      ++stats.usable_pairs;
    } else {
      ++stats.filtered_out[why];
    }
  }
  return {std::move(reports), std::move(stats)};
}

}  // namespace radllama
