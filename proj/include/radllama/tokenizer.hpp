// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "radllama/error.hpp"

namespace radllama {

/// Byte-level pair-merge vocabulary. Ids 0-255 are raw bytes, 256-258 are
/// the specials, and merge k creates id 259 + k.
class Vocab {
 public:
  static constexpr int kBos = 256;
  static constexpr int kEos = 257;
  static constexpr int kPad = 258;
  static constexpr int kBaseSize = 259;

  using Merge = std::pair<int, int>;

  Vocab() { rebuild(); }

  explicit Vocab(std::vector<Merge> merges) : merges_(std::move(merges)) {
    for (std::size_t k = 0; k < merges_.size(); ++k) {
      const int id = kBaseSize + static_cast<int>(k);
      const auto [a, b] = merges_[k];
      if (a < 0 || b < 0 || a >= id || b >= id || is_special(a) ||
          is_special(b)) {
        throw Error(ErrorKind::kInvalidId,
                    "merge " + std::to_string(k) + " references " +
                        std::to_string(a) + "," + std::to_string(b));
      }
    }
    rebuild();
  }

  std::size_t size() const { return kBaseSize + merges_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }

  static constexpr bool is_special(int id) {
    return id == kBos || id == kEos || id == kPad;
  }

  /// Raw bytes a token expands to; empty for specials.
  const std::string& bytes(int id) const { return bytes_.at(static_cast<std::size_t>(id)); }

  bool operator==(const Vocab& o) const { return merges_ == o.merges_; }

 private:
  void rebuild() {
    bytes_.assign(size(), std::string());
    for (int b = 0; b < 256; ++b) bytes_[b] = std::string(1, static_cast<char>(b));
    for (std::size_t k = 0; k < merges_.size(); ++k) {
      bytes_[kBaseSize + k] = bytes_[merges_[k].first] + bytes_[merges_[k].second];
    }
  }

  std::vector<Merge> merges_;
  std::vector<std::string> bytes_;
};

namespace detail {

inline std::vector<int> to_byte_ids(std::string_view s) {
  std::vector<int> ids;
  ids.reserve(s.size());
  for (unsigned char c : s) ids.push_back(c);
  return ids;
}

// Replaces non-overlapping occurrences of (a, b), scanning left to right.
inline void apply_merge(std::vector<int>& ids, int a, int b, int id) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < ids.size();) {
    if (r + 1 < ids.size() && ids[r] == a && ids[r + 1] == b) {
      ids[w++] = id;
      r += 2;
    } else {
      ids[w++] = ids[r++];
    }
  }
  ids.resize(w);
}

inline std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace detail

/// Greedy pair-merge training: merge the most frequent adjacent pair (ties
/// to the lexicographically smallest pair) until `target_size` ids exist or
/// no pair occurs at least twice.
inline Vocab build_vocab(const std::vector<std::string>& corpus,
                         std::size_t target_size) {
  if (target_size < static_cast<std::size_t>(Vocab::kBaseSize)) {
    throw Error(ErrorKind::kBadSize, "target size " + std::to_string(target_size) +
                                         " below " +
                                         std::to_string(Vocab::kBaseSize));
  }
  std::vector<std::vector<int>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& s : corpus) seqs.push_back(detail::to_byte_ids(s));

  std::vector<Vocab::Merge> merges;
  std::unordered_map<std::uint64_t, std::size_t> counts;
  while (Vocab::kBaseSize + merges.size() < target_size) {
    counts.clear();
    for (const auto& seq : seqs) {
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        ++counts[detail::pair_key(seq[i], seq[i + 1])];
      }
    }
    std::uint64_t best_key = 0;
    std::size_t best = 0;
    for (const auto& [key, n] : counts) {
      if (n > best || (n == best && key < best_key)) {
        best = n;
        best_key = key;
      }
    }
    if (best < 2) break;
    const int a = static_cast<int>(best_key >> 32);
    const int b = static_cast<int>(best_key & 0xFFFFFFFFu);
    const int id = Vocab::kBaseSize + static_cast<int>(merges.size());
    merges.emplace_back(a, b);
    for (auto& seq : seqs) detail::apply_merge(seq, a, b, id);
  }
  return Vocab(std::move(merges));
}

/// UTF-8 bytes, then every merge in vocabulary order.
inline std::vector<int> encode(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids = detail::to_byte_ids(text);
  const auto& merges = vocab.merges();
  for (std::size_t k = 0; k < merges.size() && ids.size() > 1; ++k) {
    detail::apply_merge(ids, merges[k].first, merges[k].second,
                        Vocab::kBaseSize + static_cast<int>(k));
  }
  return ids;
}

inline std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw Error(ErrorKind::kInvalidId, "token " + std::to_string(id) +
                                             " outside vocab of " +
                                             std::to_string(vocab.size()));
    }
    out += vocab.bytes(id);
  }
  return out;
}

// Vocab file: "bpe-v1 <size>" then one "<id> <id> <new_id>" line per merge.

inline void write_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  f << "bpe-v1 " << vocab.size() << '\n';
  for (std::size_t k = 0; k < vocab.merges().size(); ++k) {
    const auto [a, b] = vocab.merges()[k];
    f << a << ' ' << b << ' ' << Vocab::kBaseSize + k << '\n';
  }
  if (!f) throw Error(ErrorKind::kIoError, "short write to " + path.string());
}

inline Vocab read_vocab(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line)) {
    throw Error(ErrorKind::kMalformedRecord, "empty vocab file");
  }
  std::istringstream head(line);
  std::string magic;
  std::size_t size = 0;
  if (!(head >> magic >> size) || magic != "bpe-v1") {
    throw Error(ErrorKind::kMalformedRecord, "vocab line 1: bad header");
  }
  std::vector<Vocab::Merge> merges;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int a = 0, b = 0, id = 0;
    if (!(ls >> a >> b >> id) ||
        id != Vocab::kBaseSize + static_cast<int>(merges.size())) {
      throw Error(ErrorKind::kMalformedRecord,
                  "vocab line " + std::to_string(lineno));
    }
    merges.emplace_back(a, b);
  }
  Vocab v(std::move(merges));
  if (v.size() != size) {
    throw Error(ErrorKind::kMalformedRecord,
                "vocab header says " + std::to_string(size) + " ids, found " +
                    std::to_string(v.size()));
  }
  return v;
}

}  // namespace radllama
