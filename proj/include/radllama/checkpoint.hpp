// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary checkpoint layout ("ckpt-v1"), all integers u64 little-endian:
//
//   "ckpt-v1\n"
//   meta_len, meta bytes            key=value lines
//   tensor_count
//   per tensor: name_len, name, rank, dims[rank], numel f64 values
//
// Doubles are stored as their IEEE-754 bit pattern, little-endian.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "radllama/error.hpp"
#include "radllama/tensor.hpp"

namespace radllama {

inline constexpr std::string_view kCheckpointMagic = "ckpt-v1\n";

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Tensor* find(std::string_view name) const {
    for (const auto& nt : tensors) {
      if (nt.name == name) return &nt.tensor;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (buf_.size() - pos_ < n) {
      throw Error(ErrorKind::kMalformedRecord,
                  "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic);
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) meta += k + "=" + v + "\n";
  detail::put_u64(out, meta.size());
  out += meta;
  detail::put_u64(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    detail::put_u64(out, name.size());
    out += name;
    detail::put_u64(out, t.rank());
    for (std::size_t d : t.shape()) detail::put_u64(out, d);
    for (double v : t.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view buf) {
  if (buf.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(ErrorKind::kMalformedRecord, "missing ckpt-v1 header");
  }
  detail::ByteReader r(buf.substr(kCheckpointMagic.size()));
  Checkpoint ckpt;
  std::istringstream meta(r.bytes(r.u64()));
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kMalformedRecord, "meta line '" + line + "'");
    }
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint64_t count = r.u64();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.bytes(r.u64());
    const std::uint64_t rank = r.u64();
    if (rank > 8) {
      throw Error(ErrorKind::kMalformedRecord, "tensor '" + name + "' rank " +
                                                   std::to_string(rank));
    }
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(r.u64());
    ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (!r.done()) {
    throw Error(ErrorKind::kMalformedRecord, "trailing bytes after tensors");
  }
  return ckpt;
}

inline void write_checkpoint(const std::filesystem::path& path,
                             const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorKind::kIoError, "short write to " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace radllama
