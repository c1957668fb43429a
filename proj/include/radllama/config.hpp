// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "radllama/error.hpp"
#include "radllama/model.hpp"
#include "radllama/report_corpus.hpp"
#include "radllama/trainer.hpp"

namespace radllama {

/// Everything one pipeline run needs. The adapter stage uses `train`; the
/// optional base stage that precedes it uses `pretrain`.
struct PipelineConfig {
  ModelConfig model;
  LoraConfig lora;
  TrainConfig train;
  TrainConfig pretrain;
  std::size_t vocab_target = 512;
  std::uint64_t seed = 0;

  PipelineConfig() {
    model.max_seq_len = 128;
    pretrain.learning_rate = 1e-2;
    pretrain.effective_batch = 16;
    pretrain.micro_batch = 16;
    pretrain.max_steps = 250;
    train.max_steps = 600;
  }
};

namespace detail {

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno != 0 || v.front() == '-') {
    throw Error(ErrorKind::kBadConfig, key + ": not a non-negative integer: '" + v + "'");
  }
  return static_cast<std::size_t>(x);
}

inline double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) {
    throw Error(ErrorKind::kBadConfig, key + ": not a number: '" + v + "'");
  }
  return x;
}

inline std::vector<std::string> parse_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = std::min(v.find(',', start), v.size());
    std::string item(text::trim(v.substr(start, comma - start)));
    if (!item.empty()) out.push_back(std::move(item));
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Applies one key=value setting. Unknown keys are an error so typos in a
/// config file never pass silently.
inline void apply_setting(PipelineConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_count;
  using detail::parse_real;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter, std::less<>> table = {
      {"seed", [&](auto& s) { c.seed = parse_count(key, s); }},
      {"vocab_size", [&](auto& s) { c.vocab_target = parse_count(key, s); }},
      {"d_model", [&](auto& s) { c.model.d_model = parse_count(key, s); }},
      {"n_heads", [&](auto& s) { c.model.n_heads = parse_count(key, s); }},
      {"n_layers", [&](auto& s) { c.model.n_layers = parse_count(key, s); }},
      {"d_ff", [&](auto& s) { c.model.d_ff = parse_count(key, s); }},
      {"max_seq_len", [&](auto& s) { c.model.max_seq_len = parse_count(key, s); }},
      {"rope_base", [&](auto& s) { c.model.rope_base = parse_real(key, s); }},
      {"init_std", [&](auto& s) { c.model.init_std = parse_real(key, s); }},
      {"lora_r", [&](auto& s) { c.lora.r = parse_count(key, s); }},
      {"lora_alpha", [&](auto& s) { c.lora.alpha = parse_real(key, s); }},
      {"lora_dropout", [&](auto& s) { c.lora.dropout = parse_real(key, s); }},
      {"lora_targets", [&](auto& s) { c.lora.targets = detail::parse_list(s); }},
      {"learning_rate", [&](auto& s) { c.train.learning_rate = parse_real(key, s); }},
      {"weight_decay", [&](auto& s) { c.train.weight_decay = parse_real(key, s); }},
      {"batch_size", [&](auto& s) { c.train.effective_batch = parse_count(key, s); }},
      {"micro_batch", [&](auto& s) { c.train.micro_batch = parse_count(key, s); }},
      {"max_steps", [&](auto& s) { c.train.max_steps = parse_count(key, s); }},
      {"beta1", [&](auto& s) { c.train.beta1 = parse_real(key, s); }},
      {"beta2", [&](auto& s) { c.train.beta2 = parse_real(key, s); }},
      {"adam_eps", [&](auto& s) { c.train.adam_eps = parse_real(key, s); }},
      {"grad_clip", [&](auto& s) { c.train.grad_clip = parse_real(key, s); }},
      {"checkpoint_every",
       [&](auto& s) { c.train.checkpoint_every = parse_count(key, s); }},
      {"pretrain_steps", [&](auto& s) { c.pretrain.max_steps = parse_count(key, s); }},
      {"pretrain_learning_rate",
       [&](auto& s) { c.pretrain.learning_rate = parse_real(key, s); }},
      {"pretrain_batch_size", [&](auto& s) {
         c.pretrain.effective_batch = parse_count(key, s);
         c.pretrain.micro_batch = c.pretrain.effective_batch;
       }},
  };
  auto it = table.find(key);
  if (it == table.end()) throw Error(ErrorKind::kBadConfig, "unknown key '" + key + "'");
  it->second(v);
}

/// Flat key=value lines; '#' starts a comment line.
inline PipelineConfig parse_config(std::istream& in, const std::string& name = "config",
                                   PipelineConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kBadConfig,
                  name + " line " + std::to_string(lineno) + ": expected key=value");
    }
    try {
      apply_setting(base, std::string(text::trim(t.substr(0, eq))),
                    std::string(text::trim(t.substr(eq + 1))));
    } catch (const Error& e) {
      throw Error(ErrorKind::kBadConfig,
                  name + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  base.model.validate();
  base.lora.validate();
  base.train.validate();
  base.pretrain.validate();
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIoError, "cannot read " + path.string());
  return parse_config(f, path.filename().string());
}

}  // namespace radllama
