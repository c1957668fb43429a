// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radllama/error.hpp"
#include "radllama/instruction_dataset.hpp"
#include "radllama/model.hpp"
#include "radllama/rng.hpp"
#include "radllama/tensor.hpp"
#include "radllama/tokenizer.hpp"

namespace radllama {

struct TrainConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  std::size_t effective_batch = 128;
  std::size_t micro_batch = 8;
  std::size_t max_steps = 300;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> grad_clip;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::filesystem::path out_dir;     // empty: write nothing

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw Error(ErrorKind::kBadConfig, "learning_rate must be > 0");
    }
    if (micro_batch == 0 || effective_batch == 0 ||
        effective_batch % micro_batch != 0) {
      throw Error(ErrorKind::kBadConfig,
                  "effective_batch " + std::to_string(effective_batch) +
                      " not divisible by micro_batch " + std::to_string(micro_batch));
    }
  }

  std::size_t accumulation_steps() const { return effective_batch / micro_batch; }
};

struct TrainReport {
  std::vector<double> losses;  // one per optimizer step
  std::filesystem::path checkpoint_path;
  std::size_t tokens_seen = 0;
  double wall_seconds = 0.0;
};

/// Next-token example: inputs[t] predicts targets[t]; only masked targets
/// contribute to the loss.
struct EncodedExample {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;
  std::size_t prompt_len = 0;  // tokens of the full sequence before the response
};

namespace detail {

struct PromptPieces {
  std::vector<int> head, input, tail;
};

inline PromptPieces encode_prompt_pieces(const InstructionPair& pair,
                                         const Vocab& vocab) {
  std::string head(kInstructionHeader);
  head += pair.instruction;
  head += kInputHeader;
  std::string tail(kResponseHeader);
  tail += kResponseSeparator;
  return {encode(head, vocab), encode(pair.input, vocab), encode(tail, vocab)};
}

inline std::vector<int> join_prompt(const PromptPieces& p, std::size_t input_keep) {
  std::vector<int> seq{Vocab::kBos};
  seq.insert(seq.end(), p.head.begin(), p.head.end());
  seq.insert(seq.end(), p.input.end() - static_cast<std::ptrdiff_t>(input_keep),
             p.input.end());
  seq.insert(seq.end(), p.tail.begin(), p.tail.end());
  return seq;
}

}  // namespace detail

/// Generation prompt [BOS] head input tail, where the response separator
/// belongs to the prompt. The input is cut from the left so that `reserve`
/// positions remain inside max_seq_len.
inline std::vector<int> encode_generation_prompt(const InstructionPair& pair,
                                                 const Vocab& vocab,
                                                 std::size_t max_seq_len,
                                                 std::size_t reserve) {
  const auto p = detail::encode_prompt_pieces(pair, vocab);
  const std::size_t fixed = 1 + p.head.size() + p.tail.size();
  if (fixed + reserve > max_seq_len) {
    throw Error(ErrorKind::kPromptTooLong,
                "prompt scaffold of " + std::to_string(fixed) + " tokens plus " +
                    std::to_string(reserve) + " reserved exceeds " +
                    std::to_string(max_seq_len));
  }
  const std::size_t keep = std::min(p.input.size(), max_seq_len - reserve - fixed);
  return detail::join_prompt(p, keep);
}

/// Full training sequence prompt + output + EOS, loss on output and EOS.
/// Overflow is absorbed by left-truncating the input; the response is
/// never cut.
inline EncodedExample encode_instruction_example(const InstructionPair& pair,
                                                 const Vocab& vocab,
                                                 std::size_t max_seq_len) {
  std::vector<int> response = encode(pair.output, vocab);
  response.push_back(Vocab::kEos);
  // The model consumes all but the last token, so the sequence may hold
  // max_seq_len + 1 ids.
  std::vector<int> seq;
  try {
    seq = encode_generation_prompt(pair, vocab, max_seq_len + 1, response.size());
  } catch (const Error&) {
    throw Error(ErrorKind::kSequenceTooLong,
                "response of '" + pair.source_id + "' does not fit max_seq_len " +
                    std::to_string(max_seq_len));
  }
  EncodedExample ex;
  ex.prompt_len = seq.size();
  seq.insert(seq.end(), response.begin(), response.end());
  ex.inputs.assign(seq.begin(), seq.end() - 1);
  ex.targets.assign(seq.begin() + 1, seq.end());
  ex.mask.assign(ex.targets.size(), 0);
  for (std::size_t t = ex.prompt_len - 1; t < ex.targets.size(); ++t) ex.mask[t] = 1;
  return ex;
}

/// Plain language-model example: [BOS] text [EOS], loss everywhere,
/// truncated on the right to fit.
inline EncodedExample encode_lm_example(std::string_view text, const Vocab& vocab,
                                        std::size_t max_seq_len) {
  std::vector<int> seq{Vocab::kBos};
  const auto body = encode(text, vocab);
  seq.insert(seq.end(), body.begin(), body.end());
  seq.push_back(Vocab::kEos);
  if (seq.size() > max_seq_len + 1) seq.resize(max_seq_len + 1);
  EncodedExample ex;
  ex.prompt_len = 1;
  ex.inputs.assign(seq.begin(), seq.end() - 1);
  ex.targets.assign(seq.begin() + 1, seq.end());
  ex.mask.assign(ex.targets.size(), 1);
  return ex;
}

/// Mean cross-entropy over response positions only.
inline Tensor masked_loss(const Tensor& logits, std::span<const int> targets,
                          std::span<const std::uint8_t> response_mask) {
  return masked_cross_entropy(logits, targets, response_mask);
}

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

/// One decoupled-decay Adam update. Decay p *= (1 - lr * wd) is applied
/// before the moment update; moments are bias-corrected.
inline void adamw_step(std::vector<Tensor>& params,
                       const std::vector<std::vector<double>>& grads,
                       AdamWState& state, const TrainConfig& tc) {
  if (grads.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch,
                std::to_string(grads.size()) + " grads for " +
                    std::to_string(params.size()) + " params");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(tc.beta1, t);
  const double bc2 = 1.0 - std::pow(tc.beta2, t);
  const double decay = 1.0 - tc.learning_rate * tc.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].mutable_data();
    const auto& g = grads[k];
    if (g.size() != p.size()) {
      throw Error(ErrorKind::kShapeMismatch, "grad " + std::to_string(k) + " length");
    }
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= decay;
      m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * g[i];
      v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_eps);
    }
  }
}

using StepCallback = std::function<void(std::size_t step, double loss, const Model&)>;

namespace detail {

inline void write_loss_tsv(const std::filesystem::path& path,
                           const std::vector<double>& losses) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  f << "step\tloss\n";
  f.precision(10);
  for (std::size_t i = 0; i < losses.size(); ++i) f << i << '\t' << losses[i] << '\n';
}

}  // namespace detail

/// Optimizes every trainable parameter of `model` on `examples`.
///
/// Each step draws effective_batch examples by walking per-epoch seeded
/// permutations, runs accumulation_steps() micro-batches of micro_batch
/// sequences, and applies one AdamW update. The step loss is the mean of
/// per-sequence masked losses; gradients sum in a fixed sequence order.
inline TrainReport run_training(Model& model, const std::vector<EncodedExample>& examples,
                                const TrainConfig& tc, const StepCallback& on_step = {}) {
  tc.validate();
  if (examples.empty()) throw Error(ErrorKind::kEmptyDataset, "no training examples");
  const auto t0 = std::chrono::steady_clock::now();
  const Rng root(tc.seed);
  const Rng order_rng = root.split("order");
  const Rng dropout_rng = root.split("dropout");
  const std::size_t n = examples.size();

  std::vector<std::size_t> perm;
  std::uint64_t perm_epoch = ~std::uint64_t{0};
  auto sample_at = [&](std::uint64_t g) {
    const std::uint64_t epoch = g / n;
    if (epoch != perm_epoch) {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng r = order_rng.split(epoch);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[r.below(i + 1)]);
      perm_epoch = epoch;
    }
    return perm[g % n];
  };

  // Only masked positions reach the loss, so only they get logits.
  struct LossRows {
    std::vector<int> rows, targets;
    std::vector<std::uint8_t> ones;
  };
  std::vector<LossRows> loss_rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    const EncodedExample& ex = examples[i];
    if (ex.targets.size() != ex.inputs.size() || ex.mask.size() != ex.inputs.size()) {
      throw Error(ErrorKind::kShapeMismatch, "example " + std::to_string(i) +
                                                 ": inputs/targets/mask lengths differ");
    }
    for (std::size_t t = 0; t < ex.mask.size(); ++t) {
      if (!ex.mask[t]) continue;
      loss_rows[i].rows.push_back(static_cast<int>(t));
      loss_rows[i].targets.push_back(ex.targets[t]);
    }
    if (loss_rows[i].rows.empty()) {
      throw Error(ErrorKind::kEmptyMask, "example " + std::to_string(i) + " has no loss positions");
    }
    loss_rows[i].ones.assign(loss_rows[i].rows.size(), 1);
  }

  std::vector<Tensor> params = model.trainable_parameters();
  AdamWState state;
  TrainReport report;
  const double inv_batch = 1.0 / static_cast<double>(tc.effective_batch);

  for (std::size_t step = 0; step < tc.max_steps; ++step) {
    for (Tensor& p : params) p.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t mb = 0; mb < tc.accumulation_steps(); ++mb) {
      Tensor micro_loss;
      for (std::size_t j = 0; j < tc.micro_batch; ++j) {
        const std::uint64_t g =
            static_cast<std::uint64_t>(step) * tc.effective_batch + mb * tc.micro_batch + j;
        const std::size_t idx = sample_at(g);
        const EncodedExample& ex = examples[idx];
        const LossRows& lr = loss_rows[idx];
        const Tensor logits = model.forward_rows(ex.inputs, lr.rows, true, dropout_rng.split(g));
        const Tensor loss = masked_loss(logits, lr.targets, lr.ones);
        loss_sum += loss.item();
        report.tokens_seen += ex.inputs.size();
        micro_loss = micro_loss.defined() ? add(micro_loss, loss) : loss;
      }
      scale(micro_loss, inv_batch).backward();
    }

    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    double sq = 0.0;
    for (const Tensor& p : params) {
      if (p.has_grad()) {
        grads.emplace_back(p.grad().begin(), p.grad().end());
      } else {
        grads.emplace_back(p.numel(), 0.0);
      }
      for (double v : grads.back()) sq += v * v;
    }
    if (tc.grad_clip && std::sqrt(sq) > *tc.grad_clip) {
      const double f = *tc.grad_clip / std::sqrt(sq);
      for (auto& gv : grads) {
        for (double& v : gv) v *= f;
      }
    }
    adamw_step(params, grads, state, tc);

    const double step_loss = loss_sum * inv_batch;
    if (!std::isfinite(step_loss)) {
      throw Error(ErrorKind::kBadConfig,
                  "non-finite loss at step " + std::to_string(step));
    }
    report.losses.push_back(step_loss);
    if (on_step) on_step(step, step_loss, model);
  }
  for (Tensor& p : params) p.zero_grad();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Instruction-tunes the adapters of `lora_model` on split.train. Writes
/// adapter checkpoints and loss.tsv when tc.out_dir is set.
inline TrainReport train(Model& lora_model, const DatasetSplit& split,
                         const Vocab& vocab, const TrainConfig& tc,
                         const StepCallback& on_step = {}) {
  if (split.train.empty()) throw Error(ErrorKind::kEmptyDataset, "train split is empty");
  if (!lora_model.has_adapters()) {
    throw Error(ErrorKind::kBadConfig, "train() expects a model with adapters");
  }
  std::vector<EncodedExample> examples;
  for (const auto& p : split.train) {
    examples.push_back(
        encode_instruction_example(p, vocab, lora_model.config().max_seq_len));
  }
  const bool write = !tc.out_dir.empty();
  auto cb = [&](std::size_t step, double loss, const Model& m) {
    if (write && tc.checkpoint_every > 0 && (step + 1) % tc.checkpoint_every == 0) {
      write_checkpoint(tc.out_dir / ("adapter-step" + std::to_string(step + 1) + ".ckpt"),
                       m.adapter_checkpoint());
    }
    if (on_step) on_step(step, loss, m);
  };
  TrainReport report = run_training(lora_model, examples, tc, cb);
  if (write) {
    report.checkpoint_path = tc.out_dir / "adapter.ckpt";
    write_checkpoint(report.checkpoint_path, lora_model.adapter_checkpoint());
    detail::write_loss_tsv(tc.out_dir / "loss.tsv", report.losses);
  }
  return report;
}

/// Full-parameter language modelling of a base model on plain texts.
inline TrainReport pretrain_base(Model& model, const std::vector<std::string>& texts,
                                 const Vocab& vocab, const TrainConfig& tc,
                                 const StepCallback& on_step = {}) {
  if (model.has_adapters()) {
    throw Error(ErrorKind::kBadConfig, "pretrain_base() expects a plain model");
  }
  std::vector<EncodedExample> examples;
  for (const auto& t : texts) {
    examples.push_back(encode_lm_example(t, vocab, model.config().max_seq_len));
  }
  TrainReport report = run_training(model, examples, tc, on_step);
  if (!tc.out_dir.empty()) {
    report.checkpoint_path = tc.out_dir / "base.ckpt";
    write_checkpoint(report.checkpoint_path, model.to_checkpoint());
    detail::write_loss_tsv(tc.out_dir / "pretrain_loss.tsv", report.losses);
  }
  return report;
}

}  // namespace radllama
