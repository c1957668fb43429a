// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "radllama/config.hpp"
#include "radllama/instruction_dataset.hpp"
#include "radllama/model.hpp"
#include "radllama/tokenizer.hpp"
#include "radllama/trainer.hpp"

// End-to-end run: vocabulary, base language model, adapter tuning,
// generation.
//
// A desk-scale decoder initialized at random cannot be steered by rank-8
// adapters alone: with a frozen random head its logits stay within a
// fraction of a nat of uniform. The pipeline therefore first trains the
// base on report-style text drawn from the train split, standing in for
// the pretrained checkpoint a real run starts from, and then tunes only the
// adapters on the instruction pairs.

namespace radllama {

inline constexpr std::string_view kBaseInstruction = "Complete the radiology report";

/// Base-stage texts from the train pairs: each report as it would appear
/// in a radiology system, and the same report as a completion task in the
/// instruction scaffold. The completion task keeps the section headers
/// inside input and response, so its prompts differ from the tuning task.
inline std::vector<std::string> base_corpus(const std::vector<InstructionPair>& train) {
  std::vector<std::string> texts;
  texts.reserve(2 * train.size());
  for (const auto& p : train) {
    texts.push_back("FINDINGS: " + p.input + "\nIMPRESSION: " + p.output);
    InstructionPair completion{std::string(kBaseInstruction), "FINDINGS: " + p.input,
                               "IMPRESSION: " + p.output, p.source_id};
    texts.push_back(render_prompt(completion, true));
  }
  return texts;
}

/// Merge-training corpus: every text either stage will encode.
inline Vocab build_pipeline_vocab(const std::vector<InstructionPair>& train,
                                  std::size_t target_size) {
  std::vector<std::string> corpus = base_corpus(train);
  for (const auto& p : train) corpus.push_back(render_prompt(p, true));
  return build_vocab(corpus, target_size);
}

struct PipelineRun {
  Vocab vocab;
  Model base;
  Model tuned;
  TrainReport pretrain_report;
  TrainReport train_report;
};

/// Vocabulary, base stage (skipped when pretrain.max_steps is 0) and
/// adapter tuning. With `out_dir` set, writes vocab.bpe, base.ckpt,
/// pretrain_loss.tsv, adapter.ckpt and loss.tsv there.
inline PipelineRun run_pipeline(const DatasetSplit& split, const PipelineConfig& cfg,
                                const std::filesystem::path& out_dir = {},
                                const StepCallback& on_pretrain = {},
                                const StepCallback& on_train = {}) {
  if (split.train.empty()) throw Error(ErrorKind::kEmptyDataset, "train split is empty");
  const Rng root(cfg.seed);
  auto stage_seed = [&root](std::string_view stage) { return root.split(stage).next_u64(); };
  PipelineRun run;
  run.vocab = build_pipeline_vocab(split.train, cfg.vocab_target);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_vocab(run.vocab, out_dir / "vocab.bpe");
  }

  ModelConfig mc = cfg.model;
  mc.vocab_size = run.vocab.size();
  run.base = Model::init(mc, root.split("init"));

  TrainConfig pc = cfg.pretrain;
  pc.seed = stage_seed("pretrain");
  pc.out_dir = out_dir;
  if (pc.max_steps > 0) {
    run.pretrain_report = pretrain_base(run.base, base_corpus(split.train), run.vocab, pc,
                                        on_pretrain);
  } else if (!out_dir.empty()) {
    write_checkpoint(out_dir / "base.ckpt", run.base.to_checkpoint());
  }

  run.tuned = attach_lora(run.base, cfg.lora, root.split("lora"));
  TrainConfig tc = cfg.train;
  tc.seed = stage_seed("train");
  tc.out_dir = out_dir;
  run.train_report = train(run.tuned, split, run.vocab, tc, on_train);
  return run;
}

/// Greedy impressions for `pairs`, as (source_id, text) in input order.
inline std::vector<std::pair<std::string, std::string>> generate_impressions(
    const Model& model, const Vocab& vocab, const std::vector<InstructionPair>& pairs,
    std::size_t max_new = 64) {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(pairs.size());
  const std::size_t max_len = model.config().max_seq_len;
  // Room kept for the answer when a long input has to be cut.
  const std::size_t reserve = std::min(max_new, max_len / 4);
  for (const auto& p : pairs) {
    const auto prompt = encode_generation_prompt(p, vocab, max_len, reserve);
    GenerateParams gp;
    gp.max_new = max_new;
    out.emplace_back(p.source_id, decode(generate(model, prompt, gp), vocab));
  }
  return out;
}

inline std::size_t exact_matches(const std::vector<std::pair<std::string, std::string>>& preds,
                                 const std::vector<InstructionPair>& pairs) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size() && i < pairs.size(); ++i) {
    n += preds[i].second == pairs[i].output ? 1 : 0;
  }
  return n;
}

/// (source_id, output) references for pairs, aligned with generate_impressions.
inline std::vector<std::pair<std::string, std::string>> references_of(
    const std::vector<InstructionPair>& pairs) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : pairs) out.emplace_back(p.source_id, p.output);
  return out;
}

}  // namespace radllama
