// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "radllama/trainer.hpp"
#include "support.hpp"

namespace radllama {
namespace {

ModelConfig small_config(std::size_t max_seq_len = 160) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 32;
  c.max_seq_len = max_seq_len;
  return c;
}

InstructionPair pair_of(const std::string& in, const std::string& out, const std::string& id) {
  return {std::string(kDefaultInstruction), in, out, id};
}

DatasetSplit four_pairs() {
  DatasetSplit s;
  s.train = {pair_of("Lungs clear.", "Normal.", "a"), pair_of("Small effusion.", "Effusion.", "b"),
             pair_of("Heart enlarged.", "Cardiomegaly.", "c"),
             pair_of("Rib fracture.", "Fracture.", "d")};
  return s;
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kEmptyInput;
}

TEST(MaskedLoss, UniformLogitsGiveLogVocab) {
  const Tensor logits = Tensor::zeros({5, 7});
  const std::vector<int> targets{0, 1, 2, 3, 4};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
  EXPECT_NEAR(masked_loss(logits, targets, mask).item(), std::log(7.0), 1e-12);
}

TEST(MaskedLoss, ConfidentCorrectIsNearZero) {
  std::vector<double> d(3 * 4, -30.0);
  const std::vector<int> targets{2, 0, 3};
  for (std::size_t t = 0; t < 3; ++t) d[t * 4 + static_cast<std::size_t>(targets[t])] = 30.0;
  const std::vector<std::uint8_t> mask{1, 1, 1};
  EXPECT_LT(masked_loss(Tensor({3, 4}, d), targets, mask).item(), 1e-6);
}

TEST(MaskedLoss, HandComputedMeanOverMaskedPositions) {
  const Tensor logits({3, 4}, {1, 2, 3, 4, 0, 0, 0, 9, 2, 0, 0, 0});
  const std::vector<int> targets{3, 1, 0};
  const std::vector<std::uint8_t> mask{1, 0, 1};
  auto nll = [](std::vector<double> row, int y) {
    double z = 0;
    for (double v : row) z += std::exp(v);
    return std::log(z) - row[static_cast<std::size_t>(y)];
  };
  const double expect = (nll({1, 2, 3, 4}, 3) + nll({2, 0, 0, 0}, 0)) / 2.0;
  EXPECT_NEAR(masked_loss(logits, targets, mask).item(), expect, 1e-12);
}

TEST(MaskedLoss, EmptyMaskRejected) {
  const std::vector<int> targets{0, 1};
  const std::vector<std::uint8_t> mask{0, 0};
  EXPECT_EQ(kind_of([&] { masked_loss(Tensor::zeros({2, 3}), targets, mask); }),
            ErrorKind::kEmptyMask);
}

TEST(MaskedLoss, PromptTargetsDoNotMatter) {
  const Vocab vocab;
  const auto ex = encode_instruction_example(pair_of("Lungs clear.", "Normal.", "x"), vocab, 160);
  const Model m = Model::init(small_config(), Rng(1));
  const Tensor logits = m.forward(ex.inputs, false);
  const double base = masked_loss(logits, ex.targets, ex.mask).item();
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> perturbed = ex.targets;
    for (std::size_t t = 0; t < perturbed.size(); ++t) {
      if (!ex.mask[t]) perturbed[t] = static_cast<int>(rng.below(256));
    }
    EXPECT_EQ(masked_loss(logits, perturbed, ex.mask).item(), base);
  }
}

TEST(EncodeExample, LossCoversResponseAndEos) {
  const Vocab vocab;
  const auto p = pair_of("Lungs clear.", "Normal.", "x");
  const auto ex = encode_instruction_example(p, vocab, 160);
  const std::size_t response = std::string("Normal.").size() + 1;
  std::size_t on = 0;
  for (auto b : ex.mask) on += b;
  EXPECT_EQ(on, response);
  EXPECT_EQ(ex.targets.back(), Vocab::kEos);
  EXPECT_EQ(ex.inputs.front(), Vocab::kBos);
  EXPECT_EQ(ex.prompt_len, 1 + render_prompt(p, false).size() + 2);
  const auto prompt = encode_generation_prompt(p, vocab, 160, 16);
  EXPECT_EQ(prompt.size(), ex.prompt_len);
  EXPECT_TRUE(std::equal(prompt.begin(), prompt.end(), ex.inputs.begin()));
}

TEST(EncodeExample, LongInputIsLeftTruncated) {
  const Vocab vocab;
  const auto p = pair_of(std::string(500, 'x') + "END", "Short.", "x");
  const auto ex = encode_instruction_example(p, vocab, 160);
  EXPECT_EQ(ex.inputs.size(), 160u);
  const std::string text = decode(ex.inputs, vocab);
  EXPECT_NE(text.find("END"), std::string::npos);
  EXPECT_EQ(kind_of([&] { encode_instruction_example(pair_of("a", std::string(300, 'y'), "z"),
                                                     vocab, 160); }),
            ErrorKind::kSequenceTooLong);
}

TEST(AdamW, ZeroGradZeroDecayLeavesParamsUnchanged) {
  std::vector<Tensor> params{Tensor({3}, {1.0, -2.0, 0.5}, true)};
  TrainConfig tc;
  tc.weight_decay = 0.0;
  AdamWState st;
  for (int i = 0; i < 5; ++i) adamw_step(params, {{0.0, 0.0, 0.0}}, st, tc);
  EXPECT_EQ(params[0].at(0), 1.0);
  EXPECT_EQ(params[0].at(1), -2.0);
  EXPECT_EQ(params[0].at(2), 0.5);
}

TEST(AdamW, HandComputedScalarSteps) {
  std::vector<Tensor> params{Tensor({1}, {1.0}, true)};
  TrainConfig tc;
  tc.learning_rate = 0.1;
  tc.weight_decay = 0.5;
  AdamWState st;
  double p = 1.0, m = 0, v = 0;
  const double grads[] = {0.3, -0.2, 0.7};
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    adamw_step(params, {{g}}, st, tc);
    p *= 1.0 - 0.1 * 0.5;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t)), vhat = v / (1 - std::pow(0.999, t));
    p -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(params[0].at(0), p, 1e-12) << "step " << t;
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(AdamW, DecayOnlyShrinksByLrTimesWd) {
  std::vector<Tensor> params{Tensor({2}, {2.0, -4.0}, true)};
  TrainConfig tc;  // lr 3e-4, wd 0.01
  AdamWState st;
  adamw_step(params, {{0.0, 0.0}}, st, tc);
  EXPECT_NEAR(params[0].at(0), 2.0 * (1 - 3e-6), 1e-15);
  EXPECT_NEAR(params[0].at(1), -4.0 * (1 - 3e-6), 1e-15);
}

TEST(TrainConfigDefaults, MatchRecipe) {
  const TrainConfig tc;
  EXPECT_EQ(tc.learning_rate, 3e-4);
  EXPECT_EQ(tc.weight_decay, 0.01);
  EXPECT_EQ(tc.effective_batch, 128u);
  EXPECT_EQ(tc.micro_batch, 8u);
  EXPECT_EQ(tc.accumulation_steps(), 16u);
  EXPECT_FALSE(tc.grad_clip.has_value());
  TrainConfig bad;
  bad.micro_batch = 3;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::kBadConfig);
}

std::vector<EncodedExample> encoded(const DatasetSplit& s, std::size_t max_len = 160) {
  std::vector<EncodedExample> v;
  for (const auto& p : s.train) v.push_back(encode_instruction_example(p, Vocab(), max_len));
  return v;
}

TEST(Accumulation, MicroBatchingMatchesOneLargeBatch) {
  const auto ex = encoded(four_pairs());
  const Model base = Model::init(small_config(), Rng(3));
  Model a = attach_lora(base, LoraConfig{}, Rng(4)), b = a.clone();
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.effective_batch = 4;
  tc.max_steps = 3;
  tc.micro_batch = 2;
  const auto ra = run_training(a, ex, tc);
  tc.micro_batch = 4;
  const auto rb = run_training(b, ex, tc);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(ra.losses[s], rb.losses[s], 1e-12);
  const auto pa = a.adapter_parameters(), pb = b.adapter_parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) {
    for (std::size_t i = 0; i < pa[k].tensor.numel(); ++i) {
      EXPECT_NEAR(pa[k].tensor.at(i), pb[k].tensor.at(i), 1e-9) << pa[k].name;
    }
  }
}

TEST(Accumulation, SingleMicroBatchIsPlainStep) {
  // With accumulation 1 and one example per step, the step loss equals the
  // example's own masked loss on the pre-update model.
  const auto ex = encoded(four_pairs());
  LoraConfig no_dropout;
  no_dropout.dropout = 0.0;
  Model m = attach_lora(Model::init(small_config(), Rng(5)), no_dropout, Rng(6));
  TrainConfig tc;
  tc.effective_batch = 1;
  tc.micro_batch = 1;
  tc.max_steps = 1;
  std::vector<double> direct;
  for (const auto& e : ex) {
    direct.push_back(masked_loss(m.forward(e.inputs, false), e.targets, e.mask).item());
  }
  const auto r = run_training(m, ex, tc);
  bool found = false;
  for (double d : direct) found = found || std::abs(d - r.losses[0]) < 1e-12;
  EXPECT_TRUE(found) << r.losses[0];
}

TEST(Training, FreezesBaseAndMovesAdapters) {
  const Model base = Model::init(small_config(), Rng(7));
  Model lm = attach_lora(base, LoraConfig{}, Rng(8));
  const auto before = lm.base_checksum();
  const auto adapters_before = serialize_checkpoint(lm.adapter_checkpoint());
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.effective_batch = 4;
  tc.micro_batch = 2;
  tc.max_steps = 3;
  train(lm, four_pairs(), Vocab(), tc);
  EXPECT_EQ(lm.base_checksum(), before);
  EXPECT_EQ(lm.base_checksum(), base.base_checksum());
  EXPECT_NE(serialize_checkpoint(lm.adapter_checkpoint()), adapters_before);
}

TEST(Training, FirstStepLossNearLogVocab) {
  Model lm = attach_lora(Model::init(small_config(), Rng(9)), LoraConfig{}, Rng(10));
  TrainConfig tc;
  tc.effective_batch = 4;
  tc.micro_batch = 4;
  tc.max_steps = 1;
  const auto r = train(lm, four_pairs(), Vocab(), tc);
  EXPECT_NEAR(r.losses[0], std::log(259.0), 0.15 * std::log(259.0));
}

TEST(Training, EmptyDatasetAndPlainModelRejected) {
  Model lm = attach_lora(Model::init(small_config(), Rng(0)), LoraConfig{}, Rng(0));
  EXPECT_EQ(kind_of([&] { train(lm, DatasetSplit{}, Vocab(), TrainConfig{}); }),
            ErrorKind::kEmptyDataset);
  EXPECT_EQ(kind_of([&] { run_training(lm, {}, TrainConfig{}); }), ErrorKind::kEmptyDataset);
  Model plain = Model::init(small_config(), Rng(0));
  EXPECT_EQ(kind_of([&] { train(plain, four_pairs(), Vocab(), TrainConfig{}); }),
            ErrorKind::kBadConfig);
}

TEST(Training, WritesLossTableAndPeriodicCheckpoints) {
  testing::ScratchDir dir("train");
  Model lm = attach_lora(Model::init(small_config(), Rng(11)), LoraConfig{}, Rng(12));
  TrainConfig tc;
  tc.effective_batch = 2;
  tc.micro_batch = 1;
  tc.max_steps = 4;
  tc.checkpoint_every = 2;
  tc.out_dir = dir.path();
  std::vector<std::size_t> seen;
  const auto r = train(lm, four_pairs(), Vocab(), tc,
                       [&](std::size_t step, double, const Model&) { seen.push_back(step); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_TRUE(std::filesystem::exists(dir / "adapter-step2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "adapter-step4.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "adapter-step3.ckpt"));
  EXPECT_EQ(r.checkpoint_path, dir / "adapter.ckpt");
  EXPECT_EQ(testing::slurp(dir / "adapter-step4.ckpt"), testing::slurp(dir / "adapter.ckpt"));

  std::istringstream tsv(testing::slurp(dir / "loss.tsv"));
  std::string line;
  std::getline(tsv, line);
  EXPECT_EQ(line, "step\tloss");
  for (std::size_t s = 0; s < 4; ++s) {
    ASSERT_TRUE(std::getline(tsv, line));
    std::size_t step = 0;
    double loss = 0;
    std::istringstream(line) >> step >> loss;
    EXPECT_EQ(step, s);
    EXPECT_NEAR(loss, r.losses[s], 1e-8 * std::max(1.0, loss));
  }
  EXPECT_FALSE(std::getline(tsv, line));
}

TEST(Training, SameSeedSameLosses) {
  const Model base = Model::init(small_config(), Rng(13));
  TrainConfig tc;
  tc.effective_batch = 4;
  tc.micro_batch = 2;
  tc.max_steps = 3;
  tc.seed = 99;
  Model a = attach_lora(base, LoraConfig{}, Rng(1)), b = attach_lora(base, LoraConfig{}, Rng(1));
  EXPECT_EQ(train(a, four_pairs(), Vocab(), tc).losses, train(b, four_pairs(), Vocab(), tc).losses);
  EXPECT_EQ(serialize_checkpoint(a.adapter_checkpoint()), serialize_checkpoint(b.adapter_checkpoint()));
}

TEST(Training, OverfitOnePairThenGenerateIt) {
  const Vocab vocab;
  const auto p = pair_of("Lungs clear.", "No acute disease.", "x");
  const std::vector<EncodedExample> ex{encode_instruction_example(p, vocab, 160)};
  Model m = Model::init(small_config(), Rng(14));
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.weight_decay = 0.0;
  tc.effective_batch = 1;
  tc.micro_batch = 1;
  tc.max_steps = 150;
  const auto r = run_training(m, ex, tc);
  EXPECT_LT(r.losses.back(), 0.05);
  GenerateParams gp;
  gp.max_new = 30;
  // 122 prompt tokens plus 30 reserved fit in 160, so nothing is cut.
  const auto prompt = encode_generation_prompt(p, vocab, 160, 30);
  ASSERT_TRUE(std::equal(prompt.begin(), prompt.end(), ex[0].inputs.begin()));
  const auto out = generate(m, prompt, gp);
  EXPECT_EQ(decode(out, vocab), p.output);
}

}  // namespace
}  // namespace radllama
