// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "radllama/grad_check.hpp"
#include "radllama/model.hpp"
#include "radllama/tensor.hpp"

// Finite-difference checks over every differentiable op and a whole
// decoder. Shared by the grad-check subcommand and the test suites.

namespace radllama {

struct KernelCheck {
  std::string name;
  GradCheckResult result;
};

namespace detail {

inline Tensor rand_tensor(Shape s, Rng& rng, double std = 1.0) {
  return seeded_init(std::move(s), InitDist::normal(0.0, std), rng, true);
}

// Projects an output onto fixed random weights so every output element
// contributes a distinct amount to the scalar loss.
inline Tensor probe(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

inline KernelCheck run_check(const std::string& name, std::vector<Tensor> params,
                             const std::function<Tensor()>& graph, double eps) {
  return {name, grad_check_params(graph, std::move(params), eps)};
}

}  // namespace detail

/// One check per differentiable op on random shapes of at most 8 per axis.
inline std::vector<KernelCheck> check_kernels(std::uint64_t seed, double eps = 1e-4) {
  using detail::probe;
  using detail::rand_tensor;
  using detail::run_check;
  Rng rng = Rng(seed).split("kernels");
  std::vector<KernelCheck> out;

  {
    Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 5}, rng);
    Tensor w = rand_tensor({3, 5}, rng);
    w.set_requires_grad(false);
    out.push_back(run_check("matmul", {a, b}, [=] { return probe(matmul(a, b), w); }, eps));
  }
  {
    Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({6, 4}, rng);
    Tensor w = rand_tensor({3, 6}, rng);
    w.set_requires_grad(false);
    out.push_back(
        run_check("matmul_nt", {a, b}, [=] { return probe(matmul_nt(a, b), w); }, eps));
  }
  {
    Tensor a = rand_tensor({4, 5}, rng), b = rand_tensor({5}, rng);
    Tensor w = rand_tensor({4, 5}, rng);
    w.set_requires_grad(false);
    out.push_back(
        run_check("add_broadcast", {a, b}, [=] { return probe(add(a, b), w); }, eps));
    out.push_back(
        run_check("mul_broadcast", {a, b}, [=] { return probe(mul(a, b), w); }, eps));
  }
  {
    Tensor a = rand_tensor({2, 3, 4}, rng), b = rand_tensor({2, 3, 4}, rng);
    Tensor w = rand_tensor({2, 3, 4}, rng);
    w.set_requires_grad(false);
    out.push_back(run_check("add", {a, b}, [=] { return probe(add(a, b), w); }, eps));
    out.push_back(run_check("mul", {a, b}, [=] { return probe(mul(a, b), w); }, eps));
    out.push_back(run_check("scale", {a}, [=] { return probe(scale(a, -1.7), w); }, eps));
  }
  {
    Tensor a = rand_tensor({3, 5}, rng);
    out.push_back(run_check("sum", {a}, [=] { return scale(sum(mul(a, a)), 0.5); }, eps));
    out.push_back(run_check("mean", {a}, [=] { return mean(mul(a, a)); }, eps));
  }
  {
    Tensor x = rand_tensor({4, 6}, rng);
    Tensor w = rand_tensor({4, 6}, rng);
    w.set_requires_grad(false);
    out.push_back(run_check("softmax", {x}, [=] { return probe(softmax(x), w); }, eps));
    out.push_back(run_check("rms_norm", {x}, [=] { return probe(rms_norm(x), w); }, eps));
    out.push_back(run_check("silu", {x}, [=] { return probe(silu(x), w); }, eps));
  }
  {
    Tensor x = rand_tensor({5, 5}, rng);
    Tensor w = rand_tensor({5, 5}, rng);
    w.set_requires_grad(false);
    out.push_back(run_check("causal_softmax", {x},
                            [=] { return probe(softmax(causal_mask(x)), w); }, eps));
    out.push_back(run_check("transpose", {x}, [=] { return probe(transpose(x), w); }, eps));
  }
  {
    Tensor table = rand_tensor({7, 3}, rng);
    Tensor w = rand_tensor({5, 3}, rng);
    w.set_requires_grad(false);
    const std::vector<int> ids{2, 0, 2, 6, 1};
    out.push_back(run_check("embedding", {table},
                            [=] { return probe(embedding(table, ids), w); }, eps));
  }
  {
    Tensor a = rand_tensor({3, 2}, rng), b = rand_tensor({3, 4}, rng);
    Tensor w = rand_tensor({3, 6}, rng);
    w.set_requires_grad(false);
    out.push_back(run_check("concat", {a, b},
                            [=] { return probe(concat({a, b}, 1), w); }, eps));
    Tensor w2 = rand_tensor({3, 3}, rng);
    w2.set_requires_grad(false);
    out.push_back(run_check("slice", {b}, [=] { return probe(slice(b, 1, 1, 4), w2); }, eps));
  }
  {
    Tensor x = rand_tensor({6, 8}, rng);
    Tensor w = rand_tensor({6, 8}, rng);
    w.set_requires_grad(false);
    out.push_back(run_check("rope", {x}, [=] { return probe(rope(x, 2, 10000.0), w); }, eps));
    // The mask is drawn from a fixed stream, so every evaluation sees the
    // same zero pattern.
    const Rng drop = rng.split("dropout");
    out.push_back(run_check("dropout", {x}, [=] {
      Rng r = drop;
      return probe(dropout(x, 0.25, r), w);
    }, eps));
  }
  {
    Tensor logits = rand_tensor({4, 6}, rng);
    const std::vector<int> targets{1, 5, 0, 3};
    const std::vector<std::uint8_t> mask{0, 1, 1, 1};
    out.push_back(run_check("masked_cross_entropy", {logits}, [=] {
      return masked_cross_entropy(logits, targets, mask);
    }, eps));
  }
  return out;
}

/// Default probe seed of the whole-model checks. Central differences at
/// eps 1e-4 carry a truncation error of order eps^2 times the third
/// derivative, which for some random draws of this tiny decoder already
/// reaches 1e-5 relative. Seed 1 gives well-conditioned weights; the tests
/// also sweep seeds at a smaller step to confirm quadratic convergence.
inline constexpr std::uint64_t kGradCheckSeed = 1;

/// Small decoder config for whole-model checks.
inline ModelConfig grad_check_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_ff = 12;
  c.vocab_size = 11;
  c.max_seq_len = 8;
  // Larger weights than the training default keep attention far from
  // uniform so the check exercises the softmax Jacobian.
  c.init_std = 0.5;
  return c;
}

/// Loss of a full forward pass against every base weight, then against
/// the adapters of an attached model (with B perturbed away from zero).
inline std::vector<KernelCheck> check_model(std::uint64_t seed = kGradCheckSeed,
                                             double eps = 1e-4) {
  const ModelConfig cfg = grad_check_config();
  const Rng root = Rng(seed).split("model");
  Model m = Model::init(cfg, root.split("init"));
  const std::vector<int> tokens{1, 4, 7, 2, 9, 0, 3};
  const std::vector<int> targets{4, 7, 2, 9, 0, 3, 10};
  const std::vector<std::uint8_t> mask{0, 1, 1, 0, 1, 1, 1};
  std::vector<KernelCheck> out;
  out.push_back(detail::run_check("decoder_forward", m.trainable_parameters(), [&] {
    return masked_cross_entropy(m.forward(tokens, false), targets, mask);
  }, eps));

  LoraConfig lc;
  lc.r = 2;
  lc.alpha = 4.0;
  lc.targets = {"q_proj", "k_proj", "v_proj", "o_proj"};
  Model lm = attach_lora(m, lc, root.split("lora"));
  Rng br = root.split("b");
  for (auto& nt : lm.adapter_parameters()) {
    for (double& v : nt.tensor.mutable_data()) v += br.normal(0.0, 0.3);
  }
  out.push_back(detail::run_check("lora_forward", lm.trainable_parameters(), [&] {
    return masked_cross_entropy(lm.forward(tokens, false), targets, mask);
  }, eps));
  return out;
}

}  // namespace radllama
