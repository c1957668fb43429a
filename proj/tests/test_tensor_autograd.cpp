// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "radllama/checkpoint.hpp"
#include "radllama/grad_check.hpp"
#include "radllama/kernel_checks.hpp"
#include "radllama/rng.hpp"
#include "radllama/tensor.hpp"
#include "support.hpp"

namespace radllama {
namespace {

Tensor leaf(Shape s, std::vector<double> d) { return Tensor(std::move(s), std::move(d), true); }

Tensor random(Shape s, Rng& rng, bool grad = false) {
  return seeded_init(std::move(s), InitDist::normal(0.0, 1.0), rng, grad);
}

void expect_all_near(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(Kernels, MatmulIdentity) {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor a({2, 2}, {1.5, -2, 3.25, 4});
  const Tensor p = matmul(eye, a);
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()),
            std::vector<double>(a.data().begin(), a.data().end()));
}

TEST(Kernels, MatmulHandComputed) {
  const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  expect_all_near(c.data(), std::vector<double>{58, 64, 139, 154}, 0);
  const Tensor bt = transpose(b);
  expect_all_near(matmul_nt(a, bt).data(), c.data(), 0);
}

TEST(Kernels, SoftmaxUniformAndRowSums) {
  const Tensor s = softmax(Tensor({1, 3}, {0, 0, 0}));
  expect_all_near(s.data(), std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
  Rng rng(1);
  const Tensor x = random({5, 7}, rng);
  const Tensor y = softmax(scale(x, 30.0));
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 7; ++c) sum += y.at(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Kernels, RmsNorm) {
  expect_all_near(rms_norm(Tensor({1, 3}, {2, 2, 2})).data(), std::vector<double>{1, 1, 1}, 1e-5);
  const Tensor y = rms_norm(Tensor({1, 2}, {3, 4}));
  const double rms = std::sqrt((9.0 + 16.0) / 2.0 + kRmsNormEps);
  expect_all_near(y.data(), std::vector<double>{3 / rms, 4 / rms}, 1e-15);
}

TEST(Kernels, SiluEmbeddingConcatSlice) {
  const Tensor s = silu(Tensor({2}, {0.0, 1.0}));
  expect_all_near(s.data(), std::vector<double>{0.0, 1.0 / (1.0 + std::exp(-1.0))}, 1e-15);

  const Tensor table({3, 2}, {0, 1, 10, 11, 20, 21});
  const std::vector<int> ids{2, 0, 2};
  expect_all_near(embedding(table, ids).data(), std::vector<double>{20, 21, 0, 1, 20, 21}, 0);

  const Tensor a({2, 1}, {1, 2}), b({2, 2}, {3, 4, 5, 6});
  const Tensor c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  expect_all_near(c.data(), std::vector<double>{1, 3, 4, 2, 5, 6}, 0);
  expect_all_near(slice(c, 1, 1, 3).data(), b.data(), 0);
  expect_all_near(slice(c, 0, 1, 2).data(), std::vector<double>{2, 5, 6}, 0);
}

TEST(Kernels, CausalMaskZeroesFuture) {
  const Tensor p = softmax(causal_mask(Tensor::zeros({3, 3})));
  expect_all_near(p.data(), std::vector<double>{1, 0, 0, 0.5, 0.5, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3},
                  1e-15);
}

TEST(Kernels, RopeRotatesPairsByPosition) {
  // One head of width 2: position p rotates (x0, x1) by angle p.
  const Tensor x({3, 2}, {1, 0, 1, 0, 0, 1});
  const Tensor y = rope(x, 1, 10000.0);
  expect_all_near(y.data(),
                  std::vector<double>{1, 0, std::cos(1.0), std::sin(1.0), -std::sin(2.0),
                                      std::cos(2.0)},
                  1e-15);
}

TEST(Kernels, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3] vs [2, 3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), Error);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), Error);
}

TEST(Autograd, SquareGradient) {
  Tensor x = leaf({1}, {3});
  sum(mul(x, x)).backward();
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Autograd, RepeatedBackwardAccumulates) {
  Rng rng(2);
  Tensor a = random({3, 4}, rng, true), b = random({4, 2}, rng, true);
  const Tensor loss = sum(mul(matmul(a, b), matmul(a, b)));
  loss.backward();
  const std::vector<double> once(a.grad().begin(), a.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(a.grad()[i], 2 * once[i]);
}

TEST(Autograd, NonScalarBackwardRejected) {
  Tensor x = leaf({2}, {1, 2});
  try {
    mul(x, x).backward();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotScalar);
  }
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Tensor x = leaf({2}, {1, 2});
  Tensor y;
  {
    NoGradGuard ng;
    y = sum(mul(x, x));
  }
  y.backward();
  EXPECT_FALSE(x.has_grad());
}

TEST(Autograd, SharedSubexpressionGradientsAdd) {
  Tensor x = leaf({1}, {2});
  const Tensor y = mul(x, x);
  sum(add(y, mul(y, x))).backward();  // x^2 + x^3 -> 2x + 3x^2
  EXPECT_EQ(x.grad()[0], 2 * 2.0 + 3 * 4.0);
}

TEST(GradCheck, QuadraticIsExact) {
  Rng rng(3);
  const Tensor x = random({4, 3}, rng);
  EXPECT_LT(grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x), 1e-8);
}

TEST(GradCheck, TwoLayerNetworkWithCrossEntropy) {
  Rng rng(4);
  Tensor w1 = random({5, 6}, rng, true), w2 = random({6, 4}, rng, true);
  const Tensor x = random({3, 5}, rng);
  const std::vector<int> targets{1, 3, 0};
  const std::vector<std::uint8_t> mask{1, 1, 1};
  const auto res = grad_check_params(
      [&] { return masked_cross_entropy(matmul(silu(matmul(x, w1)), w2), targets, mask); },
      {w1, w2}, 1e-4);
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(GradCheck, WrongGradientIsDetected) {
  Rng rng(5);
  const Tensor x = random({6}, rng);
  std::vector<double> doubled(6);
  for (std::size_t i = 0; i < 6; ++i) doubled[i] = 2.0 * 2.0 * x.at(i);  // true gradient 2x
  const double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, doubled, x);
  EXPECT_NEAR(err, 0.5, 1e-6);
}

TEST(GradCheck, EveryKernelWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto checks = check_kernels(seed, 1e-4);
    EXPECT_GE(checks.size(), 20u);
    for (const auto& c : checks) {
      EXPECT_LT(c.result.max_rel_error, 1e-5) << c.name << " seed " << seed;
    }
  }
}

TEST(SeededInit, ZerosAndDeterminism) {
  Rng r1(6);
  const Tensor z = seeded_init({4}, InitDist::zeros(), r1);
  expect_all_near(z.data(), std::vector<double>(4, 0.0), 0);
  Rng a(7), b(7);
  const Tensor ta = seeded_init({10000}, InitDist::normal(0, 0.02), a);
  const Tensor tb = seeded_init({10000}, InitDist::normal(0, 0.02), b);
  expect_all_near(ta.data(), tb.data(), 0);
}

TEST(SeededInit, SampleMeanWithinStandardErrorBound) {
  Rng rng(8);
  const Tensor t = seeded_init({10000}, InitDist::normal(0, 0.02), rng);
  double mean = 0;
  for (double v : t.data()) mean += v;
  mean /= 10000;
  EXPECT_LT(std::abs(mean), 4 * 0.02 / std::sqrt(10000.0));
  Rng ru(9);
  for (double v : seeded_init({1000}, InitDist::uniform(-1, 2), ru).data()) {
    EXPECT_GE(v, -1);
    EXPECT_LT(v, 2);
  }
}

TEST(RngStreams, SplitsAreDeterministicAndDistinct) {
  const Rng root(42);
  Rng a = root.split("init"), b = root.split("init"), c = root.split("lora");
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    seen.insert(x);
    seen.insert(c.next_u64());
  }
  EXPECT_EQ(seen.size(), 200u);
  EXPECT_EQ(Rng::kAlgorithm, "splitmix64-ctr");
  Rng d(42);
  EXPECT_NE(d.next_u64(), Rng(43).next_u64());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(10);
  Checkpoint c;
  c.meta["kind"] = "test";
  c.tensors.push_back({"w", random({3, 2}, rng)});
  c.tensors.push_back({"s", Tensor::scalar(-0.0)});
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 8), "ckpt-v1\n");
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.meta, c.meta);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensors[0].name, "w");
  EXPECT_EQ(back.tensors[0].tensor.shape(), (Shape{3, 2}));
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
  EXPECT_THROW(deserialize_checkpoint("nope"), Error);
}

TEST(TensorProperties, SoftmaxShiftInvariance) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(8);
    const Tensor x = random({r, c}, rng);
    const double shift = rng.uniform(-50, 50);
    const Tensor a = softmax(x), b = softmax(add(x, Tensor({c}, std::vector<double>(c, shift))));
    for (std::size_t k = 0; k < a.numel(); ++k) ASSERT_NEAR(a.at(k), b.at(k), 1e-12);
  }
}

TEST(TensorProperties, MatmulAssociativity) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6),
                      p = 1 + rng.below(6);
    const Tensor a = random({m, k}, rng), b = random({k, n}, rng), c = random({n, p}, rng);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t j = 0; j < l.numel(); ++j) ASSERT_NEAR(l.at(j), r.at(j), 1e-9);
  }
}

}  // namespace
}  // namespace radllama
