// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "radllama/rouge.hpp"
#include "support.hpp"

namespace radllama {
namespace {

using testing::oracle_rouge_l;
using testing::oracle_rouge_n;
using testing::oracle_tokens;

using Tokens = std::vector<std::string>;

void expect_score(const RougeScore& s, double p, double r, double f, double tol = 1e-12) {
  EXPECT_NEAR(s.precision, p, tol);
  EXPECT_NEAR(s.recall, r, tol);
  EXPECT_NEAR(s.f1, f, tol);
}

TEST(RougeTokenize, LowercasesAndSplitsOnPunctuation) {
  EXPECT_EQ(rouge_tokenize("Heart size normal."), (Tokens{"heart", "size", "normal"}));
  EXPECT_TRUE(rouge_tokenize("").empty());
  EXPECT_EQ(rouge_tokenize("X-ray"), (Tokens{"x", "ray"}));
}

TEST(RougeTokenize, DigitsStayAndNonAsciiSeparates) {
  EXPECT_EQ(rouge_tokenize("T12 and L1"), (Tokens{"t12", "and", "l1"}));
  EXPECT_EQ(rouge_tokenize("caf\xC3\xA9s"), (Tokens{"caf", "s"}));
  EXPECT_TRUE(rouge_tokenize("  ...\t\n").empty());
}

TEST(RougeN, IdenticalStringsScoreOne) {
  expect_score(rouge_n("no acute process", "no acute process", 1), 1, 1, 1);
  expect_score(rouge_n("no acute process", "no acute process", 2), 1, 1, 1);
}

TEST(RougeN, HandCountedUnigramsAndBigrams) {
  expect_score(rouge_n("the cat sat", "the cat", 1), 2.0 / 3.0, 1.0, 0.8);
  expect_score(rouge_n("the cat sat", "the cat", 2), 0.5, 1.0, 2.0 / 3.0);
}

TEST(RougeN, CountsAreClipped) {
  // "the" appears four times in the candidate but twice in the reference.
  expect_score(rouge_n("the the the the", "the cat the", 1), 2.0 / 4.0, 2.0 / 3.0,
               2 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0));
}

TEST(RougeN, NoNgramsOnEitherSideIsZero) {
  expect_score(rouge_n("", "normal", 1), 0, 0, 0);
  expect_score(rouge_n("normal", "", 1), 0, 0, 0);
  expect_score(rouge_n("normal", "normal", 2), 0, 0, 0);
}

TEST(RougeN, ZeroOrderRejected) {
  try {
    rouge_n("a", "a", 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBadConfig);
  }
}

TEST(RougeL, HandComputedLcs) {
  expect_score(rouge_l("a b c d", "a c d b"), 0.75, 0.75, 0.75);
  expect_score(rouge_l("no acute process", "no acute process"), 1, 1, 1);
  expect_score(rouge_l("left lung", "cardiac silhouette"), 0, 0, 0);
}

TEST(CorpusRouge, SinglePairEqualsPairScore) {
  const auto c = corpus_rouge({{"the cat sat", "the cat"}});
  const auto s = score_pair("the cat sat", "the cat");
  EXPECT_EQ(c.rouge1.f1, s.rouge1.f1);
  EXPECT_EQ(c.rouge2.precision, s.rouge2.precision);
  EXPECT_EQ(c.rougeL.recall, s.rougeL.recall);
}

TEST(CorpusRouge, MeanOfPerPairF1) {
  const auto c = corpus_rouge({{"mild edema", "mild edema"}, {"left", "right"}});
  EXPECT_DOUBLE_EQ(c.rouge1.f1, 0.5);
  EXPECT_DOUBLE_EQ(c.rougeL.f1, 0.5);
}

TEST(CorpusRouge, EmptyCorpusRejected) {
  try {
    corpus_rouge({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyCorpus);
  }
}

TEST(CorpusRouge, TenPairFixtureMatchesOracle) {
  const auto pairs = testing::constructed_rouge_pairs();
  std::vector<std::pair<std::string, std::string>> ten(pairs.begin(), pairs.begin() + 10);
  const auto got = corpus_rouge(ten);
  double f1 = 0, f2 = 0, fl = 0;
  for (const auto& [c, r] : ten) {
    const auto ct = oracle_tokens(c), rt = oracle_tokens(r);
    f1 += oracle_rouge_n(ct, rt, 1).f1;
    f2 += oracle_rouge_n(ct, rt, 2).f1;
    fl += oracle_rouge_l(ct, rt).f1;
  }
  EXPECT_NEAR(got.rouge1.f1, f1 / 10, 1e-9);
  EXPECT_NEAR(got.rouge2.f1, f2 / 10, 1e-9);
  EXPECT_NEAR(got.rougeL.f1, fl / 10, 1e-9);
}

TEST(RougeOracle, ConstructedPairsAgree) {
  for (const auto& [c, r] : testing::constructed_rouge_pairs()) {
    SCOPED_TRACE(c + " | " + r);
    EXPECT_EQ(rouge_tokenize(c), oracle_tokens(c));
    const auto ct = oracle_tokens(c), rt = oracle_tokens(r);
    for (std::size_t n : {1u, 2u, 3u}) {
      const auto want = oracle_rouge_n(ct, rt, n);
      expect_score(rouge_n(c, r, n), want.precision, want.recall, want.f1, 1e-9);
    }
    const auto want = oracle_rouge_l(ct, rt);
    expect_score(rouge_l(c, r), want.precision, want.recall, want.f1, 1e-9);
  }
}

TEST(RougeOracle, ExhaustiveTernaryUpToFour) {
  const auto seqs = testing::all_sequences({"a", "b", "c"}, 4);
  for (const auto& c : seqs) {
    for (const auto& r : seqs) {
      const auto want = oracle_rouge_l(c, r);
      const auto got = rouge_l_tokens(c, r);
      ASSERT_NEAR(got.f1, want.f1, 1e-12) << testing::join_tokens(c) << " | "
                                          << testing::join_tokens(r);
      const auto want2 = oracle_rouge_n(c, r, 2);
      ASSERT_NEAR(rouge_n_tokens(c, r, 2).f1, want2.f1, 1e-12);
    }
  }
}

class RougeProperties : public ::testing::Test {
 protected:
  Tokens random_tokens(Rng& rng, std::size_t max_len) {
    static const Tokens vocab{"no", "acute", "mild", "edema", "left", "effusion", "lobe"};
    Tokens t(rng.below(max_len + 1));
    for (auto& x : t) x = vocab[rng.below(vocab.size())];
    return t;
  }
};

TEST_F(RougeProperties, SwappingSidesSwapsPrecisionAndRecall) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Tokens a = random_tokens(rng, 10), b = random_tokens(rng, 10);
    for (std::size_t n : {1u, 2u}) {
      const auto ab = rouge_n_tokens(a, b, n), ba = rouge_n_tokens(b, a, n);
      ASSERT_EQ(ab.precision, ba.recall);
      ASSERT_EQ(ab.recall, ba.precision);
      ASSERT_EQ(ab.f1, ba.f1);
    }
    const auto ab = rouge_l_tokens(a, b), ba = rouge_l_tokens(b, a);
    ASSERT_EQ(ab.precision, ba.recall);
    ASSERT_EQ(ab.f1, ba.f1);
  }
}

TEST_F(RougeProperties, ReferenceExtendingCandidateHasFullUnigramRecall) {
  Rng rng(12);
  for (int i = 0; i < 1000; ++i) {
    Tokens cand = random_tokens(rng, 8);
    if (cand.empty()) cand.push_back("mild");
    Tokens extended = cand;
    const Tokens extra = random_tokens(rng, 4);
    extended.insert(extended.end(), extra.begin(), extra.end());
    // The candidate is the reference here, so recall over it is complete.
    ASSERT_DOUBLE_EQ(rouge_n_tokens(extended, cand, 1).recall, 1.0);
  }
}

TEST_F(RougeProperties, AppendingAbsentReferenceTokenNeverRaisesRecall) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const Tokens cand = random_tokens(rng, 8);
    Tokens ref = random_tokens(rng, 8);
    const auto r1 = rouge_n_tokens(cand, ref, 1).recall;
    const auto r2 = rouge_n_tokens(cand, ref, 2).recall;
    const auto rl = rouge_l_tokens(cand, ref).recall;
    ref.push_back("pneumothorax");  // not in the candidate vocabulary
    ASSERT_LE(rouge_n_tokens(cand, ref, 1).recall, r1);
    ASSERT_LE(rouge_n_tokens(cand, ref, 2).recall, r2);
    ASSERT_LE(rouge_l_tokens(cand, ref).recall, rl);
  }
}

TEST_F(RougeProperties, ScoresStayInUnitInterval) {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Tokens a = random_tokens(rng, 12), b = random_tokens(rng, 12);
    for (const RougeScore& s :
         {rouge_n_tokens(a, b, 1), rouge_n_tokens(a, b, 2), rouge_l_tokens(a, b)}) {
      ASSERT_GE(s.precision, 0.0);
      ASSERT_LE(s.precision, 1.0);
      ASSERT_GE(s.recall, 0.0);
      ASSERT_LE(s.recall, 1.0);
      ASSERT_LE(s.f1, 1.0);
    }
  }
}

}  // namespace
}  // namespace radllama
