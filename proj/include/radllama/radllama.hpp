// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

// Convenience header pulling in the whole library.

#pragma once

#include "radllama/checkpoint.hpp"
#include "radllama/cli.hpp"
#include "radllama/config.hpp"
#include "radllama/error.hpp"
#include "radllama/expert_eval.hpp"
#include "radllama/grad_check.hpp"
#include "radllama/instruction_dataset.hpp"
#include "radllama/kernel_checks.hpp"
#include "radllama/leaderboard.hpp"
#include "radllama/model.hpp"
#include "radllama/pipeline.hpp"
#include "radllama/report_corpus.hpp"
#include "radllama/rng.hpp"
#include "radllama/rouge.hpp"
#include "radllama/synthetic.hpp"
#include "radllama/tensor.hpp"
#include "radllama/tokenizer.hpp"
#include "radllama/trainer.hpp"
#include "radllama/tsv.hpp"
