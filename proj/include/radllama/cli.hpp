// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "radllama/checkpoint.hpp"
#include "radllama/config.hpp"
#include "radllama/error.hpp"
#include "radllama/expert_eval.hpp"
#include "radllama/instruction_dataset.hpp"
#include "radllama/kernel_checks.hpp"
#include "radllama/leaderboard.hpp"
#include "radllama/pipeline.hpp"
#include "radllama/report_corpus.hpp"
#include "radllama/tokenizer.hpp"

namespace radllama {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline void write_text_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIoError, "cannot write " + p.string());
  f << body;
  if (!f) throw Error(ErrorKind::kIoError, "short write to " + p.string());
}

inline SplitRatios parse_ratios(const std::string& s) {
  const auto parts = parse_list(s);
  if (parts.size() != 3) {
    throw Error(ErrorKind::kBadRatios, "expected three comma-separated ratios, got '" + s + "'");
  }
  return {parse_real("ratios", parts[0]), parse_real("ratios", parts[1]),
          parse_real("ratios", parts[2])};
}

inline std::string fmt4(double v) { return format_value(v); }

inline Model load_tuned_model(const std::filesystem::path& dir) {
  Model m = Model::from_checkpoint(read_checkpoint(dir / "base.ckpt"));
  m.load_adapters(read_checkpoint(dir / "adapter.ckpt"));
  return m;
}

}  // namespace detail

/// Entry point of the radllama tool. Returns 0 on success, 1 on a usage
/// error (help goes to `err`) and 2 when inputs are rejected.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out,
                        std::ostream& err) {
  CLI::App app{"Instruction-tune and evaluate a desk-scale radiology impression model"};
  app.name("radllama");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string config_path;
  std::string format_name = "text";
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) {
       seed = s;
       seed_given = true;
     }, "Seed for splits, initialization and dropout")
      ->trigger_on_parse();
  app.add_option("--config", config_path, "Flat key=value settings file");
  app.add_option("--format", format_name, "Table format")
      ->check(CLI::IsMember({"text", "tsv", "markdown"}));

  std::string input;
  std::string source = "synthetic";
  std::string out_dir;

  auto* ingest = app.add_subcommand("ingest", "Parse reports and print corpus statistics");
  ingest->add_option("--input", input, "Report file or directory")->required();
  ingest->add_option("--source", source, "synthetic | mimic-cxr-style | openi-style");

  std::string instruction(kDefaultInstruction);
  std::string ratios = "0.8,0.1,0.1";
  auto* build = app.add_subcommand("build-dataset", "Write train/val/test JSON Lines splits");
  build->add_option("--input", input, "Report file or directory")->required();
  build->add_option("--out", out_dir, "Output directory")->required();
  build->add_option("--source", source, "Report source label");
  build->add_option("--instruction", instruction, "Instruction text");
  build->add_option("--ratios", ratios, "train,val,test fractions");

  std::string data_path;
  auto* train_cmd = app.add_subcommand("train", "Train the base stage and LoRA adapters");
  train_cmd->add_option("--data", data_path, "Train split (.jsonl)")->required();
  train_cmd->add_option("--out", out_dir, "Output directory for checkpoints")->required();

  std::string model_dir, pred_path, ref_path;
  std::size_t max_new = 64;
  auto* gen = app.add_subcommand("generate", "Greedy-decode impressions for a split");
  gen->add_option("--model", model_dir, "Directory written by train")->required();
  gen->add_option("--data", data_path, "Pairs to answer (.jsonl)")->required();
  gen->add_option("--out", pred_path, "Predictions (.jsonl)")->required();
  gen->add_option("--refs", ref_path, "Also write references (.jsonl)");
  gen->add_option("--max-new", max_new, "Token limit per impression");

  std::string samples_path, model_id = "radllama-micro", label = "synthetic";
  auto* rouge_cmd = app.add_subcommand("eval-rouge", "Score predictions with ROUGE-1/2/L");
  rouge_cmd->add_option("--pred", pred_path, "Predictions (.jsonl)")->required();
  rouge_cmd->add_option("--ref", ref_path, "References (.jsonl)")->required();
  rouge_cmd->add_option("--samples", samples_path, "Per-sample TSV output");
  rouge_cmd->add_option("--model-id", model_id, "Row label");
  rouge_cmd->add_option("--label", label, "Dataset label for column names");

  std::string ratings_path;
  auto* expert = app.add_subcommand("eval-expert", "Aggregate radiologist ratings");
  expert->add_option("--ratings", ratings_path, "Ratings TSV")->required();

  std::string fixture_path, sort_column;
  auto* board = app.add_subcommand("leaderboard", "Render a score table");
  board->add_option("--fixture", fixture_path, "Versioned score table")->required();
  board->add_option("--sort", sort_column, "Column to sort by (default: first)");

  double eps = 1e-4;
  double tolerance = 1e-5;
  auto* gc = app.add_subcommand("grad-check", "Compare autodiff with finite differences");
  gc->add_option("--eps", eps, "Central-difference step");
  gc->add_option("--tolerance", tolerance, "Maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (app.get_subcommands().empty()) err << app.help();
    return kExitUsage;
  }

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed_given) cfg.seed = seed;
    const TableFormat fmt = parse_format(format_name);

    if (*ingest) {
      auto [reports, stats] = ingest_corpus(input, parse_source(source));
      out << stats.to_tsv();
    } else if (*build) {
      auto [reports, stats] = ingest_corpus(input, parse_source(source));
      const auto pairs = build_pairs(reports, instruction);
      const DatasetSplit split = split_dataset(pairs, detail::parse_ratios(ratios), cfg.seed);
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      write_pairs(split.train, dir / "train.jsonl");
      write_pairs(split.val, dir / "val.jsonl");
      write_pairs(split.test, dir / "test.jsonl");
      detail::write_text_file(dir / "corpus_stats.tsv", stats.to_tsv());
      out << "split\tpairs\n"
          << "train\t" << split.train.size() << "\nval\t" << split.val.size() << "\ntest\t"
          << split.test.size() << '\n';
    } else if (*train_cmd) {
      DatasetSplit split;
      split.train = read_pairs(data_path);
      split.seed = cfg.seed;
      const PipelineRun run = run_pipeline(split, cfg, out_dir);
      out << "stage\tsteps\tfinal_loss\twall_seconds\n";
      auto row = [&out](const char* stage, const TrainReport& r) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f\t%.1f",
                      r.losses.empty() ? 0.0 : r.losses.back(), r.wall_seconds);
        out << stage << '\t' << r.losses.size() << '\t' << buf << '\n';
      };
      row("base", run.pretrain_report);
      row("adapters", run.train_report);
    } else if (*gen) {
      const Model m = detail::load_tuned_model(model_dir);
      const Vocab vocab = read_vocab(std::filesystem::path(model_dir) / "vocab.bpe");
      const auto pairs = read_pairs(data_path);
      const auto preds = generate_impressions(m, vocab, pairs, max_new);
      write_texts(preds, pred_path);
      if (!ref_path.empty()) write_texts(references_of(pairs), ref_path);
      out << "generated\t" << preds.size() << "\nexact\t" << exact_matches(preds, pairs)
          << '\n';
    } else if (*rouge_cmd) {
      const RougeRun run = eval_rouge_run(read_texts(pred_path), read_texts(ref_path));
      if (!samples_path.empty()) detail::write_text_file(samples_path, per_sample_tsv(run));
      out << render_leaderboard(computed_board(model_id, label, run.corpus), fmt);
    } else if (*expert) {
      const auto ratings = load_ratings(ratings_path);
      const auto agg = aggregate_ratings(ratings);
      out << "model_id\tcriterion\tscore\tmax_possible\n";
      for (const auto& a : agg) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f\t%.0f", a.score, a.max_possible);
        out << a.model_id << '\t' << a.criterion << '\t' << buf << '\n';
      }
      std::set<std::string> raters;
      for (const auto& r : ratings) raters.insert(r.rater_id);
      if (raters.size() == 2) {
        out << "\nmodel_id\tcriterion\tmean_abs_diff\n";
        for (const auto& d : inter_rater(ratings)) {
          out << d.model_id << '\t' << d.criterion << '\t' << detail::fmt4(d.mean_abs_diff)
              << '\n';
        }
      }
    } else if (*board) {
      Leaderboard lb = load_fixture(fixture_path);
      sort_rows(lb, sort_column.empty() ? 0 : column_index(lb, sort_column));
      out << render_leaderboard(lb, fmt);
    } else if (*gc) {
      const std::uint64_t probe_seed = seed_given ? cfg.seed : kGradCheckSeed;
      auto checks = check_kernels(probe_seed, eps);
      for (auto& c : check_model(probe_seed, eps)) checks.push_back(std::move(c));
      bool ok = true;
      out << "check\tmax_rel_error\tstatus\n";
      for (const auto& c : checks) {
        const bool pass = c.result.max_rel_error < tolerance;
        ok = ok && pass;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", c.result.max_rel_error);
        out << c.name << '\t' << buf << '\t' << (pass ? "pass" : "FAIL") << '\n';
      }
      return ok ? kExitOk : kExitData;
    }
  } catch (const Error& e) {
    err << "radllama: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "radllama: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace radllama
