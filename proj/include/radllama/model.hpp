// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "radllama/checkpoint.hpp"
#include "radllama/error.hpp"
#include "radllama/rng.hpp"
#include "radllama/tensor.hpp"
#include "radllama/tokenizer.hpp"

namespace radllama {

/// Llama-family decoder: RMSNorm, SwiGLU feed-forward, rotary positions,
/// untied input embedding and output head.
struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 64;
  std::size_t vocab_size = Vocab::kBaseSize;
  std::size_t max_seq_len = 64;
  double rope_base = 10000.0;
  double init_std = 0.02;

  void validate() const {
    auto bad = [](const std::string& why) {
      return Error(ErrorKind::kBadConfig, why);
    };
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) {
      throw bad("dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw bad("d_model " + std::to_string(d_model) +
                " not divisible by n_heads " + std::to_string(n_heads));
    }
    if ((d_model / n_heads) % 2 != 0) throw bad("head dim must be even for rotary");
    if (max_seq_len < 2) throw bad("max_seq_len must be >= 2");
    if (vocab_size == 0) throw bad("vocab_size must be positive");
  }

  /// embed + layers * (2 gains + q,k,v,o + gate,up,down) + final gain + head
  std::size_t parameter_count() const {
    const std::size_t d = d_model;
    return vocab_size * d + n_layers * (2 * d + 4 * d * d + 3 * d * d_ff) + d +
           vocab_size * d;
  }

  bool operator==(const ModelConfig&) const = default;
};

inline const std::set<std::string>& lora_target_names() {
  static const std::set<std::string> names{"q_proj", "k_proj", "v_proj", "o_proj"};
  return names;
}

struct LoraConfig {
  std::size_t r = 8;
  double alpha = 16.0;
  double dropout = 0.05;
  std::vector<std::string> targets{"q_proj", "v_proj"};

  double scaling() const { return alpha / static_cast<double>(r); }

  void validate() const {
    if (r < 1) throw Error(ErrorKind::kBadConfig, "lora r must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) {
      throw Error(ErrorKind::kBadConfig, "lora dropout must be in [0, 1)");
    }
    for (const auto& t : targets) {
      if (!lora_target_names().contains(t)) {
        throw Error(ErrorKind::kUnknownTarget, "no projection named '" + t + "'");
      }
    }
  }

  bool targets_contains(std::string_view name) const {
    return std::find(targets.begin(), targets.end(), name) != targets.end();
  }

  bool operator==(const LoraConfig&) const = default;
};

/// Low-rank update scaling * B A on a frozen weight [d_out, d_in].
struct LoraAdapter {
  Tensor a;  // [r, d_in]
  Tensor b;  // [d_out, r]
  double scaling = 1.0;
  double dropout = 0.0;
};

struct Linear {
  Tensor weight;  // [d_out, d_in]
  std::optional<LoraAdapter> lora;
};

struct DecoderLayer {
  Tensor attn_norm;
  Linear q_proj, k_proj, v_proj, o_proj;
  Tensor ffn_norm;
  Linear gate_proj, up_proj, down_proj;

  Linear* projection(std::string_view name) {
    if (name == "q_proj") return &q_proj;
    if (name == "k_proj") return &k_proj;
    if (name == "v_proj") return &v_proj;
    if (name == "o_proj") return &o_proj;
    return nullptr;
  }
};

namespace detail {

inline Tensor clone_param(const Tensor& t) {
  Tensor c = t.detach();
  c.set_requires_grad(t.requires_grad());
  return c;
}

inline Linear clone_linear(const Linear& l) {
  Linear c{clone_param(l.weight), std::nullopt};
  if (l.lora) {
    c.lora = LoraAdapter{clone_param(l.lora->a), clone_param(l.lora->b),
                         l.lora->scaling, l.lora->dropout};
  }
  return c;
}

}  // namespace detail

class Model {
 public:
  Model() = default;

  /// All weights normal(0, init_std), norm gains 1. Each tensor draws from
  /// its own stream keyed by name.
  static Model init(const ModelConfig& config, const Rng& rng) {
    config.validate();
    Model m;
    m.config_ = config;
    const std::size_t d = config.d_model;
    auto normal = [&](const std::string& name, Shape shape) {
      Rng r = rng.split(name);
      return seeded_init(std::move(shape), InitDist::normal(0.0, config.init_std),
                         r, true);
    };
    auto ones = [](std::size_t n) {
      return Tensor({n}, std::vector<double>(n, 1.0), true);
    };
    m.embed_ = normal("embed", {config.vocab_size, d});
    for (std::size_t i = 0; i < config.n_layers; ++i) {
      const std::string p = "layers." + std::to_string(i) + ".";
      DecoderLayer l;
      l.attn_norm = ones(d);
      l.q_proj.weight = normal(p + "q_proj.weight", {d, d});
      l.k_proj.weight = normal(p + "k_proj.weight", {d, d});
      l.v_proj.weight = normal(p + "v_proj.weight", {d, d});
      l.o_proj.weight = normal(p + "o_proj.weight", {d, d});
      l.ffn_norm = ones(d);
      l.gate_proj.weight = normal(p + "gate_proj.weight", {config.d_ff, d});
      l.up_proj.weight = normal(p + "up_proj.weight", {config.d_ff, d});
      l.down_proj.weight = normal(p + "down_proj.weight", {d, config.d_ff});
      m.layers_.push_back(std::move(l));
    }
    m.final_norm_ = ones(d);
    m.lm_head_ = normal("lm_head", {config.vocab_size, d});
    return m;
  }

  Model clone() const {
    Model m;
    m.config_ = config_;
    m.lora_ = lora_;
    m.embed_ = detail::clone_param(embed_);
    for (const auto& l : layers_) {
      m.layers_.push_back({detail::clone_param(l.attn_norm),
                           detail::clone_linear(l.q_proj),
                           detail::clone_linear(l.k_proj),
                           detail::clone_linear(l.v_proj),
                           detail::clone_linear(l.o_proj),
                           detail::clone_param(l.ffn_norm),
                           detail::clone_linear(l.gate_proj),
                           detail::clone_linear(l.up_proj),
                           detail::clone_linear(l.down_proj)});
    }
    m.final_norm_ = detail::clone_param(final_norm_);
    m.lm_head_ = detail::clone_param(lm_head_);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  const std::optional<LoraConfig>& lora_config() const { return lora_; }
  bool has_adapters() const { return lora_.has_value(); }

  const std::vector<DecoderLayer>& layers() const { return layers_; }
  std::vector<DecoderLayer>& layers() { return layers_; }

  /// Logits [T, vocab]. Position t sees tokens 0..t only. Adapter dropout
  /// is drawn from `dropout_rng` and is active only in train mode.
  Tensor forward(std::span<const int> tokens, bool train_mode,
                 const Rng& dropout_rng = Rng(0)) const {
    return matmul_nt(hidden(tokens, train_mode, dropout_rng), lm_head_);
  }

  /// Logits for the listed positions only, one row per entry of `rows`.
  /// Equal to the matching rows of forward(); the head is the widest matmul,
  /// so training computes it just where the loss looks.
  Tensor forward_rows(std::span<const int> tokens, std::span<const int> rows,
                      bool train_mode, const Rng& dropout_rng = Rng(0)) const {
    return matmul_nt(embedding(hidden(tokens, train_mode, dropout_rng), rows), lm_head_);
  }

  /// Final-normed hidden states [T, d_model].
  Tensor hidden(std::span<const int> tokens, bool train_mode,
                const Rng& dropout_rng = Rng(0)) const {
    if (tokens.empty()) {
      throw Error(ErrorKind::kSequenceTooLong, "empty token sequence");
    }
    if (tokens.size() > config_.max_seq_len) {
      throw Error(ErrorKind::kSequenceTooLong,
                  std::to_string(tokens.size()) + " tokens > max_seq_len " +
                      std::to_string(config_.max_seq_len));
    }
    const std::size_t h = config_.n_heads;
    const std::size_t hd = config_.d_model / h;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor x = embedding(embed_, tokens);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const DecoderLayer& l = layers_[li];
      auto proj = [&](const Tensor& in, const Linear& lin, std::uint64_t slot) {
        return apply_linear(in, lin, train_mode,
                            dropout_rng.split(li * 16 + slot));
      };
      Tensor hn = mul(rms_norm(x), l.attn_norm);
      Tensor q = rope(proj(hn, l.q_proj, 0), h, config_.rope_base);
      Tensor k = rope(proj(hn, l.k_proj, 1), h, config_.rope_base);
      Tensor v = proj(hn, l.v_proj, 2);
      std::vector<Tensor> heads;
      heads.reserve(h);
      for (std::size_t hi = 0; hi < h; ++hi) {
        Tensor qh = slice(q, 1, hi * hd, (hi + 1) * hd);
        Tensor kh = slice(k, 1, hi * hd, (hi + 1) * hd);
        Tensor vh = slice(v, 1, hi * hd, (hi + 1) * hd);
        Tensor att = softmax(causal_mask(scale(matmul_nt(qh, kh), att_scale)));
        heads.push_back(matmul(att, vh));
      }
      x = add(x, proj(concat(heads, 1), l.o_proj, 3));
      Tensor fn = mul(rms_norm(x), l.ffn_norm);
      Tensor gated = mul(silu(proj(fn, l.gate_proj, 4)), proj(fn, l.up_proj, 5));
      x = add(x, proj(gated, l.down_proj, 6));
    }
    return mul(rms_norm(x), final_norm_);
  }

  /// Freezes every base weight and adds zero-initialized-B adapters on the
  /// configured targets. A ~ normal(0, 1/r).
  void attach_lora(const LoraConfig& lc, const Rng& rng) {
    lc.validate();
    if (lora_) throw Error(ErrorKind::kBadConfig, "adapters already attached");
    for (const auto& t : lc.targets) {
      if (!layers_.empty() && layers_[0].projection(t) == nullptr) {
        throw Error(ErrorKind::kUnknownTarget, "no projection named '" + t + "'");
      }
    }
    for_each_base([](const std::string&, Tensor& t) { t.set_requires_grad(false); });
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (const auto& t : lc.targets) {
        Linear* lin = layers_[i].projection(t);
        const std::size_t d_out = lin->weight.dim(0), d_in = lin->weight.dim(1);
        Rng r = rng.split(adapter_name(i, t, "A"));
        LoraAdapter ad;
        ad.a = seeded_init({lc.r, d_in},
                           InitDist::normal(0.0, 1.0 / static_cast<double>(lc.r)),
                           r, true);
        ad.b = Tensor::zeros({d_out, lc.r}, true);
        ad.scaling = lc.scaling();
        ad.dropout = lc.dropout;
        lin->lora = std::move(ad);
      }
    }
    lora_ = lc;
  }

  /// Returns a plain model with W + scaling * B A folded into each target.
  /// Throws AlreadyMerged when no adapters are attached.
  Model merge_lora() const {
    if (!lora_) {
      throw Error(ErrorKind::kAlreadyMerged, "no adapters attached (already merged?)");
    }
    Model m = clone();
    for (auto& l : m.layers_) {
      for (const auto& t : lora_->targets) {
        Linear* lin = l.projection(t);
        const LoraAdapter& ad = *lin->lora;
        const std::size_t d_out = lin->weight.dim(0), d_in = lin->weight.dim(1);
        const std::size_t r = ad.a.dim(0);
        std::vector<double> ba(d_out * d_in, 0.0);
        kernels::gemm_nn(ad.b.data().data(), ad.a.data().data(), ba.data(), d_out,
                         r, d_in);
        auto w = lin->weight.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += ad.scaling * ba[i];
        lin->lora.reset();
      }
    }
    m.lora_.reset();
    return m;
  }

  /// Parameters that currently receive gradients, in a fixed order.
  std::vector<Tensor> trainable_parameters() const {
    std::vector<Tensor> out;
    for (const auto& nt : named_parameters()) {
      if (nt.tensor.requires_grad()) out.push_back(nt.tensor);
    }
    return out;
  }

  std::vector<NamedTensor> named_parameters() const {
    std::vector<NamedTensor> out = base_parameters();
    auto ad = adapter_parameters();
    out.insert(out.end(), ad.begin(), ad.end());
    return out;
  }

  std::vector<NamedTensor> base_parameters() const {
    std::vector<NamedTensor> out;
    const_cast<Model*>(this)->for_each_base(
        [&](const std::string& n, Tensor& t) { out.push_back({n, t}); });
    return out;
  }

  std::vector<NamedTensor> adapter_parameters() const {
    std::vector<NamedTensor> out;
    if (!lora_) return out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      for (const auto& t : lora_->targets) {
        const Linear* lin = const_cast<DecoderLayer&>(layers_[i]).projection(t);
        out.push_back({adapter_name(i, t, "A"), lin->lora->a});
        out.push_back({adapter_name(i, t, "B"), lin->lora->b});
      }
    }
    return out;
  }

  std::size_t adapter_parameter_count() const {
    std::size_t n = 0;
    for (const auto& nt : adapter_parameters()) n += nt.tensor.numel();
    return n;
  }

  /// FNV-1a over the bit patterns of all base weights.
  std::uint64_t base_checksum() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& nt : base_parameters()) {
      for (double v : nt.tensor.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
          h ^= (bits >> (8 * i)) & 0xFF;
          h *= 0x100000001B3ULL;
        }
      }
    }
    return h;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    write_config_meta(c);
    c.meta["kind"] = "model";
    c.tensors = base_parameters();
    return c;
  }

  /// Adapter-only checkpoint: A/B matrices plus the LoRA config.
  Checkpoint adapter_checkpoint() const {
    if (!lora_) throw Error(ErrorKind::kBadConfig, "model has no adapters");
    Checkpoint c;
    write_config_meta(c);
    c.meta["kind"] = "adapter";
    c.meta["lora_r"] = std::to_string(lora_->r);
    c.meta["lora_alpha"] = format_double(lora_->alpha);
    c.meta["lora_dropout"] = format_double(lora_->dropout);
    std::string targets;
    for (const auto& t : lora_->targets) targets += (targets.empty() ? "" : ",") + t;
    c.meta["lora_targets"] = targets;
    c.meta["adapter_param_count"] = std::to_string(adapter_parameter_count());
    c.tensors = adapter_parameters();
    return c;
  }

  static Model from_checkpoint(const Checkpoint& c) {
    if (auto it = c.meta.find("kind"); it == c.meta.end() || it->second != "model") {
      throw Error(ErrorKind::kMalformedRecord, "not a model checkpoint");
    }
    Model m = init(read_config_meta(c), Rng(0));
    m.for_each_base([&](const std::string& name, Tensor& t) {
      copy_from(c, name, t);
    });
    return m;
  }

  /// Attaches adapters stored in an adapter checkpoint onto this base.
  void load_adapters(const Checkpoint& c) {
    if (auto it = c.meta.find("kind"); it == c.meta.end() || it->second != "adapter") {
      throw Error(ErrorKind::kMalformedRecord, "not an adapter checkpoint");
    }
    if (read_config_meta(c) != config_) {
      throw Error(ErrorKind::kBadConfig, "adapter was trained for another model shape");
    }
    LoraConfig lc;
    lc.r = std::stoul(meta_at(c, "lora_r"));
    lc.alpha = std::stod(meta_at(c, "lora_alpha"));
    lc.dropout = std::stod(meta_at(c, "lora_dropout"));
    lc.targets.clear();
    std::istringstream ts(meta_at(c, "lora_targets"));
    for (std::string t; std::getline(ts, t, ',');) lc.targets.push_back(t);
    attach_lora(lc, Rng(0));
    for (auto& nt : adapter_parameters()) copy_from(c, nt.name, nt.tensor);
  }

 private:
  static std::string adapter_name(std::size_t layer, const std::string& target,
                                  const char* which) {
    return "layers." + std::to_string(layer) + "." + target + ".lora_" + which;
  }

  template <typename F>
  void for_each_base(F&& f) {
    f("embed", embed_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = "layers." + std::to_string(i) + ".";
      DecoderLayer& l = layers_[i];
      f(p + "attn_norm", l.attn_norm);
      f(p + "q_proj.weight", l.q_proj.weight);
      f(p + "k_proj.weight", l.k_proj.weight);
      f(p + "v_proj.weight", l.v_proj.weight);
      f(p + "o_proj.weight", l.o_proj.weight);
      f(p + "ffn_norm", l.ffn_norm);
      f(p + "gate_proj.weight", l.gate_proj.weight);
      f(p + "up_proj.weight", l.up_proj.weight);
      f(p + "down_proj.weight", l.down_proj.weight);
    }
    f("final_norm", final_norm_);
    f("lm_head", lm_head_);
  }

  static Tensor apply_linear(const Tensor& x, const Linear& lin, bool train_mode,
                             Rng rng) {
    Tensor y = matmul_nt(x, lin.weight);
    if (!lin.lora) return y;
    const LoraAdapter& ad = *lin.lora;
    Tensor xin = train_mode ? dropout(x, ad.dropout, rng) : x;
    return add(y, scale(matmul_nt(matmul_nt(xin, ad.a), ad.b), ad.scaling));
  }

  static std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }

  static const std::string& meta_at(const Checkpoint& c, const std::string& key) {
    auto it = c.meta.find(key);
    if (it == c.meta.end()) {
      throw Error(ErrorKind::kMalformedRecord, "checkpoint meta lacks '" + key + "'");
    }
    return it->second;
  }

  void write_config_meta(Checkpoint& c) const {
    c.meta["d_model"] = std::to_string(config_.d_model);
    c.meta["n_heads"] = std::to_string(config_.n_heads);
    c.meta["n_layers"] = std::to_string(config_.n_layers);
    c.meta["d_ff"] = std::to_string(config_.d_ff);
    c.meta["vocab_size"] = std::to_string(config_.vocab_size);
    c.meta["max_seq_len"] = std::to_string(config_.max_seq_len);
    c.meta["rope_base"] = format_double(config_.rope_base);
    c.meta["param_count"] = std::to_string(config_.parameter_count());
    c.meta["param_count_formula"] = "2*V*d + L*(2*d + 4*d^2 + 3*d*d_ff) + d";
  }

  static ModelConfig read_config_meta(const Checkpoint& c) {
    ModelConfig mc;
    try {
      mc.d_model = std::stoul(meta_at(c, "d_model"));
      mc.n_heads = std::stoul(meta_at(c, "n_heads"));
      mc.n_layers = std::stoul(meta_at(c, "n_layers"));
      mc.d_ff = std::stoul(meta_at(c, "d_ff"));
      mc.vocab_size = std::stoul(meta_at(c, "vocab_size"));
      mc.max_seq_len = std::stoul(meta_at(c, "max_seq_len"));
      mc.rope_base = std::stod(meta_at(c, "rope_base"));
    } catch (const std::logic_error& e) {
      throw Error(ErrorKind::kMalformedRecord, std::string("checkpoint meta: ") + e.what());
    }
    return mc;
  }

  static void copy_from(const Checkpoint& c, const std::string& name, Tensor& dst) {
    const Tensor* src = c.find(name);
    if (src == nullptr) {
      throw Error(ErrorKind::kMalformedRecord, "checkpoint lacks tensor '" + name + "'");
    }
    if (src->shape() != dst.shape()) {
      throw Error(ErrorKind::kShapeMismatch,
                  name + " " + shape_str(src->shape()) + " vs " + shape_str(dst.shape()));
    }
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
  }

  ModelConfig config_;
  Tensor embed_;
  std::vector<DecoderLayer> layers_;
  Tensor final_norm_;
  Tensor lm_head_;
  std::optional<LoraConfig> lora_;
};

inline Model init_model(const ModelConfig& config, const Rng& rng) {
  return Model::init(config, rng);
}

/// Copy of `base` with adapters attached; `base` is left untouched.
inline Model attach_lora(const Model& base, const LoraConfig& lc, const Rng& rng) {
  Model m = base.clone();
  m.attach_lora(lc, rng);
  return m;
}

inline Model merge_lora(const Model& lora_model) { return lora_model.merge_lora(); }

struct GenerateParams {
  std::size_t max_new = 64;
  double temperature = 0.0;
  int stop_id = Vocab::kEos;
  std::uint64_t seed = 0;
};

/// Autoregressive decoding without a cache. temperature 0 is greedy argmax
/// with ties to the lowest id. Stops before EOS / stop_id, after max_new
/// tokens, or when the context is full. The prompt is not returned.
inline std::vector<int> generate(const Model& model, std::span<const int> prompt,
                                 const GenerateParams& params) {
  const std::size_t max_len = model.config().max_seq_len;
  if (prompt.empty()) throw Error(ErrorKind::kPromptTooLong, "empty prompt");
  if (prompt.size() > max_len - 1) {
    throw Error(ErrorKind::kPromptTooLong,
                std::to_string(prompt.size()) + " prompt tokens leave no room in " +
                    std::to_string(max_len));
  }
  NoGradGuard ng;
  Rng rng(params.seed);
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> out;
  while (out.size() < params.max_new && seq.size() < max_len) {
    const int last[1] = {static_cast<int>(seq.size() - 1)};
    const Tensor logits = model.forward_rows(seq, last, false);
    const std::size_t v = logits.dim(1);
    const auto row = logits.data();
    int next = 0;
    if (params.temperature <= 0.0) {
      next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      const double mx = *std::max_element(row.begin(), row.end());
      std::vector<double> p(v);
      double z = 0.0;
      for (std::size_t i = 0; i < v; ++i) {
        p[i] = std::exp((row[i] - mx) / params.temperature);
        z += p[i];
      }
      double u = rng.uniform() * z;
      next = static_cast<int>(v - 1);
      for (std::size_t i = 0; i < v; ++i) {
        if (u < p[i]) {
          next = static_cast<int>(i);
          break;
        }
        u -= p[i];
      }
    }
    if (next == Vocab::kEos || next == params.stop_id) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

}  // namespace radllama
