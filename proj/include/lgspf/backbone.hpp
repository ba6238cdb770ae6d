// SPDX-License-Identifier: Apache-2.0
#pragma once

// Word-level vocabulary and a small pre-norm decoder-only language model with
// LoRA adapters on the query and value projections.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "lgspf/autodiff.hpp"
#include "lgspf/rng.hpp"

namespace lgspf::lm {

using TokenId = std::uint32_t;

// Splits text into vocabulary pieces: an optional single leading space glued
// to a letter run, one non-ASCII run, or one other character. Concatenating
// the pieces gives back the input.
std::vector<std::string> pretokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  // Base pieces keep their order; specials get ids base.size() .. +m-1.
  Vocabulary(std::vector<std::string> base, std::vector<std::string> specials);
  // Base pieces are the sorted distinct pieces of `texts`.
  static Vocabulary from_corpus(const std::vector<std::string>& texts,
                                std::vector<std::string> specials);

  std::size_t size() const { return pieces_.size(); }
  std::size_t base_size() const { return base_size_; }
  std::size_t special_count() const { return pieces_.size() - base_size_; }
  TokenId special(std::size_t j) const;
  bool is_special(TokenId id) const { return id >= base_size_ && id < pieces_.size(); }
  std::optional<TokenId> find_special(std::string_view surface) const;
  const std::string& piece(TokenId id) const { return pieces_.at(id); }
  std::optional<TokenId> find(std::string_view piece) const;

  // Text never produces special ids. Throws Error naming the first piece
  // that is not in the vocabulary.
  std::vector<TokenId> encode(std::string_view text) const;
  bool can_encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  bool operator==(const Vocabulary& other) const {
    return pieces_ == other.pieces_ && base_size_ == other.base_size_;
  }

 private:
  std::vector<std::string> pieces_;
  std::size_t base_size_ = 0;
  std::unordered_map<std::string, TokenId> index_;  // base pieces only
};

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t max_seq_len = 256;
  std::size_t lora_rank = 4;  // 0 disables adapters
  double lora_alpha = 8.0;
  double rope_base = 10000.0;
  double norm_eps = 1e-6;

  void validate() const;
  nlohmann::json to_json() const;
  static DecoderConfig from_json(const nlohmann::json& j);
};

// delta W = (alpha / r) * B A, with B zero at initialization.
struct LoraAdapter {
  std::size_t layer = 0;
  std::string projection;  // "q" or "v"
  Parameter a;             // r x d_in
  Parameter b;             // d_out x r
  double scaling = 0.0;
};

std::vector<Parameter*> lora_trainable(std::vector<LoraAdapter>& adapters);

class DecoderModel {
 public:
  DecoderModel() = default;
  DecoderModel(const DecoderConfig& cfg, std::size_t vocab_size, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return embedding_.value.rows(); }
  std::size_t dim() const { return cfg_.d_model; }

  Parameter& embedding() { return embedding_; }
  const Parameter& embedding() const { return embedding_; }
  std::vector<LoraAdapter>& adapters() { return adapters_; }

  // Rows of the embedding table; throws on ids outside the vocabulary.
  Matrix embed(std::span<const TokenId> tokens) const;
  ad::Var embed(ad::Tape& tape, std::span<const TokenId> tokens);

  // Final residual stream for sequences stacked by `layout`.
  ad::Var hidden(ad::Tape& tape, ad::Var inputs, const ad::SeqLayout& layout,
                 bool use_adapters = true);
  // Final norm followed by the tied output projection.
  ad::Var head(ad::Tape& tape, ad::Var hidden_rows);
  // Logits for a single sequence, one row per position.
  Matrix forward_logits(const Matrix& inputs, bool use_adapters = true);

  // Everything except the adapters.
  std::vector<Parameter*> base_parameters();
  // Base parameters then adapters, in a fixed order.
  std::vector<Parameter*> parameters();

  // Number of calls to hidden(); audits which paths touch the LM.
  std::size_t forward_count() const { return forward_count_; }

 private:
  struct Block {
    Parameter attn_norm, wq, wk, wv, wo, mlp_norm, w_up, w_down;
  };

  ad::Var project(ad::Tape& tape, ad::Var x, Parameter& w, LoraAdapter* adapter);
  LoraAdapter* find_adapter(std::size_t layer, const char* projection);

  DecoderConfig cfg_;
  Parameter embedding_;
  std::vector<Block> blocks_;
  Parameter final_norm_;
  std::vector<LoraAdapter> adapters_;
  std::size_t forward_count_ = 0;
};

}  // namespace lgspf::lm
