// SPDX-License-Identifier: Apache-2.0
#include "lgspf/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace lgspf::lm {

using nlohmann::json;

namespace {

bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(unsigned char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; }

// Length of the unit starting at i: a letter run, a non-ASCII run, or one char.
std::size_t unit_length(std::string_view text, std::size_t i) {
  const auto c = static_cast<unsigned char>(text[i]);
  std::size_t j = i + 1;
  if (is_alpha(c)) {
    while (j < text.size() && is_alpha(static_cast<unsigned char>(text[j]))) ++j;
  } else if (c >= 0x80) {
    while (j < text.size() && static_cast<unsigned char>(text[j]) >= 0x80) ++j;
  }
  return j - i;
}

}  // namespace

std::vector<std::string> pretokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c == ' ' && i + 1 < text.size() && !is_space(static_cast<unsigned char>(text[i + 1]))) {
      len = 1 + unit_length(text, i + 1);
    } else if (!is_space(c)) {
      len = unit_length(text, i);
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> base, std::vector<std::string> specials)
    : pieces_(std::move(base)), base_size_(pieces_.size()) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw Error("Vocabulary: empty base piece");
    if (!index_.emplace(pieces_[i], static_cast<TokenId>(i)).second) {
      throw Error("Vocabulary: duplicate base piece '" + pieces_[i] + "'");
    }
  }
  std::set<std::string> seen;
  for (auto& s : specials) {
    if (s.empty() || !seen.insert(s).second) {
      throw Error("Vocabulary: special tokens must be distinct and non-empty");
    }
    pieces_.push_back(std::move(s));
  }
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::string>& texts,
                                   std::vector<std::string> specials) {
  std::set<std::string> pieces;
  for (const auto& t : texts) {
    for (auto& p : pretokenize(t)) pieces.insert(std::move(p));
  }
  return Vocabulary(std::vector<std::string>(pieces.begin(), pieces.end()), std::move(specials));
}

TokenId Vocabulary::special(std::size_t j) const {
  if (j >= special_count()) {
    throw Error("Vocabulary: special token " + std::to_string(j) + " of " +
                std::to_string(special_count()));
  }
  return static_cast<TokenId>(base_size_ + j);
}

std::optional<TokenId> Vocabulary::find_special(std::string_view surface) const {
  for (std::size_t i = base_size_; i < pieces_.size(); ++i) {
    if (pieces_[i] == surface) return static_cast<TokenId>(i);
  }
  return std::nullopt;
}

std::optional<TokenId> Vocabulary::find(std::string_view piece) const {
  const auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& p : pretokenize(text)) {
    const auto id = find(p);
    if (!id) throw Error("Vocabulary: out-of-vocabulary piece '" + p + "'");
    out.push_back(*id);
  }
  return out;
}

bool Vocabulary::can_encode(std::string_view text) const {
  for (const auto& p : pretokenize(text)) {
    if (!find(p)) return false;
  }
  return true;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += piece(id);
  return out;
}

json Vocabulary::to_json() const {
  return json{{"base", std::vector<std::string>(pieces_.begin(), pieces_.begin() + static_cast<std::ptrdiff_t>(base_size_))},
              {"specials", std::vector<std::string>(pieces_.begin() + static_cast<std::ptrdiff_t>(base_size_), pieces_.end())}};
}

Vocabulary Vocabulary::from_json(const json& j) {
  try {
    return Vocabulary(j.at("base").get<std::vector<std::string>>(),
                      j.at("specials").get<std::vector<std::string>>());
  } catch (const json::exception& ex) {
    throw Error(std::string("vocabulary: ") + ex.what());
  }
}

void DecoderConfig::validate() const {
  if (layers == 0 || heads == 0 || d_model == 0 || d_ff == 0 || max_seq_len == 0) {
    throw Error("DecoderConfig: sizes must be positive");
  }
  if (d_model % heads != 0) {
    throw Error("DecoderConfig: d_model " + std::to_string(d_model) +
                " is not divisible by heads " + std::to_string(heads));
  }
  if ((d_model / heads) % 2 != 0) throw Error("DecoderConfig: head width must be even");
  if (lora_rank > 0 && !(lora_alpha > 0.0)) throw Error("DecoderConfig: lora_alpha must be positive");
}

json DecoderConfig::to_json() const {
  return json{{"layers", layers},         {"heads", heads},           {"d_model", d_model},
              {"d_ff", d_ff},             {"max_seq_len", max_seq_len}, {"lora_rank", lora_rank},
              {"lora_alpha", lora_alpha}, {"rope_base", rope_base},   {"norm_eps", norm_eps}};
}

DecoderConfig DecoderConfig::from_json(const json& j) {
  DecoderConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.lora_rank = j.value("lora_rank", c.lora_rank);
  c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
  c.rope_base = j.value("rope_base", c.rope_base);
  c.norm_eps = j.value("norm_eps", c.norm_eps);
  c.validate();
  return c;
}

std::vector<Parameter*> lora_trainable(std::vector<LoraAdapter>& adapters) {
  std::vector<Parameter*> out;
  for (auto& a : adapters) {
    out.push_back(&a.a);
    out.push_back(&a.b);
  }
  return out;
}

DecoderModel::DecoderModel(const DecoderConfig& cfg, std::size_t vocab_size, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model;
  auto dense = [&](const std::string& name, std::size_t out, std::size_t in) {
    return Parameter(name, normal_matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  };
  embedding_ = dense("lm/embed/W_e", vocab_size, d);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "lm/" + std::to_string(l) + "/";
    Block b;
    b.attn_norm = Parameter(p + "attn_norm", Matrix(1, d, 1.0));
    b.wq = dense(p + "wq", d, d);
    b.wk = dense(p + "wk", d, d);
    b.wv = dense(p + "wv", d, d);
    b.wo = dense(p + "wo", d, d);
    b.mlp_norm = Parameter(p + "mlp_norm", Matrix(1, d, 1.0));
    b.w_up = dense(p + "w_up", cfg_.d_ff, d);
    b.w_down = dense(p + "w_down", d, cfg_.d_ff);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = Parameter("lm/final/norm", Matrix(1, d, 1.0));
  if (cfg_.lora_rank > 0) {
    const double scaling = cfg_.lora_alpha / static_cast<double>(cfg_.lora_rank);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      for (const char* proj : {"q", "v"}) {
        const std::string p = "lora/" + std::to_string(l) + "." + proj + "/";
        LoraAdapter a;
        a.layer = l;
        a.projection = proj;
        a.a = dense(p + "A", cfg_.lora_rank, d);
        a.b = Parameter(p + "B", Matrix(d, cfg_.lora_rank, 0.0));
        a.scaling = scaling;
        adapters_.push_back(std::move(a));
      }
    }
  }
}

Matrix DecoderModel::embed(std::span<const TokenId> tokens) const {
  Matrix out(tokens.size(), dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab_size()) {
      throw Error("embed: token id " + std::to_string(tokens[i]) + " outside vocabulary of " +
                  std::to_string(vocab_size()));
    }
    const auto src = embedding_.value.row(tokens[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

ad::Var DecoderModel::embed(ad::Tape& tape, std::span<const TokenId> tokens) {
  if (!embedding_.trainable || !tape.grad_enabled()) return tape.constant(embed(tokens));
  std::vector<std::size_t> rows(tokens.begin(), tokens.end());
  for (std::size_t r : rows) {
    if (r >= vocab_size()) throw Error("embed: token id out of range");
  }
  return ad::gather_rows(tape.parameter(embedding_), std::move(rows));
}

LoraAdapter* DecoderModel::find_adapter(std::size_t layer, const char* projection) {
  for (auto& a : adapters_) {
    if (a.layer == layer && a.projection == projection) return &a;
  }
  return nullptr;
}

ad::Var DecoderModel::project(ad::Tape& tape, ad::Var x, Parameter& w, LoraAdapter* adapter) {
  ad::Var base = ad::matmul_nt(x, tape.parameter(w));
  if (adapter == nullptr) return base;
  LoraAdapter& a = *adapter;
  ad::Var low = ad::matmul_nt(ad::matmul_nt(x, tape.parameter(a.a)), tape.parameter(a.b));
  return ad::add(base, ad::scale(low, a.scaling));
}

ad::Var DecoderModel::hidden(ad::Tape& tape, ad::Var inputs, const ad::SeqLayout& layout,
                             bool use_adapters) {
  ++forward_count_;
  if (inputs.cols() != dim()) {
    throw Error("DecoderModel: input width " + std::to_string(inputs.cols()) + " != d_model " +
                std::to_string(dim()));
  }
  if (layout.total_rows() != inputs.rows()) {
    throw Error("DecoderModel: layout covers " + std::to_string(layout.total_rows()) +
                " rows, input has " + std::to_string(inputs.rows()));
  }
  if (layout.max_length() > cfg_.max_seq_len) {
    throw Error("DecoderModel: sequence length " + std::to_string(layout.max_length()) +
                " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  }
  ad::Var x = inputs;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    Block& b = blocks_[l];
    ad::Var h = ad::rms_norm(x, tape.parameter(b.attn_norm), cfg_.norm_eps);
    ad::Var q = project(tape, h, b.wq, use_adapters ? find_adapter(l, "q") : nullptr);
    ad::Var k = ad::matmul_nt(h, tape.parameter(b.wk));
    ad::Var v = project(tape, h, b.wv, use_adapters ? find_adapter(l, "v") : nullptr);
    q = ad::rope(q, layout, cfg_.heads, cfg_.rope_base);
    k = ad::rope(k, layout, cfg_.heads, cfg_.rope_base);
    ad::Var att = ad::causal_attention(q, k, v, layout, cfg_.heads);
    x = ad::add(x, ad::matmul_nt(att, tape.parameter(b.wo)));
    h = ad::rms_norm(x, tape.parameter(b.mlp_norm), cfg_.norm_eps);
    ad::Var up = ad::silu(ad::matmul_nt(h, tape.parameter(b.w_up)));
    x = ad::add(x, ad::matmul_nt(up, tape.parameter(b.w_down)));
  }
  return x;
}

ad::Var DecoderModel::head(ad::Tape& tape, ad::Var hidden_rows) {
  ad::Var h = ad::rms_norm(hidden_rows, tape.parameter(final_norm_), cfg_.norm_eps);
  return ad::matmul_nt(h, tape.parameter(embedding_));
}

Matrix DecoderModel::forward_logits(const Matrix& inputs, bool use_adapters) {
  ad::Tape tape(false);
  ad::SeqLayout layout;
  layout.append(inputs.rows());
  return head(tape, hidden(tape, tape.view(inputs), layout, use_adapters)).value();
}

std::vector<Parameter*> DecoderModel::base_parameters() {
  std::vector<Parameter*> out{&embedding_};
  for (auto& b : blocks_) {
    for (Parameter* p : {&b.attn_norm, &b.wq, &b.wk, &b.wv, &b.wo, &b.mlp_norm, &b.w_up, &b.w_down}) {
      out.push_back(p);
    }
  }
  out.push_back(&final_norm_);
  return out;
}

std::vector<Parameter*> DecoderModel::parameters() {
  auto out = base_parameters();
  for (Parameter* p : lora_trainable(adapters_)) out.push_back(p);
  return out;
}

}  // namespace lgspf::lm
