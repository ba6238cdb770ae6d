// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hybrid prompt templates, soft-token injection and the text-flattened
// hard-prompt baseline.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lgspf/autodiff.hpp"
#include "lgspf/backbone.hpp"
#include "lgspf/relgraph.hpp"

namespace lgspf::prompt {

// Answer words the model is trained to emit.
inline constexpr std::string_view kFraudWord = "fraud";
inline constexpr std::string_view kNormalWord = "normal";

// "<|graph_pad_relation{j+1}|>"
std::string special_token_name(std::size_t relation);

struct RelationSlot {
  std::string token;  // special token surface form
  std::string description;
  bool operator==(const RelationSlot&) const = default;
};

// Rendered as: instruction, then per slot `token: description\n`, then question.
// With semantics off only the slot tokens and question_stub remain.
struct PromptTemplate {
  std::string instruction;
  std::vector<RelationSlot> relations;
  std::string question;
  std::string question_stub = "A:";

  void validate() const;
  nlohmann::json to_json() const;
  static PromptTemplate from_json(const nlohmann::json& j);
  bool operator==(const PromptTemplate&) const = default;
};

PromptTemplate read_template(const std::filesystem::path& path);
void write_template(const PromptTemplate& t, const std::filesystem::path& path);

// Keeps instruction and question; slots become the graph's relations in order.
PromptTemplate with_graph_relations(const PromptTemplate& base, const graph::RelationalGraph& g);
// Only slot j survives; the instruction is kept verbatim.
PromptTemplate single_view(const PromptTemplate& t, std::size_t j);

struct AssembledPrompt {
  std::vector<lm::TokenId> tokens;
  std::vector<std::size_t> positions;  // index of each slot's special token
  std::vector<std::size_t> relations;  // relation id of each slot

  std::size_t length() const { return tokens.size(); }
  bool operator==(const AssembledPrompt&) const = default;
};

// Relation id of a slot is its special token's offset among the vocabulary
// specials. Throws on out-of-vocabulary text or unknown special tokens.
AssembledPrompt assemble_template(const PromptTemplate& t, const lm::Vocabulary& vocab,
                                  bool semantics = true);

// Copy of `temp` with row positions[j] replaced by row j of `rows`.
Matrix inject_structure(const Matrix& temp, const Matrix& rows,
                        const std::vector<std::size_t>& positions);
ad::Var inject_structure(ad::Var temp, ad::Var rows, const std::vector<std::size_t>& positions);

// Hard-prompt baseline wording; relation descriptions are in relation order.
struct FlatTemplate {
  std::string instruction;
  std::string target_description;
  std::vector<std::string> relation_descriptions;
  std::string question;

  nlohmann::json to_json() const;
  static FlatTemplate from_json(const nlohmann::json& j);
  bool operator==(const FlatTemplate&) const = default;
};

FlatTemplate read_flat_template(const std::filesystem::path& path);

inline constexpr std::string_view kNoNeighbors = "no neighbors";

// "1.00, 2.50" for digits = 2.
std::string format_values(std::span<const double> values, int digits);

// instruction, `<target literals>: target_description\n`, one line per relation
// with the mean 1-hop neighbor features (self excluded) or the no-neighbors
// marker, then the question.
std::string flatten_features(graph::NodeId v, const graph::RelationalGraph& g,
                             const std::vector<graph::SubgraphView>& views,
                             const FlatTemplate& t, int digits);

// Corpus covering the template in both semantics modes, the answer words and,
// when given, every string flatten_features can emit.
std::vector<std::string> vocabulary_corpus(const PromptTemplate& t, const FlatTemplate* flat);
// Specials are the template's slot tokens in slot order.
lm::Vocabulary build_vocabulary(const PromptTemplate& t, const FlatTemplate* flat = nullptr);

}  // namespace lgspf::prompt
