// SPDX-License-Identifier: Apache-2.0
#include "lgspf/prompt.hpp"

#include <cstdio>
#include <set>

#include "lgspf/dataio.hpp"

namespace lgspf::prompt {

using graph::NodeId;
using lm::TokenId;
using nlohmann::json;

namespace {

void append_text(std::vector<TokenId>& out, const lm::Vocabulary& vocab, std::string_view text) {
  const auto ids = vocab.encode(text);
  out.insert(out.end(), ids.begin(), ids.end());
}

std::string slot_text(const RelationSlot& slot) { return ": " + slot.description + "\n"; }

std::string required_string(const json& j, const char* key, const char* what) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw Error(std::string(what) + ": missing string field '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

std::string special_token_name(std::size_t relation) {
  return "<|graph_pad_relation" + std::to_string(relation + 1) + "|>";
}

void PromptTemplate::validate() const {
  if (relations.empty()) throw Error("prompt template: no relation slots");
  std::set<std::string> tokens;
  for (const auto& slot : relations) {
    if (slot.token.empty()) throw Error("prompt template: empty special token");
    if (!tokens.insert(slot.token).second) {
      throw Error("prompt template: special token '" + slot.token + "' used twice");
    }
    if (slot.description.empty()) {
      throw Error("prompt template: empty description for '" + slot.token + "'");
    }
  }
  if (question_stub.empty()) throw Error("prompt template: empty question stub");
}

json PromptTemplate::to_json() const {
  json rel = json::array();
  for (const auto& s : relations) rel.push_back({{"token", s.token}, {"description", s.description}});
  return {{"instruction", instruction},
          {"relations", rel},
          {"question", question},
          {"question_stub", question_stub}};
}

PromptTemplate PromptTemplate::from_json(const json& j) {
  PromptTemplate t;
  t.instruction = required_string(j, "instruction", "prompt template");
  t.question = required_string(j, "question", "prompt template");
  if (j.contains("question_stub")) t.question_stub = required_string(j, "question_stub", "prompt template");
  if (!j.contains("relations") || !j.at("relations").is_array()) {
    throw Error("prompt template: missing array field 'relations'");
  }
  for (const auto& r : j.at("relations")) {
    t.relations.push_back({required_string(r, "token", "prompt template relation"),
                           required_string(r, "description", "prompt template relation")});
  }
  t.validate();
  return t;
}

PromptTemplate read_template(const std::filesystem::path& path) {
  try {
    return PromptTemplate::from_json(io::read_json_file(path));
  } catch (const json::exception& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
}

void write_template(const PromptTemplate& t, const std::filesystem::path& path) {
  io::write_json_file(t.to_json(), path);
}

PromptTemplate with_graph_relations(const PromptTemplate& base, const graph::RelationalGraph& g) {
  PromptTemplate t = base;
  t.relations.clear();
  for (std::size_t r = 0; r < g.relation_count(); ++r) {
    t.relations.push_back({special_token_name(r), g.relation(r).description});
  }
  t.validate();
  return t;
}

PromptTemplate single_view(const PromptTemplate& t, std::size_t j) {
  if (j >= t.relations.size()) {
    throw Error("single_view: view " + std::to_string(j) + " out of range for " +
                std::to_string(t.relations.size()) + " relations");
  }
  PromptTemplate out = t;
  out.relations = {t.relations[j]};
  return out;
}

AssembledPrompt assemble_template(const PromptTemplate& t, const lm::Vocabulary& vocab,
                                  bool semantics) {
  t.validate();
  AssembledPrompt p;
  if (semantics) append_text(p.tokens, vocab, t.instruction);
  for (const auto& slot : t.relations) {
    const auto id = vocab.find_special(slot.token);
    if (!id) throw Error("assemble_template: '" + slot.token + "' is not a special token");
    p.positions.push_back(p.tokens.size());
    p.relations.push_back(*id - vocab.base_size());
    p.tokens.push_back(*id);
    if (semantics) append_text(p.tokens, vocab, slot_text(slot));
  }
  append_text(p.tokens, vocab, semantics ? t.question : t.question_stub);
  return p;
}

Matrix inject_structure(const Matrix& temp, const Matrix& rows,
                        const std::vector<std::size_t>& positions) {
  ad::Tape tape(false);
  return inject_structure(tape.view(temp), tape.view(rows), positions).value();
}

ad::Var inject_structure(ad::Var temp, ad::Var rows, const std::vector<std::size_t>& positions) {
  return ad::replace_rows(temp, rows, positions);
}

json FlatTemplate::to_json() const {
  json rel = json::array();
  for (const auto& d : relation_descriptions) rel.push_back({{"description", d}});
  return {{"instruction", instruction},
          {"target_description", target_description},
          {"relations", rel},
          {"question", question}};
}

FlatTemplate FlatTemplate::from_json(const json& j) {
  FlatTemplate t;
  t.instruction = required_string(j, "instruction", "flat template");
  t.target_description = required_string(j, "target_description", "flat template");
  t.question = required_string(j, "question", "flat template");
  if (!j.contains("relations") || !j.at("relations").is_array()) {
    throw Error("flat template: missing array field 'relations'");
  }
  for (const auto& r : j.at("relations")) {
    t.relation_descriptions.push_back(required_string(r, "description", "flat template relation"));
  }
  if (t.relation_descriptions.empty()) throw Error("flat template: no relations");
  return t;
}

FlatTemplate read_flat_template(const std::filesystem::path& path) {
  try {
    return FlatTemplate::from_json(io::read_json_file(path));
  } catch (const json::exception& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
}

std::string format_values(std::span<const double> values, int digits) {
  if (digits < 0 || digits > 17) throw Error("format_values: digits must be in [0, 17]");
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    std::snprintf(buf, sizeof buf, "%.*f", digits, values[i]);
    out += buf;
  }
  return out;
}

std::string flatten_features(NodeId v, const graph::RelationalGraph& g,
                             const std::vector<graph::SubgraphView>& views,
                             const FlatTemplate& t, int digits) {
  if (v >= g.node_count()) throw Error("flatten_features: node " + std::to_string(v) + " out of range");
  if (views.size() != t.relation_descriptions.size()) {
    throw Error("flatten_features: " + std::to_string(views.size()) + " views for " +
                std::to_string(t.relation_descriptions.size()) + " relation descriptions");
  }
  std::string text = t.instruction;
  text += format_values(g.features().row(v), digits) + ": " + t.target_description + "\n";
  std::vector<double> mean(g.feature_dim());
  for (std::size_t r = 0; r < views.size(); ++r) {
    std::fill(mean.begin(), mean.end(), 0.0);
    std::size_t count = 0;
    for (NodeId u : views[r].neighbors(v)) {
      if (u == v) continue;
      const auto row = g.features().row(u);
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
      ++count;
    }
    if (count == 0) {
      text += kNoNeighbors;
    } else {
      for (double& m : mean) m /= static_cast<double>(count);
      text += format_values(mean, digits);
    }
    text += ": " + t.relation_descriptions[r] + "\n";
  }
  text += t.question;
  return text;
}

std::vector<std::string> vocabulary_corpus(const PromptTemplate& t, const FlatTemplate* flat) {
  std::vector<std::string> corpus{t.instruction, t.question, t.question_stub,
                                  std::string(kFraudWord), std::string(kNormalWord)};
  for (const auto& slot : t.relations) corpus.push_back(slot_text(slot));
  if (flat != nullptr) {
    corpus.push_back(flat->instruction);
    corpus.push_back(": " + flat->target_description + "\n");
    for (const auto& d : flat->relation_descriptions) corpus.push_back(": " + d + "\n");
    corpus.push_back(flat->question);
    corpus.push_back(std::string(kNoNeighbors));
    // Literal characters both bare and after a separating space.
    corpus.push_back("-0123456789.,");
    corpus.push_back(" - 0 1 2 3 4 5 6 7 8 9 . ,");
  }
  return corpus;
}

lm::Vocabulary build_vocabulary(const PromptTemplate& t, const FlatTemplate* flat) {
  t.validate();
  std::vector<std::string> specials;
  for (const auto& slot : t.relations) specials.push_back(slot.token);
  return lm::Vocabulary::from_corpus(vocabulary_corpus(t, flat), std::move(specials));
}

}  // namespace lgspf::prompt
