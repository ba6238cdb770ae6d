// SPDX-License-Identifier: Apache-2.0
#include "lgspf/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lgspf/rng.hpp"

namespace lgspf::io {

using graph::Edge;
using graph::Label;
using graph::NodeId;
using nlohmann::json;

namespace {

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

template <typename T>
T number_or_throw(std::string_view s, const fs::path& path, std::size_t line,
                  const char* what) {
  T v{};
  if (!parse_number(s, v)) {
    throw Error(where(path, line) + ": cannot parse " + what + " '" + std::string(s) + "'");
  }
  return v;
}

NodeId node_or_throw(std::string_view s, std::size_t node_count, const fs::path& path,
                     std::size_t line) {
  const auto v = number_or_throw<long long>(s, path, line, "node id");
  if (v < 0 || static_cast<unsigned long long>(v) >= node_count) {
    throw Error(where(path, line) + ": node id " + std::string(s) + " outside 0.." +
                std::to_string(node_count == 0 ? 0 : node_count - 1));
  }
  return static_cast<NodeId>(v);
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

bool is_blank(std::string_view line) { return trim(line).empty(); }

}  // namespace

void DatasetManifest::validate() const {
  std::set<std::string> names;
  for (const auto& r : relations) {
    if (r.name.empty()) throw Error("manifest '" + name + "': relation with empty name");
    if (!names.insert(r.name).second) {
      throw Error("manifest '" + name + "': duplicate relation name '" + r.name + "'");
    }
    if (r.temporal) {
      if (!transaction_file) {
        throw Error("manifest '" + name + "': temporal relation '" + r.name +
                    "' needs a transaction_file");
      }
      if (r.group_key.empty()) {
        throw Error("manifest '" + name + "': temporal relation '" + r.name +
                    "' needs a group_key");
      }
      if (r.k < 1) throw Error("manifest '" + name + "': relation '" + r.name + "' has k < 1");
    } else if (r.edge_file.empty()) {
      throw Error("manifest '" + name + "': relation '" + r.name + "' has no edge_file");
    }
  }
  if (relations.empty()) throw Error("manifest '" + name + "': no relations");
}

json manifest_to_json(const DatasetManifest& m) {
  json rels = json::array();
  for (const auto& r : m.relations) {
    json e{{"name", r.name}, {"description", r.description}, {"directed", r.directed}};
    if (r.temporal) {
      e["temporal"] = true;
      e["group_key"] = r.group_key;
      e["k"] = r.k;
    } else {
      e["edge_file"] = r.edge_file.generic_string();
    }
    if (r.self_loops) e["self_loops"] = *r.self_loops;
    rels.push_back(std::move(e));
  }
  json j{{"name", m.name},
         {"feature_file", m.feature_file.generic_string()},
         {"label_file", m.label_file.generic_string()},
         {"relations", std::move(rels)}};
  if (m.transaction_file) j["transaction_file"] = m.transaction_file->generic_string();
  return j;
}

DatasetManifest manifest_from_json(const json& j, const fs::path& base_dir) {
  DatasetManifest m;
  try {
    m.name = j.value("name", std::string("dataset"));
    m.feature_file = j.at("feature_file").get<std::string>();
    m.label_file = j.at("label_file").get<std::string>();
    if (j.contains("transaction_file")) {
      m.transaction_file = j.at("transaction_file").get<std::string>();
    }
    for (const auto& e : j.at("relations")) {
      RelationEntry r;
      r.name = e.at("name").get<std::string>();
      r.description = e.value("description", std::string());
      r.edge_file = e.value("edge_file", std::string());
      r.directed = e.value("directed", false);
      r.temporal = e.value("temporal", false);
      if (e.contains("self_loops")) r.self_loops = e.at("self_loops").get<bool>();
      r.group_key = e.value("group_key", std::string());
      r.k = e.value("k", std::size_t{3});
      m.relations.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    throw Error(std::string("manifest: ") + ex.what());
  }
  m.base_dir = base_dir;
  m.validate();
  return m;
}

json read_json_file(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw Error(path.string() + ": " + ex.what());
  }
}

void write_json_file(const json& j, const fs::path& path) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

DatasetManifest read_manifest(const fs::path& path) {
  return manifest_from_json(read_json_file(path), path.parent_path());
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  write_json_file(manifest_to_json(m), path);
}

std::size_t TransactionTable::key_index(const std::string& key) const {
  const auto it = std::find(keys.begin(), keys.end(), key);
  if (it == keys.end()) throw Error("transaction table has no group key '" + key + "'");
  return static_cast<std::size_t>(it - keys.begin());
}

TransactionTable read_transactions(const fs::path& path) {
  auto in = open_in(path);
  TransactionTable table;
  std::string line;
  std::size_t lineno = 0;
  std::set<NodeId> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    const auto cells = split(line, ',');
    if (table.keys.empty() && lineno == 1) {
      if (cells.size() < 3 || cells[0] != "node_id" || cells[1] != "timestamp") {
        throw Error(where(path, lineno) + ": expected header 'node_id,timestamp,<key>...'");
      }
      for (std::size_t i = 2; i < cells.size(); ++i) table.keys.emplace_back(cells[i]);
      continue;
    }
    if (cells.size() != table.keys.size() + 2) {
      throw Error(where(path, lineno) + ": expected " + std::to_string(table.keys.size() + 2) +
                  " columns, found " + std::to_string(cells.size()));
    }
    TransactionRow row;
    row.node = static_cast<NodeId>(number_or_throw<std::uint32_t>(cells[0], path, lineno, "node id"));
    row.timestamp = number_or_throw<double>(cells[1], path, lineno, "timestamp");
    for (std::size_t i = 2; i < cells.size(); ++i) row.groups.emplace_back(cells[i]);
    if (!seen.insert(row.node).second) {
      throw Error(where(path, lineno) + ": duplicate node id " + std::to_string(row.node));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_transactions(const TransactionTable& table, const fs::path& path) {
  auto out = open_out(path);
  out << "node_id,timestamp";
  for (const auto& k : table.keys) out << ',' << k;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.node << ',' << format_double(row.timestamp);
    for (const auto& g : row.groups) out << ',' << g;
    out << '\n';
  }
}

std::vector<Edge> build_temporal_edges(const TransactionTable& table,
                                       const std::string& group_key, std::size_t k) {
  if (k < 1) throw Error("build_temporal_edges: k must be at least 1");
  const std::size_t key = table.key_index(group_key);
  std::map<std::string, std::vector<const TransactionRow*>> groups;
  for (const auto& row : table.rows) groups[row.groups.at(key)].push_back(&row);

  std::vector<Edge> edges;
  for (auto& [value, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [](const TransactionRow* a, const TransactionRow* b) {
      if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
      return a->node < b->node;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size() && j <= i + k; ++j) {
        edges.push_back({rows[i]->node, rows[j]->node});
      }
    }
  }
  return edges;
}

Matrix read_features(const fs::path& path) {
  auto in = open_in(path);
  std::vector<double> values;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    const auto cells = split(line, ',');
    if (rows == 0) {
      cols = cells.size();
    } else if (cells.size() != cols) {
      throw Error(where(path, lineno) + ": feature row has " + std::to_string(cells.size()) +
                  " values, expected " + std::to_string(cols));
    }
    for (auto c : cells) values.push_back(number_or_throw<double>(c, path, lineno, "feature"));
    ++rows;
  }
  Matrix x(rows, cols);
  std::copy(values.begin(), values.end(), x.data());
  return x;
}

std::vector<Label> read_labels(const fs::path& path, std::size_t node_count) {
  auto in = open_in(path);
  std::vector<Label> labels(node_count, Label::kUnlabeled);
  std::vector<bool> seen(node_count, false);
  std::string line;
  std::size_t lineno = 0, count = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 2) {
      throw Error(where(path, lineno) + ": expected 'node_id,label'");
    }
    long long probe = 0;
    if (count == 0 && lineno == 1 && !parse_number(cells[0], probe)) continue;  // header
    const NodeId v = node_or_throw(cells[0], node_count, path, lineno);
    const auto raw = number_or_throw<int>(cells[1], path, lineno, "label");
    if (raw != -1 && raw != 0 && raw != 1) {
      throw Error(where(path, lineno) + ": label must be -1, 0 or 1, found " +
                  std::string(cells[1]));
    }
    if (seen[v]) throw Error(where(path, lineno) + ": duplicate node id " + std::to_string(v));
    seen[v] = true;
    labels[v] = static_cast<Label>(raw);
    ++count;
  }
  if (count != node_count) {
    throw Error(path.string() + ": " + std::to_string(count) + " label rows for " +
                std::to_string(node_count) + " feature rows");
  }
  return labels;
}

std::vector<Edge> read_edges(const fs::path& path, std::size_t node_count) {
  auto in = open_in(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line) || trim(line).front() == '#') continue;
    const auto cells = split(line, '\t');
    if (cells.size() != 2) throw Error(where(path, lineno) + ": expected 'src<TAB>dst'");
    edges.push_back({node_or_throw(cells[0], node_count, path, lineno),
                     node_or_throw(cells[1], node_count, path, lineno)});
  }
  return edges;
}

void write_features(const Matrix& x, const fs::path& path) {
  auto out = open_out(path);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (c) out << ',';
      out << format_double(x(r, c));
    }
    out << '\n';
  }
}

void write_labels(const std::vector<Label>& labels, const fs::path& path) {
  auto out = open_out(path);
  out << "node_id,label\n";
  for (std::size_t v = 0; v < labels.size(); ++v) {
    out << v << ',' << static_cast<int>(labels[v]) << '\n';
  }
}

void write_edges(const std::vector<Edge>& edges, const fs::path& path) {
  auto out = open_out(path);
  for (const Edge& e : edges) out << e.src << '\t' << e.dst << '\n';
}

graph::RelationalGraph load_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  Matrix x = read_features(manifest.resolve(manifest.feature_file));
  auto labels = read_labels(manifest.resolve(manifest.label_file), x.rows());

  std::optional<TransactionTable> transactions;
  std::vector<graph::Relation> rels;
  std::vector<std::vector<Edge>> edges;
  for (std::size_t r = 0; r < manifest.relations.size(); ++r) {
    const auto& entry = manifest.relations[r];
    rels.push_back({r, entry.name, entry.description, entry.directed, entry.wants_self_loops()});
    if (entry.temporal) {
      if (!transactions) transactions = read_transactions(manifest.resolve(*manifest.transaction_file));
      for (const auto& row : transactions->rows) {
        if (row.node >= x.rows()) {
          throw Error(manifest.transaction_file->string() + ": node id " +
                      std::to_string(row.node) + " outside 0.." + std::to_string(x.rows() - 1));
        }
      }
      edges.push_back(build_temporal_edges(*transactions, entry.group_key, entry.k));
    } else {
      edges.push_back(read_edges(manifest.resolve(entry.edge_file), x.rows()));
    }
  }
  return graph::RelationalGraph(std::move(x), std::move(labels), std::move(rels),
                                std::move(edges));
}

DatasetManifest write_dataset(const graph::RelationalGraph& g, const std::string& name,
                              const fs::path& dir) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.name = name;
  m.base_dir = dir;
  m.feature_file = "features.csv";
  m.label_file = "labels.csv";
  write_features(g.features(), dir / m.feature_file);
  write_labels(g.labels(), dir / m.label_file);
  for (const auto& rel : g.relations()) {
    RelationEntry e;
    e.name = rel.name;
    e.description = rel.description;
    e.directed = rel.directed;
    e.self_loops = rel.self_loops;
    e.edge_file = "edges_" + std::to_string(rel.id) + ".tsv";
    write_edges(g.edges(rel.id), dir / e.edge_file);
    m.relations.push_back(std::move(e));
  }
  write_manifest(m, dir / "manifest.json");
  return m;
}

void SynthSpec::validate() const {
  if (!(fraud_rate > 0.0 && fraud_rate < 1.0)) throw Error("SynthSpec: fraud_rate must be in (0,1)");
  if (signal.empty()) throw Error("SynthSpec: need at least one relation");
  for (double s : signal) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error("SynthSpec: signal strengths must be in [0,1]");
  }
  if (!(noise_edge_prob >= 0.0 && noise_edge_prob <= 1.0)) {
    throw Error("SynthSpec: noise_edge_prob must be in [0,1]");
  }
  if (!(same_class_degree >= 0.0)) throw Error("SynthSpec: same_class_degree must be >= 0");
  if (feature_dim == 0) throw Error("SynthSpec: feature_dim must be positive");
  const auto fraud = static_cast<std::size_t>(std::llround(fraud_rate * static_cast<double>(node_count)));
  if (fraud == 0 || fraud >= node_count) {
    throw Error("SynthSpec: fraud_rate " + format_double(fraud_rate) + " on " +
                std::to_string(node_count) + " nodes leaves a class empty");
  }
}

json synth_spec_to_json(const SynthSpec& s) {
  return json{{"node_count", s.node_count},
              {"feature_dim", s.feature_dim},
              {"fraud_rate", s.fraud_rate},
              {"signal", s.signal},
              {"same_class_degree", s.same_class_degree},
              {"noise_edge_prob", s.noise_edge_prob},
              {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  try {
    s.node_count = j.value("node_count", s.node_count);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.fraud_rate = j.value("fraud_rate", s.fraud_rate);
    s.signal = j.value("signal", s.signal);
    s.same_class_degree = j.value("same_class_degree", s.same_class_degree);
    s.noise_edge_prob = j.value("noise_edge_prob", s.noise_edge_prob);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& ex) {
    throw Error(std::string("synthetic spec: ") + ex.what());
  }
  s.validate();
  return s;
}

SynthDataset synth_fraud_graph(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.node_count;
  Rng rng(spec.seed);

  std::vector<NodeId> order(n);
  for (std::size_t v = 0; v < n; ++v) order[v] = static_cast<NodeId>(v);
  rng.shuffle(order);
  const auto fraud_count =
      static_cast<std::size_t>(std::llround(spec.fraud_rate * static_cast<double>(n)));
  std::vector<Label> labels(n, Label::kNormal);
  for (std::size_t i = 0; i < fraud_count; ++i) labels[order[i]] = Label::kFraud;

  Matrix x(n, spec.feature_dim);
  for (double& v : x.values()) v = rng.normal();

  std::vector<graph::Relation> rels;
  std::vector<std::vector<Edge>> edges(spec.relation_count());
  for (std::size_t r = 0; r < spec.relation_count(); ++r) {
    const std::string idx = std::to_string(r + 1);
    rels.push_back({r, "relation" + idx,
                    "Relation " + idx + " connects two accounts that share channel " + idx + ".",
                    false, false});
    double same[2];
    for (int c = 0; c < 2; ++c) {
      const double size = static_cast<double>(c == 1 ? fraud_count : n - fraud_count);
      same[c] = size > 1 ? std::min(1.0, spec.signal[r] * spec.same_class_degree / (size - 1)) : 0.0;
    }
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const double p =
            labels[a] == labels[b]
                ? std::min(1.0, spec.noise_edge_prob + same[labels[a] == Label::kFraud])
                : spec.noise_edge_prob;
        if (rng.bernoulli(p)) edges[r].push_back({static_cast<NodeId>(a), static_cast<NodeId>(b)});
      }
    }
  }

  SynthDataset out;
  out.graph = graph::RelationalGraph(std::move(x), std::move(labels), std::move(rels),
                                     std::move(edges));
  out.manifest.name = "synthetic";
  out.manifest.feature_file = "features.csv";
  out.manifest.label_file = "labels.csv";
  for (const auto& rel : out.graph.relations()) {
    RelationEntry e;
    e.name = rel.name;
    e.description = rel.description;
    e.directed = rel.directed;
    e.self_loops = rel.self_loops;
    e.edge_file = "edges_" + std::to_string(rel.id) + ".tsv";
    out.manifest.relations.push_back(std::move(e));
  }
  return out;
}

}  // namespace lgspf::io
