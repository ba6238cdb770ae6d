// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dataset files and generators.
//
// Layout on disk: features as headerless CSV (one row per node), labels as
// CSV "node_id,label" with -1 for unlabeled, edges as TSV "src<TAB>dst",
// tied together by a JSON manifest whose paths are relative to itself.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "lgspf/relgraph.hpp"

namespace lgspf::io {

namespace fs = std::filesystem;

// Parse errors are rethrown as Error prefixed with the path.
nlohmann::json read_json_file(const fs::path& path);
// Pretty-printed, creating parent directories.
void write_json_file(const nlohmann::json& j, const fs::path& path);

struct RelationEntry {
  std::string name;
  std::string description;
  fs::path edge_file;  // unused for temporal relations
  bool directed = false;
  // Built from the manifest's transaction table instead of an edge file.
  bool temporal = false;
  std::optional<bool> self_loops;  // defaults to `directed`
  std::string group_key;
  std::size_t k = 3;

  bool wants_self_loops() const { return self_loops.value_or(directed); }
};

struct DatasetManifest {
  std::string name;
  fs::path feature_file;
  fs::path label_file;
  std::optional<fs::path> transaction_file;
  std::vector<RelationEntry> relations;
  // Directory relative paths resolve against; set by read_manifest.
  fs::path base_dir;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
  // Throws on duplicate relation names or missing temporal settings.
  void validate() const;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& base_dir);
DatasetManifest read_manifest(const fs::path& path);
void write_manifest(const DatasetManifest& m, const fs::path& path);

struct TransactionRow {
  graph::NodeId node = 0;
  double timestamp = 0.0;
  std::vector<std::string> groups;  // one value per TransactionTable::keys
};

struct TransactionTable {
  std::vector<std::string> keys;
  std::vector<TransactionRow> rows;

  std::size_t key_index(const std::string& key) const;
};

// CSV with header "node_id,timestamp,<key>,...".
TransactionTable read_transactions(const fs::path& path);
void write_transactions(const TransactionTable& table, const fs::path& path);

// Within each group, orders rows by (timestamp, node id) and links each row
// to its next k successors, pointing from earlier to later.
std::vector<graph::Edge> build_temporal_edges(const TransactionTable& table,
                                              const std::string& group_key, std::size_t k);

Matrix read_features(const fs::path& path);
std::vector<graph::Label> read_labels(const fs::path& path, std::size_t node_count);
std::vector<graph::Edge> read_edges(const fs::path& path, std::size_t node_count);
void write_features(const Matrix& x, const fs::path& path);
void write_labels(const std::vector<graph::Label>& labels, const fs::path& path);
void write_edges(const std::vector<graph::Edge>& edges, const fs::path& path);

graph::RelationalGraph load_dataset(const DatasetManifest& manifest);

// Writes features, labels and one edge file per relation into `dir` and
// returns (and writes) the manifest describing them. Temporal relations are
// written out as their materialized edges.
DatasetManifest write_dataset(const graph::RelationalGraph& g, const std::string& name,
                              const fs::path& dir);

struct SynthSpec {
  std::size_t node_count = 300;
  std::size_t feature_dim = 16;
  double fraud_rate = 0.1;
  std::vector<double> signal{0.9, 0.5, 0.0};  // one entry per relation
  // Expected same-class neighbors per node at signal 1; the link probability
  // is scaled per class so fraud and normal nodes see the same expectation.
  double same_class_degree = 16.0;
  double noise_edge_prob = 0.01;
  std::uint64_t seed = 0;

  std::size_t relation_count() const { return signal.size(); }
  void validate() const;
};

nlohmann::json synth_spec_to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct SynthDataset {
  graph::RelationalGraph graph;
  DatasetManifest manifest;
};

// Planted-fraud graph: labels first, then per-relation same-class edges with
// probability signal_j * same_class_degree / (class size - 1), plus uniform
// noise edges. Features are label-independent Gaussian noise, so the classes
// are separable only through who links to whom.
SynthDataset synth_fraud_graph(const SynthSpec& spec);

}  // namespace lgspf::io
