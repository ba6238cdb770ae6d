// SPDX-License-Identifier: Apache-2.0
// Command-line front end: synthetic data, training, evaluation, ablations.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lgspf/dataio.hpp"
#include "lgspf/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lgspf;

namespace {

struct DataOptions {
  std::string manifest;
  std::string config;
  std::string template_path;
  std::string flat_template_path;
  std::vector<std::uint64_t> seeds;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--manifest", o.manifest, "dataset manifest JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", o.config, "training config JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--template", o.template_path, "soft prompt template JSON")->check(CLI::ExistingFile);
  cmd->add_option("--flat-template", o.flat_template_path, "flattened-text template JSON")
      ->check(CLI::ExistingFile);
}

harness::TrainConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return harness::TrainConfig::from_json(io::read_json_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

// Explicit paths win; otherwise the shipped templates named after the dataset.
harness::Templates load_templates(const DataOptions& o, const std::string& dataset_name) {
  const fs::path shipped = fs::path(LGSPF_DATA_DIR) / "templates";
  fs::path soft = o.template_path;
  if (soft.empty()) {
    soft = shipped / (dataset_name + ".json");
    if (!fs::exists(soft)) {
      throw Error("no --template given and no shipped template for dataset '" + dataset_name + "'");
    }
  }
  harness::Templates t{prompt::read_template(soft), std::nullopt};
  fs::path flat = o.flat_template_path;
  if (flat.empty() && o.template_path.empty()) flat = shipped / (dataset_name + "_flat.json");
  if (!flat.empty() && fs::exists(flat)) t.flat = prompt::read_flat_template(flat);
  return t;
}

struct Loaded {
  io::DatasetManifest manifest;
  harness::Dataset data;
};

Loaded load_data(const fs::path& manifest_path) {
  auto m = io::read_manifest(manifest_path);
  graph::RelationalGraph g = io::load_dataset(m);
  return {std::move(m), harness::Dataset(std::move(g))};
}

const std::vector<graph::NodeId>& split_nodes(const graph::SplitMasks& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw Error("unknown split '" + name + "' (expected train, val or test)");
}

json report_json(const harness::EvalResult& r, const std::string& mode, std::uint64_t seed) {
  json j = r.report.to_json();
  j["mode"] = mode;
  j["seed"] = seed;
  return j;
}

// Mean and range of one metric across runs; runs where it is undefined are skipped.
json summarize(const std::vector<json>& reports, const char* key) {
  std::vector<double> v;
  for (const auto& r : reports) {
    if (r.contains(key) && r.at(key).is_number()) v.push_back(r.at(key).get<double>());
  }
  if (v.empty()) return nullptr;
  double sum = 0.0, lo = v[0], hi = v[0];
  for (double x : v) {
    sum += x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return {{"mean", sum / static_cast<double>(v.size())}, {"min", lo}, {"max", hi}, {"runs", v.size()}};
}

json summary_row(const std::vector<json>& reports) {
  return {{"auc", summarize(reports, "auc")},
          {"recall", summarize(reports, "recall")},
          {"g_mean", summarize(reports, "g_mean")},
          {"runs", reports}};
}

std::string fmt(const json& s) {
  if (s.is_null()) return "      n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", s.at("mean").get<double>());
  return buf;
}

void print_row(const std::string& name, const json& row) {
  std::printf("%-14s auc %s  recall %s  g_mean %s\n", name.c_str(), fmt(row["auc"]).c_str(),
              fmt(row["recall"]).c_str(), fmt(row["g_mean"]).c_str());
}

std::vector<std::uint64_t> seeds_or(const std::vector<std::uint64_t>& given, std::uint64_t fallback) {
  return given.empty() ? std::vector<std::uint64_t>{fallback} : given;
}

int cmd_gen_data(const std::string& spec_path, const fs::path& out) {
  io::SynthSpec spec;
  if (!spec_path.empty()) spec = io::synth_spec_from_json(io::read_json_file(spec_path));
  const auto ds = io::synth_fraud_graph(spec);
  fs::create_directories(out);
  io::write_dataset(ds.graph, ds.manifest.name, out);
  io::write_json_file(io::synth_spec_to_json(spec), out / "synth_spec.json");
  std::size_t fraud = 0;
  for (graph::NodeId v = 0; v < ds.graph.node_count(); ++v) fraud += ds.graph.label(v) == graph::Label::kFraud;
  std::printf("wrote %zu nodes (%zu fraud), %zu relations to %s\n", ds.graph.node_count(), fraud,
              ds.graph.relation_count(), out.string().c_str());
  return 0;
}

int cmd_train(const DataOptions& o, const fs::path& out, std::optional<std::uint64_t> split_seed) {
  auto cfg = load_config(o.config);
  auto [manifest, data] = load_data(o.manifest);
  const auto templates = load_templates(o, manifest.name);
  const auto splits = graph::stratified_split(data.graph, {}, split_seed.value_or(cfg.seed));
  auto p = harness::train(data, splits, cfg, templates, [](const harness::EpochRecord& e) {
    std::printf("epoch %3zu  train_loss %.5f  val_auc %.4f\n", e.epoch, e.train_loss, e.val_auc);
    std::fflush(stdout);
  });
  harness::save_checkpoint(p, out, {{"manifest", fs::absolute(o.manifest).string()}});
  std::printf("best epoch %zu, checkpoint in %s\n", p.best_epoch, out.string().c_str());
  return 0;
}

int cmd_eval(const fs::path& ckpt, std::string manifest_path, const std::string& split,
             const std::string& json_out, const std::string& scores_out) {
  json extra;
  auto p = harness::load_checkpoint(ckpt, &extra);
  if (manifest_path.empty()) {
    if (!extra.contains("manifest")) throw Error("checkpoint records no manifest; pass --manifest");
    manifest_path = extra["manifest"].get<std::string>();
  }
  auto [manifest, data] = load_data(manifest_path);
  const auto r = harness::evaluate(p, data, split_nodes(p.splits, split));
  json j = report_json(r, harness::mode_name(p.config().mode), p.config().seed);
  j["split"] = split;
  j["best_epoch"] = p.best_epoch;
  if (!json_out.empty()) io::write_json_file(j, json_out);
  if (!scores_out.empty()) harness::write_scores_csv(r, scores_out);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const DataOptions& o, const std::string& modes_csv, const fs::path& out) {
  const auto base = load_config(o.config);
  auto [manifest, data] = load_data(o.manifest);
  const auto templates = load_templates(o, manifest.name);
  std::vector<harness::Mode> modes;
  std::vector<std::string> names;
  for (const auto& name : CLI::detail::split(modes_csv, ',')) {
    modes.push_back(harness::parse_mode(name));
    names.push_back(harness::mode_name(modes.back()));
  }
  if (modes.empty()) throw Error("--modes is empty");
  std::map<std::string, std::vector<json>> per_mode;
  for (std::uint64_t seed : seeds_or(o.seeds, base.seed)) {
    auto cfg = base;
    cfg.seed = seed;
    const auto splits = graph::stratified_split(data.graph, {}, seed);
    const auto results = harness::run_ablation(data, splits, cfg, templates, modes);
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    for (const auto& [mode, r] : results) {
      per_mode[mode].push_back(report_json(r, mode, seed));
      io::write_json_file(per_mode[mode].back(), dir / (mode + ".json"));
      harness::write_scores_csv(r, dir / (mode + "_scores.csv"));
    }
  }
  json summary = json::object();
  for (const auto& name : names) {
    summary[name] = summary_row(per_mode[name]);
    print_row(name, summary[name]);
  }
  io::write_json_file(summary, out / "summary.json");
  return 0;
}

int cmd_single_view(const DataOptions& o, const std::vector<std::string>& views_arg, const fs::path& out) {
  const auto base = load_config(o.config);
  auto [manifest, data] = load_data(o.manifest);
  const auto templates = load_templates(o, manifest.name);
  std::vector<std::size_t> views;
  for (const auto& v : views_arg) {
    if (v == "all") {
      for (std::size_t j = 0; j < data.graph.relation_count(); ++j) views.push_back(j);
    } else {
      views.push_back(std::stoul(v));
    }
  }
  std::map<std::size_t, std::vector<json>> per_view;
  for (std::uint64_t seed : seeds_or(o.seeds, base.seed)) {
    auto cfg = base;
    cfg.seed = seed;
    const auto splits = graph::stratified_split(data.graph, {}, seed);
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    for (std::size_t j : views) {
      const auto r = harness::run_single_view(data, splits, cfg, templates, j);
      json rep = report_json(r, "single_view", seed);
      rep["view"] = j;
      io::write_json_file(rep, dir / ("view_" + std::to_string(j) + ".json"));
      per_view[j].push_back(std::move(rep));
    }
  }
  json summary = json::object();
  std::vector<json> means;
  for (const auto& [j, reps] : per_view) {
    const std::string key = "view_" + std::to_string(j);
    summary[key] = summary_row(reps);
    print_row(key, summary[key]);
    json m = json::object();
    for (const char* metric : {"auc", "recall", "g_mean"}) {
      const json& s = summary[key][metric];
      m[metric] = s.is_null() ? json(nullptr) : s["mean"];
    }
    means.push_back(m);
  }
  if (per_view.size() > 1) {
    // Average over views of each view's mean metric.
    json avg = {{"auc", summarize(means, "auc")},
                {"recall", summarize(means, "recall")},
                {"g_mean", summarize(means, "g_mean")}};
    summary["average"] = avg;
    print_row("average", avg);
  }
  io::write_json_file(summary, out / "summary.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lgspf: relation-aware soft prompts for fraud detection on multi-relational graphs"};
  app.require_subcommand(1);

  std::string spec_path, gen_out;
  auto* gen = app.add_subcommand("gen-data", "write a planted-fraud synthetic dataset");
  gen->add_option("--spec", spec_path, "generator spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "output directory")->required();

  DataOptions train_opts;
  std::string train_out;
  std::optional<std::uint64_t> split_seed;
  auto* train = app.add_subcommand("train", "train one model and write a checkpoint");
  add_data_options(train, train_opts);
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--split-seed", split_seed, "seed of the stratified split (default: config seed)");

  std::string ckpt, eval_manifest, split = "test", json_out, scores_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  eval->add_option("--ckpt", ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--manifest", eval_manifest, "dataset manifest (default: the one used in training)");
  eval->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--json", json_out, "write the report here");
  eval->add_option("--scores", scores_out, "write per-node scores CSV here");

  DataOptions ablate_opts;
  std::string modes = "full,wo_llm,wo_semantics,wo_joint", ablate_out;
  auto* ablate = app.add_subcommand("ablate", "train and test several modes on identical splits");
  add_data_options(ablate, ablate_opts);
  ablate->add_option("--modes", modes, "comma-separated modes");
  ablate->add_option("--seeds", ablate_opts.seeds, "seeds to sweep (default: config seed)")->delimiter(',');
  ablate->add_option("--out", ablate_out, "output directory")->required();

  DataOptions sv_opts;
  std::vector<std::string> views;
  std::string sv_out;
  auto* sv = app.add_subcommand("single-view", "train and test on one relation at a time");
  add_data_options(sv, sv_opts);
  sv->add_option("--view", views, "relation index, repeatable, or 'all'")->required()->delimiter(',');
  sv->add_option("--seeds", sv_opts.seeds, "seeds to sweep (default: config seed)")->delimiter(',');
  sv->add_option("--out", sv_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(spec_path, gen_out);
    if (*train) return cmd_train(train_opts, train_out, split_seed);
    if (*eval) return cmd_eval(ckpt, eval_manifest, split, json_out, scores_out);
    if (*ablate) return cmd_ablate(ablate_opts, modes, ablate_out);
    if (*sv) return cmd_single_view(sv_opts, views, sv_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lgspf: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
