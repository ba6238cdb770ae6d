// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "lgspf/dataio.hpp"
#include "lgspf/harness.hpp"

namespace lgspf::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "tensor files are little-endian");

constexpr char kMagic[4] = {'L', 'G', 'T', '1'};
constexpr int kFormatVersion = 1;

std::string tensor_file(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '/') {
      out += "__";
    } else {
      out += c;
    }
  }
  return out + ".lgt";
}

json nodes_json(const std::vector<graph::NodeId>& v) { return json(v); }

}  // namespace

void write_tensor(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  const std::uint64_t dims[2] = {m.rows(), m.cols()};
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(m.values().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Matrix read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  char magic[4];
  std::uint64_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error(path.string() + ": not an LGT1 tensor file");
  if (dims[0] > (1u << 28) || dims[1] > (1u << 28)) throw Error(path.string() + ": implausible shape");
  Matrix m(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(m.values().data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw Error(path.string() + ": truncated tensor data");
  if (in.peek() != std::char_traits<char>::eof()) throw Error(path.string() + ": trailing bytes");
  return m;
}

void save_checkpoint(Pipeline& p, const fs::path& dir, const json& extra) {
  fs::create_directories(dir / "tensors");
  json tensors = json::array();
  for (Parameter* param : p.parameters()) {
    const std::string file = "tensors/" + tensor_file(param->name);
    write_tensor(param->value, dir / file);
    tensors.push_back({{"name", param->name},
                       {"file", file},
                       {"rows", param->value.rows()},
                       {"cols", param->value.cols()}});
  }
  json history = json::array();
  for (const auto& e : p.history) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auc", e.val_auc}});
  }
  const auto& t = p.templates();
  json index{{"format", "lgspf-checkpoint"},
             {"version", kFormatVersion},
             {"config", p.config().to_json()},
             {"feature_dim", p.feature_dim()},
             {"relation_count", p.relation_count()},
             {"template", t.soft.to_json()},
             {"flat_template", t.flat ? t.flat->to_json() : json(nullptr)},
             {"vocabulary", p.vocabulary().to_json()},
             {"rng_state", p.rng().state()},
             {"splits",
              {{"train", nodes_json(p.splits.train)},
               {"val", nodes_json(p.splits.val)},
               {"test", nodes_json(p.splits.test)},
               {"seed", p.splits.seed}}},
             {"history", history},
             {"best_epoch", p.best_epoch},
             {"tensors", tensors},
             {"extra", extra}};
  io::write_json_file(index, dir / "index.json");
}

Pipeline load_checkpoint(const fs::path& dir, json* extra) {
  const json index = io::read_json_file(dir / "index.json");
  try {
    if (index.at("format") != "lgspf-checkpoint" || index.at("version") != kFormatVersion) {
      throw Error(dir.string() + ": unsupported checkpoint format");
    }
    Templates t{prompt::PromptTemplate::from_json(index.at("template")), std::nullopt};
    if (!index.at("flat_template").is_null()) {
      t.flat = prompt::FlatTemplate::from_json(index.at("flat_template"));
    }
    Pipeline p(TrainConfig::from_json(index.at("config")), index.at("feature_dim").get<std::size_t>(),
               index.at("relation_count").get<std::size_t>(), std::move(t));
    if (!(lm::Vocabulary::from_json(index.at("vocabulary")) == p.vocabulary())) {
      throw Error(dir.string() + ": stored vocabulary does not match the template's");
    }
    std::set<std::string> loaded;
    for (const auto& entry : index.at("tensors")) {
      const std::string name = entry.at("name");
      Parameter* param = p.find(name);
      if (param == nullptr) throw Error(dir.string() + ": unexpected tensor '" + name + "'");
      Matrix m = read_tensor(dir / entry.at("file").get<std::string>());
      if (!m.same_shape(param->value)) {
        throw Error(dir.string() + ": tensor '" + name + "' has shape " + shape_string(m) +
                    ", expected " + shape_string(param->value));
      }
      param->value = std::move(m);
      loaded.insert(name);
    }
    for (Parameter* param : p.parameters()) {
      if (!loaded.contains(param->name)) {
        throw Error(dir.string() + ": missing tensor '" + param->name + "'");
      }
    }
    p.rng().restore(index.at("rng_state").get<std::string>());
    const json& s = index.at("splits");
    p.splits.train = s.at("train").get<std::vector<graph::NodeId>>();
    p.splits.val = s.at("val").get<std::vector<graph::NodeId>>();
    p.splits.test = s.at("test").get<std::vector<graph::NodeId>>();
    p.splits.seed = s.at("seed").get<std::uint64_t>();
    for (const auto& e : index.at("history")) {
      p.history.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                           e.at("val_auc").get<double>()});
    }
    p.best_epoch = index.at("best_epoch").get<std::size_t>();
    if (extra != nullptr) *extra = index.value("extra", json::object());
    return p;
  } catch (const json::exception& ex) {
    throw Error((dir / "index.json").string() + ": " + ex.what());
  }
}

}  // namespace lgspf::harness
