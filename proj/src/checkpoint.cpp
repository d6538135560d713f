#include "treecaps/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace treecaps {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'C', 'A', 'P'};

json config_to_json(const ModelConfig& c) {
  return json{{"conv_layers", c.conv_layers},
              {"type_dim", c.type_dim},
              {"token_dim", c.token_dim},
              {"feature_mode", to_string(c.feature_mode)},
              {"routing_kind", to_string(c.routing_kind)},
              {"routing_iterations", c.routing_iterations},
              {"n_sc", c.n_sc},
              {"d_sc", c.d_sc},
              {"d_cc", c.d_cc},
              {"task", to_string(c.task)},
              {"num_classes", c.num_classes},
              {"num_names", c.num_names},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"drsw_norm_prefilter", c.drsw_norm_prefilter},
              {"margin",
               {{"m_plus", c.margin.m_plus},
                {"m_minus", c.margin.m_minus},
                {"lambda_down", c.margin.lambda_down}}}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.conv_layers = j.at("conv_layers");
  c.type_dim = j.at("type_dim");
  c.token_dim = j.at("token_dim");
  c.feature_mode = feature_mode_from_string(j.at("feature_mode"));
  c.routing_kind = routing_kind_from_string(j.at("routing_kind"));
  c.routing_iterations = j.at("routing_iterations");
  c.n_sc = j.at("n_sc");
  c.d_sc = j.at("d_sc");
  c.d_cc = j.at("d_cc");
  c.task = task_from_string(j.at("task"));
  c.num_classes = j.at("num_classes");
  c.num_names = j.at("num_names");
  c.lr = j.at("lr");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  c.drsw_norm_prefilter = j.at("drsw_norm_prefilter");
  c.margin.m_plus = j.at("margin").at("m_plus");
  c.margin.m_minus = j.at("margin").at("m_minus");
  c.margin.lambda_down = j.at("margin").at("lambda_down");
  return c;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw CheckpointError("truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_tensor_blob(std::ostream& os, const Matrix& m) {
  // row-major little-endian doubles
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      double d = m(i, j);
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      write_u64(os, bits);
    }
}

Matrix read_tensor_blob(std::istream& is, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      std::uint64_t bits = read_u64(is);
      double d;
      std::memcpy(&d, &bits, 8);
      m(i, j) = d;
    }
  return m;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path,
                     const OptimizerState* opt_state) {
  json header;
  header["config"] = config_to_json(model.cfg);
  header["vocab"] = {{"type_names", model.vocab.type_names},
                     {"tokens", model.vocab.tokens},
                     {"min_count", model.vocab.min_count}};
  header["names"] = model.names;
  json dir = json::array();
  std::uint64_t offset = 0;
  auto add_entry = [&](const std::string& name, const Matrix& t) {
    dir.push_back({{"name", name},
                   {"dtype", "f64"},
                   {"shape", {t.rows(), t.cols()}},
                   {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.rows()) * static_cast<std::uint64_t>(t.cols()) * 8;
  };
  for (const auto& [name, t] : model.params.tensors) add_entry(name, t);
  if (opt_state) {
    header["opt_step"] = opt_state->step;
    for (const auto& [name, t] : opt_state->m.tensors) add_entry("opt.m." + name, t);
    for (const auto& [name, t] : opt_state->v.tensors) add_entry("opt.v." + name, t);
  }
  header["tensors"] = std::move(dir);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path);
  os.write(kMagic, 4);
  write_u32(os, kCheckpointVersion);
  std::string hs = header.dump();
  write_u64(os, hs.size());
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : model.params.tensors) write_tensor_blob(os, t);
  if (opt_state) {
    for (const auto& [name, t] : opt_state->m.tensors) write_tensor_blob(os, t);
    for (const auto& [name, t] : opt_state->v.tensors) write_tensor_blob(os, t);
  }
  if (!os) throw CheckpointError("write failure on " + path);
}

Model load_checkpoint(const std::string& path, OptimizerState* opt_state) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("bad magic bytes: not a checkpoint file");
  std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t header_len = read_u64(is);
  std::string hs(header_len, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw CheckpointError("truncated header");
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed header: ") + e.what());
  }

  Model model;
  model.cfg = config_from_json(header.at("config"));
  model.vocab.type_names = header.at("vocab").at("type_names").get<std::vector<std::string>>();
  model.vocab.tokens = header.at("vocab").at("tokens").get<std::vector<std::string>>();
  model.vocab.min_count = header.at("vocab").at("min_count");
  model.vocab.rebuild_index();
  model.names = header.at("names").get<std::vector<std::string>>();

  if (opt_state) {
    opt_state->step = header.value("opt_step", 0LL);
    opt_state->m.tensors.clear();
    opt_state->v.tensors.clear();
  }
  for (const json& entry : header.at("tensors")) {
    std::string name = entry.at("name");
    if (entry.at("dtype") != "f64")
      throw CheckpointError("unsupported dtype for " + name);
    int rows = entry.at("shape").at(0);
    int cols = entry.at("shape").at(1);
    Matrix t = read_tensor_blob(is, rows, cols);
    if (name.rfind("opt.m.", 0) == 0) {
      if (opt_state) opt_state->m.tensors[name.substr(6)] = std::move(t);
    } else if (name.rfind("opt.v.", 0) == 0) {
      if (opt_state) opt_state->v.tensors[name.substr(6)] = std::move(t);
    } else {
      model.params.tensors[name] = std::move(t);
    }
  }

  // cross-check shapes against a freshly initialized model of the same config
  Model ref = init_model(model.cfg, model.vocab, model.names);
  for (const auto& [name, t] : ref.params.tensors) {
    if (!model.params.has(name))
      throw CheckpointError("checkpoint missing tensor " + name);
    const Matrix& got = model.params.at(name);
    if (got.rows() != t.rows() || got.cols() != t.cols())
      throw CheckpointError("shape mismatch for tensor " + name);
  }
  return model;
}

}  // namespace treecaps
