#include "a3t/checkpoint.hpp"

#include "a3t/config.hpp"
#include "binary_io.hpp"

#include <fstream>

namespace a3t {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Json header{{"version", kCheckpointVersion}, {"model", to_json(ckpt.model)}, {"train", to_json(ckpt.train)},
              {"step", ckpt.step},           {"epoch", ckpt.epoch},           {"batch_index", ckpt.batch_index},
              {"adam_steps", ckpt.adam_steps}};
  Json index = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    index.push_back(Json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + tmp.string());
    out.write("A3TC", 4);
    io::put_le<std::uint32_t>(out, kCheckpointVersion);
    io::put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ckpt.tensors)
      for (Eigen::Index i = 0; i < m.size(); ++i) io::put_le<double>(out, m.data()[i]);
    out.flush();
    if (!out) throw DataError("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "A3TC") throw DataError("not a checkpoint file: " + path.string());
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  if (!io::get_le(in, version) || !io::get_le(in, header_len)) throw DataError("truncated checkpoint header");
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  if (header_len > (1u << 30)) throw DataError("implausible checkpoint header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw DataError("truncated checkpoint header");

  Checkpoint ckpt;
  Json header;
  try {
    header = Json::parse(text);
    ckpt.model = model_config_from_json(header.at("model"));
    ckpt.train = train_config_from_json(header.at("train"));
    ckpt.step = header.at("step").get<long>();
    ckpt.epoch = header.at("epoch").get<long>();
    ckpt.batch_index = header.at("batch_index").get<long>();
    ckpt.adam_steps = header.at("adam_steps").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint header holds an invalid config: ") + e.what());
  }

  // Shapes must agree with the architecture the header describes before any
  // tensor data is read.
  const A3tModel reference(ckpt.model, 0);
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto slash = name.find('/');
    if (slash == std::string::npos) throw DataError("malformed checkpoint tensor name: " + name);
    const std::string param = name.substr(slash + 1);
    if (!reference.parameters().contains(param)) throw DataError("checkpoint tensor for unknown parameter: " + name);
    const auto& expected = reference.parameters().get(param);
    if (expected.rows() != rows || expected.cols() != cols)
      throw DataError("checkpoint tensor " + name + " has the wrong shape");
    ckpt.tensors.emplace_back(name, Matrix(rows, cols));
  }
  for (auto& [name, m] : ckpt.tensors)
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (!io::get_le(in, m.data()[i])) throw DataError("truncated checkpoint tensor data: " + name);
  return ckpt;
}

A3tModel model_from_checkpoint(const Checkpoint& ckpt) {
  A3tModel model(ckpt.model, 0);
  for (auto& [name, p] : model.parameters()) {
    const Matrix* m = ckpt.find("param/" + name);
    if (!m) throw DataError("checkpoint lacks parameter " + name);
    p.mutable_value() = *m;
  }
  return model;
}

}  // namespace a3t
