#include "rim/checkpoint.hpp"

#include "rim/errors.hpp"
#include "rim/rimt.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <sstream>

namespace rim {

using nlohmann::json;
namespace fs = std::filesystem;

json model_config_to_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},         {"d_model", c.d_model},         {"n_heads", c.n_heads},
          {"d_k", c.d_k},                   {"d_v", c.d_v},                 {"ff_expansion", c.ff_expansion},
          {"conv_kernel", c.conv_kernel},   {"embed_kernel", c.embed_kernel}, {"in_channels", c.in_channels},
          {"signal_len", c.signal_len}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<Index>();
  c.d_model = j.at("d_model").get<Index>();
  c.n_heads = j.at("n_heads").get<Index>();
  c.d_k = j.at("d_k").get<Index>();
  c.d_v = j.at("d_v").get<Index>();
  c.ff_expansion = j.at("ff_expansion").get<Index>();
  c.conv_kernel = j.at("conv_kernel").get<Index>();
  c.embed_kernel = j.at("embed_kernel").get<Index>();
  c.in_channels = j.at("in_channels").get<Index>();
  c.signal_len = j.at("signal_len").get<Index>();
  return c;
}

void save_checkpoint(const fs::path& path, const RimformerParams& params, const CheckpointMeta& meta) {
  std::ostringstream blobs(std::ios::binary);
  json index = json::array();
  params.for_each([&](const std::string& name, const Tensor& t) {
    const auto offset = static_cast<std::uint64_t>(blobs.tellp());
    write_rimt(blobs, to_rimt(t, Dtype::f64));
    const auto end = static_cast<std::uint64_t>(blobs.tellp());
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", end - offset}});
  });
  const json header{{"schema_version", kCheckpointSchema},
                    {"format", "rimformer-checkpoint"},
                    {"model", model_config_to_json(params.config)},
                    {"window", {{"slide", params.config.window.slide}, {"overlap", params.config.window.overlap}}},
                    {"step", meta.step},
                    {"epoch", meta.epoch},
                    {"dtype", "f64"},
                    {"parameters", index}};

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open " + tmp.string() + " for writing");
    os << header.dump() << '\n';
    const std::string payload = blobs.str();
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os.flush()) throw IoError("checkpoint: write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("checkpoint: cannot move into place " + path.string() + ": " + ec.message());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactError("checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ArtifactError("checkpoint: missing header");
  const std::streamoff base = is.tellg();

  json header;
  LoadedCheckpoint out;
  std::map<std::string, json> entries;
  try {
    header = json::parse(line);
    if (header.at("schema_version").get<int>() != kCheckpointSchema)
      throw ArtifactError("checkpoint: unsupported schema version");
    ModelConfig cfg = model_config_from_json(header.at("model"));
    cfg.window.slide = header.at("window").at("slide").get<Index>();
    cfg.window.overlap = header.at("window").at("overlap").get<Index>();
    cfg.validate();
    out.params = init_params(cfg, 0);
    out.meta.step = header.at("step").get<std::int64_t>();
    out.meta.epoch = header.at("epoch").get<std::int64_t>();
    for (const auto& e : header.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      if (!entries.emplace(name, e).second) throw ArtifactError("checkpoint: duplicate parameter " + name);
    }
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ArtifactError(std::string("checkpoint: invalid model config: ") + e.what());
  }

  std::size_t matched = 0;
  out.params.for_each([&](const std::string& name, Tensor& t) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw ArtifactError("checkpoint: missing parameter " + name);
    ++matched;
    std::uint64_t offset = 0;
    try {
      offset = it->second.at("offset").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ArtifactError("checkpoint: bad index entry for " + name);
    }
    is.clear();
    is.seekg(base + static_cast<std::streamoff>(offset));
    if (!is) throw ArtifactError("checkpoint: offset out of range for " + name);
    const Tensor loaded = from_rimt(read_rimt(is));
    if (loaded.shape() != t.shape())
      throw ArtifactError("checkpoint: parameter " + name + " has shape " + shape_string(loaded.shape()) + ", expected " +
                          shape_string(t.shape()));
    t = Tensor(t.shape(), loaded.value(), true);
  });
  if (matched != entries.size()) throw ArtifactError("checkpoint: unexpected extra parameters");
  return out;
}

}  // namespace rim
