#include <bit>
#include <fstream>

#include "tpp/error.hpp"
#include "tpp/json_io.hpp"
#include "tpp/models.hpp"

namespace tpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "tpp-checkpoint-v1";

fs::path with_suffix(const fs::path& prefix, const char* ext) { return fs::path(prefix.string() + ext); }

json read_manifest(const fs::path& prefix) {
  const fs::path p = with_suffix(prefix, ".json");
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::MissingFile, "checkpoint manifest not found: " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IncompatibleCheckpoint, "unreadable manifest " + p.string() + ": " + e.what());
  }
  if (j.value("format", "") != kFormat) {
    throw Error(ErrorCode::IncompatibleCheckpoint, "unknown checkpoint format in " + p.string());
  }
  return j;
}

}  // namespace

void save_checkpoint(const TppModel& model, const fs::path& prefix, std::uint64_t step) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  json layout = json::array();
  for (const auto& it : model.params().items()) {
    layout.push_back({{"name", it.name}, {"rows", it.tensor.rows()}, {"cols", it.tensor.cols()}});
  }
  const json manifest = {{"format", kFormat},
                         {"model", model.config()},
                         {"seed", model.config().seed},
                         {"step", step},
                         {"num_params", model.params().total_size()},
                         {"dtype", "float64-le"},
                         {"blob", with_suffix(prefix, ".bin").filename().string()},
                         {"layout", layout}};
  const auto flat = model.params().flatten();
  {
    std::ofstream bin(with_suffix(prefix, ".bin"), std::ios::binary | std::ios::trunc);
    bin.write(reinterpret_cast<const char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!bin) throw Error(ErrorCode::MissingFile, "cannot write checkpoint blob for " + prefix.string());
  }
  std::ofstream js(with_suffix(prefix, ".json"), std::ios::trunc);
  js << manifest.dump(2) << '\n';
  if (!js) throw Error(ErrorCode::MissingFile, "cannot write checkpoint manifest for " + prefix.string());
}

CheckpointInfo read_checkpoint_manifest(const fs::path& prefix) {
  const json j = read_manifest(prefix);
  CheckpointInfo info;
  info.config = j.at("model").get<ModelConfig>();
  info.step = j.value("step", std::uint64_t{0});
  info.num_params = j.at("num_params").get<std::size_t>();
  return info;
}

void load_checkpoint_into(TppModel& model, const fs::path& prefix) {
  const json j = read_manifest(prefix);
  const auto& items = model.params().items();
  const json& layout = j.at("layout");
  if (layout.size() != items.size()) {
    throw Error(ErrorCode::IncompatibleCheckpoint, "checkpoint has " + std::to_string(layout.size()) +
                                                       " tensors, model has " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& l = layout[i];
    if (l.at("name").get<std::string>() != items[i].name || l.at("rows").get<std::size_t>() != items[i].tensor.rows() ||
        l.at("cols").get<std::size_t>() != items[i].tensor.cols()) {
      throw Error(ErrorCode::IncompatibleCheckpoint, "tensor " + items[i].name + " does not match the checkpoint");
    }
  }
  const std::size_t n = model.params().total_size();
  std::vector<double> flat(n);
  std::ifstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!bin) throw Error(ErrorCode::MissingFile, "checkpoint blob not found for " + prefix.string());
  bin.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(n * sizeof(double)) || bin.peek() != EOF) {
    throw Error(ErrorCode::IncompatibleCheckpoint, "checkpoint blob size does not match the layout");
  }
  model.params().assign(flat);
}

std::unique_ptr<TppModel> load_checkpoint(const fs::path& prefix) {
  const CheckpointInfo info = read_checkpoint_manifest(prefix);
  auto model = make_model(info.config);
  load_checkpoint_into(*model, prefix);
  return model;
}

}  // namespace tpp
