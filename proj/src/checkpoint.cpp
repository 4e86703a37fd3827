#include "tromr/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace tromr {

namespace {
constexpr char kMagic[8] = {'T', 'R', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<NamedTensor>& tensors) {
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, w] : tensors)
    dir.push_back({{"name", name}, {"rows", w.rows()}, {"cols", w.cols()}});
  nlohmann::json header = {{"version", meta.version},
                           {"kind", meta.kind},
                           {"config", meta.config},
                           {"tensors", dir}};
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, w] : tensors)
    out.write(reinterpret_cast<const char*>(w.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(w.size())));
  if (!out) throw IoError("short write on checkpoint: " + path);
}

std::pair<CheckpointMeta, std::vector<NamedTensor>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw LoadError("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw LoadError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad checkpoint header: ") + e.what());
  }
  CheckpointMeta meta;
  meta.version = header.value("version", "");
  meta.kind = header.value("kind", "");
  meta.config = header.value("config", nlohmann::json::object());

  std::vector<NamedTensor> tensors;
  for (const auto& t : header.at("tensors")) {
    Eigen::MatrixXf w(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(w.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(w.size())));
    if (!in) throw LoadError("truncated checkpoint tensor data: " + path);
    tensors.emplace_back(t.at("name").get<std::string>(), std::move(w));
  }
  return {meta, std::move(tensors)};
}

std::pair<CheckpointMeta, std::vector<NamedTensor>> load_checkpoint(
    const std::string& path, const std::string& expect_kind) {
  auto loaded = load_checkpoint(path);
  if (loaded.first.version != kCheckpointVersion)
    throw LoadError("checkpoint version mismatch: expected " + std::string(kCheckpointVersion) +
                    ", found '" + loaded.first.version + "' in " + path);
  if (loaded.first.kind != expect_kind)
    throw LoadError("checkpoint kind mismatch: expected " + expect_kind + ", found '" +
                    loaded.first.kind + "' in " + path);
  return loaded;
}

}  // namespace tromr
