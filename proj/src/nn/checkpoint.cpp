#include "cadvlm/nn/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "cadvlm/error.hpp"

namespace cadvlm::nn {

namespace {

constexpr const char* kFormat = "cadvlm-ckpt-v1";

}  // namespace

void save_checkpoint(const std::string& dir, const ParamStore& store, const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir + "/params.bin", std::ios::binary);
  if (!bin) throw Error(Errc::Io, "cannot write " + dir + "/params.bin");

  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  auto put = [&](const std::string& name, const Tensor& t) {
    bin.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  };
  for (const auto& e : store.entries()) put(e.name, e.param.value());
  for (const auto& e : store.entries()) put("adam.m/" + e.name, e.m);
  for (const auto& e : store.entries()) put("adam.v/" + e.name, e.v);
  if (!bin) throw Error(Errc::Io, "write failed for " + dir + "/params.bin");

  nlohmann::json manifest = {
      {"format", kFormat}, {"step", store.step()}, {"config", config}, {"tensors", std::move(tensors)}};
  std::ofstream man(dir + "/manifest.json");
  if (!man) throw Error(Errc::Io, "cannot write " + dir + "/manifest.json");
  man << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::string& dir) {
  std::ifstream man(dir + "/manifest.json");
  if (!man) throw Error(Errc::Io, "no checkpoint manifest in " + dir);
  nlohmann::json manifest;
  try {
    man >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CheckpointMismatch, std::string("unreadable manifest: ") + e.what());
  }
  if (manifest.value("format", "") != kFormat) {
    throw Error(Errc::CheckpointMismatch, "unknown checkpoint format in " + dir);
  }
  return manifest;
}

nlohmann::json load_checkpoint(const std::string& dir, ParamStore& store) {
  const nlohmann::json manifest = read_manifest(dir);
  std::ifstream bin(dir + "/params.bin", std::ios::binary);
  if (!bin) throw Error(Errc::Io, "cannot read " + dir + "/params.bin");

  std::unordered_map<std::string, std::pair<Shape, std::size_t>> index;
  for (const auto& t : manifest["tensors"]) {
    index[t["name"].get<std::string>()] = {t["shape"].get<Shape>(), t["offset"].get<std::size_t>()};
  }
  auto read_into = [&](const std::string& name, Tensor& dst, bool required) {
    auto it = index.find(name);
    if (it == index.end()) {
      if (required) throw Error(Errc::CheckpointMismatch, "checkpoint lacks " + name);
      return;
    }
    if (it->second.first != dst.shape()) {
      throw Error(Errc::CheckpointMismatch, name + " has shape " + shape_str(it->second.first) + ", model expects " +
                                                shape_str(dst.shape()));
    }
    bin.seekg(static_cast<std::streamoff>(it->second.second * sizeof(double)));
    bin.read(reinterpret_cast<char*>(dst.ptr()), static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!bin) throw Error(Errc::Io, "truncated " + dir + "/params.bin at " + name);
  };
  for (auto& e : store.entries()) {
    read_into(e.name, e.param.value(), true);
    read_into("adam.m/" + e.name, e.m, false);
    read_into("adam.v/" + e.name, e.v, false);
  }
  store.set_step(manifest.value("step", 0L));
  return manifest.value("config", nlohmann::json::object());
}

}  // namespace cadvlm::nn
