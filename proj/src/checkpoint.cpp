#include "cascade/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "cascade/errors.hpp"

namespace cascade {

namespace {
constexpr char kMagic[8] = {'C', 'A', 'S', 'C', 'K', 'P', 'T', '1'};
}

const Tensor& Checkpoint::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw std::out_of_range("checkpoint has no parameter " + name);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json meta = ckpt.meta;
  meta["params"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.params) {
    const Shape s = t.shape();
    meta["params"].push_back({{"name", name},
                              {"shape", {s.n, s.c, s.h, s.w}},
                              {"offset", offset},
                              {"count", t.size()}});
    offset += t.size() * sizeof(float);
  }
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& item : ckpt.params) {
    out.write(reinterpret_cast<const char*>(item.second.data()),
              static_cast<std::streamsize>(item.second.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(text);
  const std::streamoff base = in.tellg();
  for (const auto& p : ckpt.meta.at("params")) {
    const auto shape = p.at("shape").get<std::vector<int>>();
    Tensor t({shape.at(0), shape.at(1), shape.at(2), shape.at(3)});
    in.seekg(base + static_cast<std::streamoff>(p.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint blob in " + path.string());
    ckpt.params.emplace_back(p.at("name").get<std::string>(), std::move(t));
  }
  ckpt.meta.erase("params");
  return ckpt;
}

Checkpoint snapshot(const nn::ParamStore& ps, nlohmann::json meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& [name, var] : ps.items()) ckpt.params.emplace_back(name, var->value);
  return ckpt;
}

void restore(nn::ParamStore& ps, const Checkpoint& ckpt) {
  for (const auto& [name, var] : ps.items()) {
    const Tensor& t = ckpt.param(name);
    if (t.shape() != var->value.shape()) {
      throw std::invalid_argument("checkpoint parameter " + name + " has shape " +
                                  t.shape().str() + ", model expects " +
                                  var->value.shape().str());
    }
    var->value = t;
  }
}

}  // namespace cascade
