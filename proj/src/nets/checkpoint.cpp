#include "dacount/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dacount {

namespace {

using nlohmann::json;

void write_u64le(std::ostream& os, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void Checkpoint::add(const std::string& name, const Tensor& t) {
  if (find(name))
    throw std::invalid_argument("checkpoint: duplicate tensor name '" + name + "'");
  tensors.emplace_back(name, t);
}

void Checkpoint::store_module(const std::string& prefix, const Module& m) {
  for (const Parameter* p : m.parameters()) add(prefix + "." + p->name, p->value);
}

void Checkpoint::load_module(const std::string& prefix, Module& m) const {
  for (Parameter* p : m.parameters()) {
    const std::string key = prefix + "." + p->name;
    const Tensor* t = find(key);
    if (!t) throw std::runtime_error("checkpoint: missing tensor '" + key + "'");
    if (t->shape() != p->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + key + "': stored " +
                               t->shape_str() + ", expected " + p->value.shape_str());
    p->value = *t;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  json manifest;
  manifest["format"] = "DACKPT1";
  manifest["step"] = c.step;
  manifest["config"] = c.config;
  manifest["extra"] = c.extra;
  json dir = json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.numel()}});
    offset += t.numel();
  }
  manifest["tensors"] = dir;
  const std::string mtext = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(Checkpoint::kMagic, 8);
  write_u64le(os, mtext.size());
  os.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& [name, t] : c.tensors) {
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * 8));
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path, const nlohmann::json* expected_config) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, Checkpoint::kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' is not a DACKPT1 archive");
  const uint64_t mlen = read_u64le(is);
  std::string mtext(mlen, '\0');
  is.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw std::runtime_error("checkpoint: truncated manifest in '" + path + "'");

  json manifest;
  try {
    manifest = json::parse(mtext);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint: bad manifest in '" + path + "': " + e.what());
  }
  if (manifest.value("format", "") != "DACKPT1")
    throw std::runtime_error("checkpoint: unsupported format in '" + path + "'");

  Checkpoint c;
  c.step = manifest.value("step", int64_t{0});
  c.config = manifest.value("config", json::object());
  c.extra = manifest.value("extra", json::object());
  if (expected_config && *expected_config != c.config)
    throw std::runtime_error("checkpoint: '" + path +
                             "' was written with a different config; refusing to load");

  int64_t expect_offset = 0;
  for (const auto& rec : manifest.value("tensors", json::array())) {
    const std::string name = rec.at("name").get<std::string>();
    const std::vector<int> shape = rec.at("shape").get<std::vector<int>>();
    const int64_t count = rec.at("count").get<int64_t>();
    Tensor t(shape);
    if (t.numel() != count || rec.at("offset").get<int64_t>() != expect_offset)
      throw std::runtime_error("checkpoint: inconsistent record for '" + name + "'");
    expect_offset += count;
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(count * 8));
    if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    c.tensors.emplace_back(name, std::move(t));
  }
  return c;
}

}  // namespace dacount
