#include "fls/weight_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace fls {

namespace {

static_assert(std::endian::native == std::endian::little,
              "weight file I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError(std::string("weight file truncated while reading ") + what);
  }
  return value;
}

std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

}  // namespace

void write_weight_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write("FLSW", 4);
  put<std::uint32_t>(out, kWeightFileVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > UINT16_MAX) throw ConfigError("tensor name too long: " + t.name);
    if (t.dims.size() > UINT8_MAX) throw ConfigError("too many dimensions in " + t.name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    std::size_t count = 1;
    for (auto d : t.dims) {
      put<std::uint32_t>(out, d);
      count *= d;
    }
    if (count != t.values.size()) throw ConfigError("tensor " + t.name + " payload does not match its dims");
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing weight file");
}

std::vector<NamedTensor> read_weight_tensors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FLSW", 4) != 0) {
    throw IoError("not a weight file (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kWeightFileVersion) {
    throw IoError("unsupported weight file version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, "tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = get<std::uint16_t>(in, "name length");
    t.name.resize(name_len);
    if (!in.read(t.name.data(), name_len)) throw IoError("weight file truncated in tensor name");
    const auto ndim = get<std::uint8_t>(in, "ndim");
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      t.dims.push_back(get<std::uint32_t>(in, "dims"));
      n *= t.dims.back();
    }
    if (n > (std::size_t{1} << 32)) throw IoError("tensor " + t.name + " is implausibly large");
    t.values.resize(n);
    if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
      throw IoError("weight file truncated in payload of " + t.name);
    }
    tensors.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after last tensor");
  return tensors;
}

std::vector<NamedTensor> model_tensors(Model& model) {
  std::vector<NamedTensor> tensors;
  for (const auto& p : model.parameters()) {
    NamedTensor t;
    t.name = p.name;
    for (int d : p.dims) t.dims.push_back(static_cast<std::uint32_t>(d));
    t.values.assign(p.values.begin(), p.values.end());
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void save_weights(Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_weight_tensors(out, model_tensors(model));
}

Model load_weights(Model model, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) throw ConfigError("duplicate tensor " + t.name);
  }
  auto params = model.parameters();
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("weight file is missing tensor " + p.name);
    const NamedTensor& t = *it->second;
    std::vector<std::uint32_t> expected(p.dims.begin(), p.dims.end());
    if (t.dims != expected) {
      throw ConfigError("shape mismatch for " + p.name + ": file has " + dims_string(t.dims) +
                        ", model expects " + dims_string(expected));
    }
    std::copy(t.values.begin(), t.values.end(), p.values.begin());
    by_name.erase(it);
  }
  if (!by_name.empty()) throw ConfigError("weight file has unexpected tensor " + by_name.begin()->first);
  return model;
}

Model load_weights(Model model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file " + path);
  return load_weights(std::move(model), read_weight_tensors(in));
}

}  // namespace fls
