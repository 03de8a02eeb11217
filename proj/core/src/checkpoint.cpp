#include "magkit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace magkit {
namespace {

constexpr char kMagic[8] = {'M', 'G', 'C', 'P', '0', '0', '0', '1'};

uint8_t dtype_tag(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    case torch::kInt32: return 4;
    case torch::kBool: return 5;
    default: TORCH_CHECK(false, "unsupported dtype in tensor store");
  }
}

torch::Dtype tag_dtype(uint8_t t) {
  switch (t) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    case 4: return torch::kInt32;
    case 5: return torch::kBool;
    default: TORCH_CHECK(false, "bad dtype tag in tensor store");
  }
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  TORCH_CHECK(is.good(), "truncated tensor store");
  return v;
}

void write_str(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, (uint32_t)s.size());
  os.write(s.data(), (std::streamsize)s.size());
}

std::string read_str(std::istream& is) {
  auto n = read_pod<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  TORCH_CHECK(is.good(), "truncated tensor store");
  return s;
}

}  // namespace

void TensorStore::put(const std::string& name, const torch::Tensor& t) {
  for (auto& e : entries_)
    if (e.first == name) {
      e.second = t.detach().cpu().contiguous();
      return;
    }
  entries_.emplace_back(name, t.detach().cpu().contiguous());
}

void TensorStore::put_string(const std::string& key, const std::string& value) {
  for (auto& e : strings_)
    if (e.first == key) {
      e.second = value;
      return;
    }
  strings_.emplace_back(key, value);
}

const torch::Tensor& TensorStore::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  TORCH_CHECK(false, "tensor store has no entry '", name, "'");
}

torch::Tensor TensorStore::get_or(const std::string& name, torch::Tensor fallback) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  return fallback;
}

bool TensorStore::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

std::string TensorStore::get_string(const std::string& key) const {
  for (const auto& e : strings_)
    if (e.first == key) return e.second;
  TORCH_CHECK(false, "tensor store has no string '", key, "'");
}

bool TensorStore::has_string(const std::string& key) const {
  for (const auto& e : strings_)
    if (e.first == key) return true;
  return false;
}

void TensorStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  TORCH_CHECK(os.good(), "cannot write tensor store: ", path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(os, entries_.size());
  for (const auto& [name, t] : entries_) {
    write_str(os, name);
    write_pod<uint8_t>(os, dtype_tag(t.scalar_type()));
    write_pod<uint32_t>(os, (uint32_t)t.dim());
    for (auto d : t.sizes()) write_pod<int64_t>(os, d);
    uint64_t bytes = (uint64_t)t.numel() * t.element_size();
    write_pod<uint64_t>(os, bytes);
    os.write(reinterpret_cast<const char*>(t.const_data_ptr()), (std::streamsize)bytes);
  }
  write_pod<uint32_t>(os, (uint32_t)strings_.size());
  for (const auto& [k, v] : strings_) {
    write_str(os, k);
    write_str(os, v);
  }
  TORCH_CHECK(os.good(), "failed writing tensor store: ", path);
}

TensorStore TensorStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  TORCH_CHECK(is.good(), "cannot open tensor store: ", path);
  char magic[8];
  is.read(magic, 8);
  TORCH_CHECK(is.good() && std::memcmp(magic, kMagic, 8) == 0, "not a tensor store: ", path);
  TensorStore store;
  auto n = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < n; ++i) {
    auto name = read_str(is);
    auto dtype = tag_dtype(read_pod<uint8_t>(is));
    auto ndim = read_pod<uint32_t>(is);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = read_pod<int64_t>(is);
    auto bytes = read_pod<uint64_t>(is);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    TORCH_CHECK((uint64_t)t.numel() * t.element_size() == bytes, "tensor store size mismatch for '", name, "'");
    is.read(reinterpret_cast<char*>(t.data_ptr()), (std::streamsize)bytes);
    TORCH_CHECK(is.good(), "truncated tensor store at '", name, "'");
    store.entries_.emplace_back(std::move(name), std::move(t));
  }
  auto ns = read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < ns; ++i) {
    auto k = read_str(is);
    auto v = read_str(is);
    store.strings_.emplace_back(std::move(k), std::move(v));
  }
  return store;
}

void TensorStore::put_module(const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters(/*recurse=*/true)) put(prefix + p.key(), p.value());
  for (const auto& b : m.named_buffers(/*recurse=*/true)) put(prefix + b.key(), b.value());
}

void TensorStore::load_module(const std::string& prefix, torch::nn::Module& m) const {
  torch::NoGradGuard ng;
  for (auto p : m.named_parameters(/*recurse=*/true)) {
    const auto& src = get(prefix + p.key());
    TORCH_CHECK(src.sizes() == p.value().sizes(), "checkpoint shape mismatch for ", prefix + p.key());
    p.value().copy_(src);
  }
  for (auto b : m.named_buffers(/*recurse=*/true)) {
    const auto& src = get(prefix + b.key());
    TORCH_CHECK(src.sizes() == b.value().sizes(), "checkpoint shape mismatch for ", prefix + b.key());
    b.value().copy_(src);
  }
}

}  // namespace magkit
