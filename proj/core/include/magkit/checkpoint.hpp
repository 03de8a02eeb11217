#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace magkit {

// Ordered name -> tensor container with a tagged binary file format. Layout:
//   magic "MGCP0001"
//   u64 entry count
//   per entry: u32 name length, name bytes, u8 dtype tag, u32 ndim, i64 dims,
//              u64 payload bytes, raw little-endian payload
//   one string section: u32 count, then (u32 len, bytes) pairs for metadata
// Entries keep insertion order, so save(load(f)) reproduces f byte for byte.
class TensorStore {
 public:
  void put(const std::string& name, const torch::Tensor& t);
  void put_string(const std::string& key, const std::string& value);
  const torch::Tensor& get(const std::string& name) const;
  torch::Tensor get_or(const std::string& name, torch::Tensor fallback) const;
  bool has(const std::string& name) const;
  std::string get_string(const std::string& key) const;
  bool has_string(const std::string& key) const;

  const std::vector<std::pair<std::string, torch::Tensor>>& entries() const { return entries_; }
  const std::vector<std::pair<std::string, std::string>>& strings() const { return strings_; }

  void save(const std::string& path) const;
  static TensorStore load(const std::string& path);

  // All module parameters and buffers, prefixed; load copies values in place.
  void put_module(const std::string& prefix, const torch::nn::Module& m);
  void load_module(const std::string& prefix, torch::nn::Module& m) const;

 private:
  std::vector<std::pair<std::string, torch::Tensor>> entries_;
  std::vector<std::pair<std::string, std::string>> strings_;
};

}  // namespace magkit
