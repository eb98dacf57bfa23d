#pragma once

// Named parameter collections and the GWCK checkpoint format:
//   "GWCK", u32 version, u32 count, then per tensor
//   u16 name length, name bytes, u8 rank, u32 dims[rank], f32 data.
// All integers little-endian.

#include "geowarp/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace geowarp::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  // Throws std::invalid_argument on duplicate names.
  void add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(value)});
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<T>& get(const std::string& name) { return entries_.at(lookup(name)).value; }
  const Tensor<T>& get(const std::string& name) const { return entries_.at(lookup(name)).value; }

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Decoding failures throw DataError.
std::vector<std::uint8_t> encode_checkpoint(const ParamSet<float>& params);
ParamSet<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace geowarp::nn
