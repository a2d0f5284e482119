#pragma once

// Single-file container of named numeric arrays plus JSON metadata.
//
// Layout: 8 magic bytes "RFLPCKPT", u32 version, u64 header length, UTF-8 JSON header
// {"tensors": {name: {dtype, shape, offset, length}}, "meta": {...}}, then the raw
// little-endian buffers. Offsets are relative to the end of the header.

#include <map>
#include <string>

#include <json.hpp>

#include "reflprior/tensor.hpp"

namespace reflprior {

class Archive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  template <typename Scalar>
  void put(const std::string& name, const nn::Shape& shape, const nn::Vec<Scalar>& values);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const nn::Shape& shape(const std::string& name) const;

  // Converts from the stored dtype if needed. Throws CheckpointError on missing names or a
  // shape mismatch when expected_shape is non-empty.
  template <typename Scalar>
  nn::Vec<Scalar> get(const std::string& name, const nn::Shape& expected_shape = {}) const;

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  std::string serialize() const;
  static Archive deserialize(const std::string& bytes);

  void save(const std::string& path) const;  // write-temp-then-rename
  static Archive load(const std::string& path);

 private:
  struct Entry {
    std::string dtype;  // "f32" or "f64"
    nn::Shape shape;
    std::string bytes;
  };
  std::map<std::string, Entry> entries_;
  nlohmann::json meta_ = nlohmann::json::object();
};

}  // namespace reflprior
