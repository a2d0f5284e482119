#include "reflprior/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "reflprior/curve_io.hpp"
#include "reflprior/error.hpp"

namespace reflprior {

static_assert(std::endian::native == std::endian::little, "archive assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'F', 'L', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void append_pod(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_pod(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

template <typename Scalar>
const char* dtype_of();
template <>
const char* dtype_of<float>() { return "f32"; }
template <>
const char* dtype_of<double>() { return "f64"; }

}  // namespace

template <typename Scalar>
void Archive::put(const std::string& name, const nn::Shape& shape, const nn::Vec<Scalar>& values) {
  if (nn::shape_size(shape) != values.size())
    throw InvalidInput("archive entry '" + name + "' does not match its shape");
  Entry e;
  e.dtype = dtype_of<Scalar>();
  e.shape = shape;
  e.bytes.assign(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::size_t>(values.size()) * sizeof(Scalar));
  entries_[name] = std::move(e);
}

const nn::Shape& Archive::shape(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  return it->second.shape;
}

template <typename Scalar>
nn::Vec<Scalar> Archive::get(const std::string& name, const nn::Shape& expected_shape) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  const Entry& e = it->second;
  if (!expected_shape.empty() && expected_shape != e.shape)
    throw CheckpointError("tensor '" + name + "' has shape " + nn::shape_string(e.shape) +
                          ", expected " + nn::shape_string(expected_shape));
  const auto n = nn::shape_size(e.shape);
  nn::Vec<Scalar> out(n);
  if (e.dtype == "f32") {
    nn::Vec<float> raw(n);
    std::memcpy(raw.data(), e.bytes.data(), e.bytes.size());
    out = raw.template cast<Scalar>();
  } else {
    nn::Vec<double> raw(n);
    std::memcpy(raw.data(), e.bytes.data(), e.bytes.size());
    out = raw.template cast<Scalar>();
  }
  return out;
}

std::string Archive::serialize() const {
  nlohmann::json header;
  header["meta"] = meta_;
  header["tensors"] = nlohmann::json::object();
  std::size_t offset = 0;
  for (const auto& [name, e] : entries_) {
    header["tensors"][name] = {{"dtype", e.dtype},
                               {"shape", e.shape},
                               {"offset", offset},
                               {"length", e.bytes.size()}};
    offset += e.bytes.size();
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  append_pod<std::uint32_t>(out, kVersion);
  append_pod<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, e] : entries_) out += e.bytes;
  return out;
}

Archive Archive::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError("not a reflprior checkpoint (bad magic bytes)");
  std::size_t pos = sizeof kMagic;
  const auto version = read_pod<std::uint32_t>(bytes, pos);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = read_pod<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw CheckpointError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + ex.what());
  }
  pos += header_len;
  const std::size_t data_start = pos;

  Archive a;
  try {
    a.meta_ = header.at("meta");
    for (const auto& [name, info] : header.at("tensors").items()) {
      Entry e;
      e.dtype = info.at("dtype").get<std::string>();
      if (e.dtype != "f32" && e.dtype != "f64")
        throw CheckpointError("tensor '" + name + "' has unknown dtype " + e.dtype);
      e.shape = info.at("shape").get<nn::Shape>();
      const auto offset = info.at("offset").get<std::size_t>();
      const auto length = info.at("length").get<std::size_t>();
      const std::size_t width = e.dtype == "f32" ? 4 : 8;
      if (length != static_cast<std::size_t>(nn::shape_size(e.shape)) * width)
        throw CheckpointError("tensor '" + name + "' length does not match its shape");
      if (data_start + offset + length > bytes.size())
        throw CheckpointError("tensor '" + name + "' extends past the end of the file");
      e.bytes = bytes.substr(data_start + offset, length);
      a.entries_[name] = std::move(e);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + ex.what());
  }
  return a;
}

void Archive::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

template void Archive::put<float>(const std::string&, const nn::Shape&, const nn::Vec<float>&);
template void Archive::put<double>(const std::string&, const nn::Shape&, const nn::Vec<double>&);
template nn::Vec<float> Archive::get<float>(const std::string&, const nn::Shape&) const;
template nn::Vec<double> Archive::get<double>(const std::string&, const nn::Shape&) const;

}  // namespace reflprior
