#pragma once

// Weight checkpoint file ("VIBW").
//
//   magic    4 bytes  "VIBW"
//   version  u32      1
//   records  until end of file, each:
//     name_len u32, name bytes,
//     rank     u32, dims u64[rank],
//     payload  f64[product(dims)]
//
// All integers and doubles are little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vibgmm/autodiff.hpp"
#include "vibgmm/errors.hpp"
#include "vibgmm/tensor.hpp"

namespace vibgmm {

inline constexpr char kCheckpointMagic[4] = {'V', 'I', 'B', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  bool done() const { return pos_ == data_.size(); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw ParseError(source_ + ": truncated " + what + " at byte offset " +
                       std::to_string(pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(source_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }

 private:
  std::vector<unsigned char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write failed for '" + path + "'");
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.buffer();
}

inline std::vector<NamedTensor> decode_checkpoint(std::vector<unsigned char> bytes,
                                                  const std::string& source = "checkpoint") {
  detail::ByteReader r(std::move(bytes), source);
  if (r.str(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw ParseError(source + ": bad checkpoint magic at byte offset 0");
  }
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  std::vector<NamedTensor> out;
  while (!r.done()) {
    const auto name_len = r.u32("name length");
    std::string name = r.str(name_len, "tensor name");
    const auto rank = r.u32("rank");
    if (rank > 8) r.fail("implausible tensor rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = r.u64("dimension");
      if (d == 0) r.fail("zero dimension in tensor '" + name + "'");
      shape.push_back(static_cast<std::size_t>(d));
    }
    const auto n = shape_size(shape);
    r.need(n * 8, "tensor payload");
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64("tensor payload");
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  detail::write_file_bytes(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file_bytes(path), path);
}

inline std::vector<NamedTensor> snapshot(std::span<Parameter* const> params) {
  std::vector<NamedTensor> out;
  for (const auto* p : params) out.push_back({p->name, p->value});
  return out;
}

/// Copies checkpoint tensors into matching parameters by name. Every
/// parameter must be present with an identical shape.
inline void restore(std::span<Parameter* const> params, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& nt : tensors) by_name[nt.name] = &nt.tensor;
  for (auto* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ParseError("checkpoint has no tensor '" + p->name + "'");
    if (it->second->shape() != p->value.shape()) {
      throw DimensionError("checkpoint tensor '" + p->name + "' has shape " +
                           shape_string(it->second->shape()) + ", expected " +
                           shape_string(p->value.shape()));
    }
    p->value = *it->second;
  }
}

}  // namespace vibgmm
