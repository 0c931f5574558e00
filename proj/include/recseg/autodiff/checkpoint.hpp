#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "recseg/autodiff/adam.hpp"

// Binary layout, all integers and floats little-endian:
//   "PNCKPT1"                      7 bytes
//   u64 step
//   u32 entry_count
//   entry_count x { u32 name_len, name bytes, u32 ndim, u32 dims[ndim], f32 data[prod(dims)] }
// Entries are "param/<name>" for every parameter, then "adam_m/<name>" and
// "adam_v/<name>" in the same order when optimizer state is present.

namespace recseg::ad {

inline constexpr char kCheckpointMagic[] = "PNCKPT1";

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t x) { put_le(x); }
  void u64(std::uint64_t x) { put_le(x); }
  void f32(float x) { put_le(std::bit_cast<std::uint32_t>(x)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  template <class U>
  void put_le(U x) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
  }
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> b) : bytes_(std::move(b)) {}
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  template <class U>
  U get_le() {
    need(sizeof(U));
    U x = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      x |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return x;
  }
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

template <class T>
void write_entry(ByteWriter& w, const std::string& name, const Matrix<T>& m) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(static_cast<float>(m.data()[i]));
}

}  // namespace detail

template <class T>
std::vector<char> encode_checkpoint(const ParamStore<T>& params, const AdamState<T>* adam) {
  detail::ByteWriter w;
  w.raw(std::string(kCheckpointMagic, 7));
  w.u64(adam ? adam->step : 0);
  const bool with_moments = adam && adam->m.size() == params.size();
  w.u32(static_cast<std::uint32_t>(params.size() * (with_moments ? 3 : 1)));
  for (const auto& [name, p] : params) detail::write_entry<T>(w, "param/" + name, p.value);
  if (with_moments) {
    std::size_t i = 0;
    for (const auto& [name, p] : params) detail::write_entry<T>(w, "adam_m/" + name, adam->m[i++]);
    i = 0;
    for (const auto& [name, p] : params) detail::write_entry<T>(w, "adam_v/" + name, adam->v[i++]);
  }
  return w.bytes();
}

// Loads into an already-constructed parameter set; names and shapes must match.
template <class T>
void decode_checkpoint(std::vector<char> bytes, ParamStore<T>& params, AdamState<T>* adam) {
  detail::ByteReader r(std::move(bytes));
  if (r.raw(7) != std::string(kCheckpointMagic, 7)) throw ParseError("bad checkpoint magic");
  const std::uint64_t step = r.u64();
  const std::uint32_t count = r.u32();
  std::map<std::string, Matrix<T>> table;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.raw(r.u32());
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) throw ParseError("checkpoint entry '" + name + "' has rank " + std::to_string(ndim));
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    Matrix<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(r.f32());
    if (!table.emplace(name, std::move(m)).second) throw ParseError("duplicate checkpoint entry '" + name + "'");
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint entries");

  auto take = [&](const std::string& key, Eigen::Index rows, Eigen::Index cols) -> Matrix<T> {
    auto it = table.find(key);
    if (it == table.end()) throw ParseError("checkpoint missing entry '" + key + "'");
    if (it->second.rows() != rows || it->second.cols() != cols)
      throw ParseError("checkpoint entry '" + key + "' has wrong shape");
    return it->second;
  };
  for (auto& [name, p] : params) p.value = take("param/" + name, p.value.rows(), p.value.cols());
  if (adam) {
    adam->init(params);
    adam->step = step;
    if (table.size() == params.size() * 3) {
      std::size_t i = 0;
      for (auto& [name, p] : params) {
        adam->m[i] = take("adam_m/" + name, p.value.rows(), p.value.cols());
        adam->v[i] = take("adam_v/" + name, p.value.rows(), p.value.cols());
        ++i;
      }
    }
  }
}

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const AdamState<T>* adam) {
  const auto bytes = encode_checkpoint(params, adam);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

template <class T>
void load_checkpoint(const std::string& path, ParamStore<T>& params, AdamState<T>* adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  decode_checkpoint(std::move(bytes), params, adam);
}

}  // namespace recseg::ad
