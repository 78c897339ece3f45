// Copyright 2026 The uwm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Versioned binary checkpoints.
//
//   magic     8 bytes  "UWMCKPT\0"
//   version   u32
//   iteration u64
//   fingerprint  u32 length + bytes
//   count     u32
//   per parameter: u32 name length + bytes, u32 rows, u32 cols,
//                  rows*cols f64 in column-major order
//
// All integers and reals are little-endian.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uwm/errors.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

inline constexpr std::array<char, 8> kCheckpointMagic = {'U', 'W', 'M', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint64_t iteration = 0;
  std::string fingerprint;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_str(std::string& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  template <class U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string str(const char* what) {
    const auto n = le<std::uint32_t>(what);
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  double real(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      throw CheckpointCorruptionError("checkpoint '" + path_ + "': truncated while reading " + what +
                                      " at byte " + std::to_string(pos_));
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint '" + path + "': cannot open");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline CheckpointHeader read_header(Reader& r, const std::string& data, const std::string& path) {
  if (data.size() < kCheckpointMagic.size() ||
      std::memcmp(data.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
    throw CheckpointCorruptionError("checkpoint '" + path + "': bad magic");
  for (std::size_t i = 0; i < kCheckpointMagic.size(); ++i) r.le<std::uint8_t>("magic");
  CheckpointHeader h;
  h.version = r.le<std::uint32_t>("version");
  if (h.version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint '" + path + "': format version " +
                                 std::to_string(h.version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  h.iteration = r.le<std::uint64_t>("iteration");
  h.fingerprint = r.str("fingerprint");
  return h;
}

}  // namespace detail

inline std::string encode_checkpoint(const ParameterSet& params, const std::string& fingerprint,
                                     std::uint64_t iteration) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, iteration);
  detail::put_str(out, fingerprint);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    detail::put_str(out, p.name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Index k = 0; k < p.value.size(); ++k)
      detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p.value(k)));
  }
  return out;
}

// Writes to a temporary sibling and renames it into place.
inline void save_checkpoint(const std::string& path, const ParameterSet& params,
                            const std::string& fingerprint, std::uint64_t iteration) {
  const std::string bytes = encode_checkpoint(params, fingerprint, iteration);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("checkpoint '" + path + "': cannot open for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("checkpoint '" + path + "': write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("checkpoint '" + path + "': rename failed");
}

inline CheckpointHeader read_checkpoint_header(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::Reader r(data, path);
  return detail::read_header(r, data, path);
}

// Loads values into `params` after checking the fingerprint and every name
// and shape. Nothing is modified unless the whole file validates.
inline CheckpointHeader load_checkpoint(const std::string& path, ParameterSet& params,
                                        const std::string& fingerprint) {
  const std::string data = detail::read_file(path);
  detail::Reader r(data, path);
  CheckpointHeader h = detail::read_header(r, data, path);
  if (h.fingerprint != fingerprint)
    throw CheckpointCompatibilityError("checkpoint '" + path + "': fingerprint mismatch; expected [" +
                                       fingerprint + "], found [" + h.fingerprint + "]");
  const auto count = r.le<std::uint32_t>("parameter count");
  if (count != params.size())
    throw CheckpointCompatibilityError("checkpoint '" + path + "': expected " +
                                       std::to_string(params.size()) + " parameters, found " +
                                       std::to_string(count));
  std::vector<Matrix> values;
  for (std::uint32_t i = 0; i < count; ++i) {
    const Parameter& p = params[i];
    const std::string name = r.str("parameter name");
    const auto rows = r.le<std::uint32_t>("rows");
    const auto cols = r.le<std::uint32_t>("cols");
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw CheckpointCompatibilityError("checkpoint '" + path + "': expected " + p.name + " " +
                                         shape_str(p.value) + ", found " + name + " " +
                                         shape_str(rows, cols));
    Matrix m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) m(k) = r.real("parameter values");
    values.push_back(std::move(m));
  }
  if (r.remaining() != 0)
    throw CheckpointCorruptionError("checkpoint '" + path + "': " + std::to_string(r.remaining()) +
                                    " trailing bytes");
  for (std::uint32_t i = 0; i < count; ++i) params[i].value = std::move(values[i]);
  return h;
}

}  // namespace uwm
