// laud/io.h

// Copyright 2026  The laud authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Little-endian byte buffers and atomic file output shared by the binary
// formats (WAV, checkpoints, HREP).

#ifndef LAUD_IO_H_
#define LAUD_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "laud/common.h"

namespace laud {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void Bytes(const void *p, std::size_t n) {
    const auto *b = static_cast<const std::uint8_t *>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void Tag(std::string_view four) { Bytes(four.data(), four.size()); }
  template <typename T>
  void Pod(T v) { Bytes(&v, sizeof(T)); }
  void U16(std::uint16_t v) { Pod(v); }
  void U32(std::uint32_t v) { Pod(v); }
  void F32(float v) { Pod(v); }
  /// u32 length followed by UTF-8 bytes.
  void String(std::string_view s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> &buffer() { return buf_; }
  const std::vector<std::uint8_t> &buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; any overrun raises a format error naming `what`.
class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t> &buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}

  void Bytes(void *p, std::size_t n) {
    Need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T Pod() {
    T v;
    Bytes(&v, sizeof(T));
    return v;
  }
  std::uint16_t U16() { return Pod<std::uint16_t>(); }
  std::uint32_t U32() { return Pod<std::uint32_t>(); }
  float F32() { return Pod<float>(); }
  std::string Tag() {
    std::string s(4, '\0');
    Bytes(s.data(), 4);
    return s;
  }
  std::string String() {
    std::uint32_t n = U32();
    Need(n);
    std::string s(reinterpret_cast<const char *>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void Skip(std::size_t n) {
    Need(n);
    pos_ += n;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > buf_.size() - pos_)
      Fail(ErrorKind::kFormat, what_ + ": truncated data");
  }
  const std::vector<std::uint8_t> &buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> ReadFileBytes(const std::string &path);

/// Writes to `path + ".partial"` and renames on success, so an interrupted
/// write never leaves a file under the final name.
void WriteFileAtomic(const std::string &path, const void *data, std::size_t n);

inline void WriteFileAtomic(const std::string &path,
                            const std::vector<std::uint8_t> &bytes) {
  WriteFileAtomic(path, bytes.data(), bytes.size());
}

inline void WriteFileAtomic(const std::string &path, const std::string &text) {
  WriteFileAtomic(path, text.data(), text.size());
}

/// Hex SHA-256 of a file's content.
std::string Sha256File(const std::string &path);

}  // namespace laud

#endif  // LAUD_IO_H_
