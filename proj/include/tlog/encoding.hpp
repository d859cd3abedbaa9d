#pragma once

#include <cstdint>
#include <string>

#include "tlog/crypto.hpp"
#include "tlog/errors.hpp"

namespace tlog {

// Canonical encoding helpers. Every on-disk and on-wire format in the toolkit
// is built from these: big-endian fixed-width integers, raw 32-byte digests,
// length-prefixed byte strings. Encodings must be bit-exact so independent
// verifiers interoperate.

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
  }
  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }
  }
  // Two's-complement big-endian.
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void digest(const Digest& d) { raw(d.span()); }
  void raw(ByteSpan b) { out_.insert(out_.end(), b.begin(), b.end()); }
  // u16 length prefix; throws on oversize.
  void var16(ByteSpan b) {
    if (b.size() > 0xffff) throw InputError("byte string exceeds u16 length");
    u16(static_cast<std::uint16_t>(b.size()));
    raw(b);
  }
  // u32 length prefix.
  void var32(ByteSpan b) {
    if (b.size() > 0xffffffffull) throw InputError("byte string exceeds u32 length");
    u32(static_cast<std::uint32_t>(b.size()));
    raw(b);
  }

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(ByteSpan data) : data_(data) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    ByteSpan b = take(2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    ByteSpan b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    ByteSpan b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | b[i];
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  Digest digest() {
    ByteSpan b = take(32);
    Digest d;
    std::copy(b.begin(), b.end(), d.bytes.begin());
    return d;
  }
  Bytes var16() {
    std::uint16_t n = u16();
    ByteSpan b = take(n);
    return Bytes(b.begin(), b.end());
  }
  Bytes var32() {
    std::uint32_t n = u32();
    ByteSpan b = take(n);
    return Bytes(b.begin(), b.end());
  }
  Bytes rest() {
    ByteSpan b = data_.subspan(pos_);
    pos_ = data_.size();
    return Bytes(b.begin(), b.end());
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }
  void expect_done() const {
    if (!done()) throw FormatError("trailing bytes after canonical encoding");
  }

 private:
  ByteSpan take(std::size_t n) {
    if (remaining() < n) throw FormatError("canonical encoding truncated");
    ByteSpan b = data_.subspan(pos_, n);
    pos_ += n;
    return b;
  }

  ByteSpan data_;
  std::size_t pos_ = 0;
};

}  // namespace tlog
