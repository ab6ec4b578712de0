#pragma once

#include <openssl/evp.h>

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uavchain {

/// 256-bit digest. Ordered bytewise so it can key maps and break ties.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  static constexpr Digest zero() noexcept { return Digest{}; }

  bool is_zero() const noexcept {
    for (auto b : bytes) {
      if (b != 0) return false;
    }
    return true;
  }

  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (auto b : bytes) {
      out.push_back(kDigits[b >> 4]);
      out.push_back(kDigits[b & 0x0f]);
    }
    return out;
  }

  static Digest from_hex(std::string_view text) {
    if (text.size() != 64) throw std::invalid_argument("digest hex must be 64 characters");
    auto nibble = [](char c) -> std::uint8_t {
      if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
      if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
      throw std::invalid_argument("bad hex digit in digest");
    };
    Digest d;
    for (std::size_t i = 0; i < 32; ++i) {
      d.bytes[i] = static_cast<std::uint8_t>((nibble(text[2 * i]) << 4) | nibble(text[2 * i + 1]));
    }
    return d;
  }

  /// First eight bytes as a big-endian integer; handy as a seed.
  std::uint64_t prefix64() const noexcept {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | bytes[i];
    return v;
  }

  friend auto operator<=>(const Digest&, const Digest&) = default;
};

/// Incremental SHA-256 backed by OpenSSL's EVP interface.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 initialisation failed");
    }
  }

  Sha256& update(std::span<const std::uint8_t> data) {
    if (!data.empty()) EVP_DigestUpdate(ctx_.get(), data.data(), data.size());
    return *this;
  }

  Sha256& update(std::string_view text) {
    if (!text.empty()) EVP_DigestUpdate(ctx_.get(), text.data(), text.size());
    return *this;
  }

  Digest finish() {
    Digest d;
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), d.bytes.data(), &len);
    EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr);
    return d;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline Digest sha256(std::span<const std::uint8_t> data) { return Sha256{}.update(data).finish(); }
inline Digest sha256(std::string_view text) { return Sha256{}.update(text).finish(); }

/// Appends fixed-width big-endian integers; the canonical encoding for hashed records.
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  ByteWriter& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& digest(const Digest& d) {
    buf_.insert(buf_.end(), d.bytes.begin(), d.bytes.end());
    return *this;
  }
  const std::vector<std::uint8_t>& bytes() const noexcept { return buf_; }
  Digest hash() const { return sha256(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

}  // namespace uavchain
