#include "tlog/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

#include "tlog/errors.hpp"

namespace tlog {

namespace {

void ensure_sodium() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (sodium_init() < 0) {
      throw ConfigError("libsodium initialisation failed");
    }
  });
}

int hex_nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

std::string to_string(ByteSpan b) {
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

std::string hex_encode(ByteSpan b) {
  static const char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (std::uint8_t byte : b) {
    out.push_back(digits[byte >> 4]);
    out.push_back(digits[byte & 0x0f]);
  }
  return out;
}

Bytes hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    throw FormatError("hex string has odd length");
  }
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_nibble(hex[2 * i]);
    int lo = hex_nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) {
      throw FormatError("invalid hex digit");
    }
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Digest Digest::from_hex(std::string_view hex) {
  Bytes raw = hex_decode(hex);
  if (raw.size() != 32) {
    throw FormatError("digest hex must decode to 32 bytes");
  }
  Digest d;
  std::memcpy(d.bytes.data(), raw.data(), 32);
  return d;
}

Digest sha256(ByteSpan data) {
  ensure_sodium();
  Digest out;
  crypto_hash_sha256(out.bytes.data(), data.data(), data.size());
  return out;
}

Digest sha256_concat(std::initializer_list<ByteSpan> parts) {
  ensure_sodium();
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  for (ByteSpan p : parts) {
    crypto_hash_sha256_update(&st, p.data(), p.size());
  }
  Digest out;
  crypto_hash_sha256_final(&st, out.bytes.data());
  return out;
}

Digest hmac_sha256(ByteSpan key32, ByteSpan msg) {
  ensure_sodium();
  if (key32.size() != crypto_auth_hmacsha256_KEYBYTES) {
    throw InputError("hmac key must be 32 bytes");
  }
  Digest out;
  crypto_auth_hmacsha256(out.bytes.data(), msg.data(), msg.size(), key32.data());
  return out;
}

Digest leaf_hash(ByteSpan data) {
  const std::uint8_t tag = kTagLeaf;
  return sha256_concat({ByteSpan(&tag, 1), data});
}

Digest node_hash(const Digest& left, const Digest& right) {
  const std::uint8_t tag = kTagInterior;
  return sha256_concat({ByteSpan(&tag, 1), left.span(), right.span()});
}

Digest empty_root() {
  return sha256(ByteSpan());
}

Digest value_commitment(ByteSpan salt32, ByteSpan value) {
  if (salt32.size() != 32) {
    throw InputError("commitment salt must be 32 bytes");
  }
  const std::uint8_t tag = kTagCommitment;
  return sha256_concat({ByteSpan(&tag, 1), salt32, value});
}

KeyPair keygen(ByteSpan seed32) {
  ensure_sodium();
  if (seed32.size() != crypto_sign_SEEDBYTES) {
    throw InputError("signing seed must be 32 bytes");
  }
  KeyPair kp;
  crypto_sign_seed_keypair(kp.pub.bytes.data(), kp.priv.bytes.data(), seed32.data());
  return kp;
}

Signature sign(const SecretKey& key, ByteSpan msg) {
  ensure_sodium();
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, msg.data(), msg.size(),
                       key.bytes.data());
  return sig;
}

bool verify_sig(const PublicKey& key, ByteSpan msg, const Signature& sig) noexcept {
  try {
    ensure_sodium();
  } catch (...) {
    return false;
  }
  return crypto_sign_verify_detached(sig.bytes.data(), msg.data(), msg.size(),
                                     key.bytes.data()) == 0;
}

BoxKeyPair box_keygen(ByteSpan seed32) {
  ensure_sodium();
  if (seed32.size() != crypto_box_SEEDBYTES) {
    throw InputError("box seed must be 32 bytes");
  }
  BoxKeyPair kp;
  crypto_box_seed_keypair(kp.pub.bytes.data(), kp.priv.bytes.data(), seed32.data());
  return kp;
}

Bytes box_encrypt(const BoxPublicKey& to, ByteSpan nonce24, ByteSpan eph_seed32,
                  ByteSpan plaintext) {
  ensure_sodium();
  if (nonce24.size() != crypto_box_NONCEBYTES) {
    throw InputError("box nonce must be 24 bytes");
  }
  BoxKeyPair eph = box_keygen(eph_seed32);
  Bytes out(32 + crypto_box_MACBYTES + plaintext.size());
  std::memcpy(out.data(), eph.pub.bytes.data(), 32);
  if (crypto_box_easy(out.data() + 32, plaintext.data(), plaintext.size(),
                      nonce24.data(), to.bytes.data(), eph.priv.bytes.data()) != 0) {
    throw ConfigError("box encryption failed");
  }
  return out;
}

std::optional<Bytes> box_decrypt(const BoxSecretKey& key, ByteSpan nonce24,
                                 ByteSpan sealed) noexcept {
  try {
    ensure_sodium();
  } catch (...) {
    return std::nullopt;
  }
  if (nonce24.size() != crypto_box_NONCEBYTES ||
      sealed.size() < 32 + crypto_box_MACBYTES) {
    return std::nullopt;
  }
  Bytes out(sealed.size() - 32 - crypto_box_MACBYTES);
  if (crypto_box_open_easy(out.data(), sealed.data() + 32, sealed.size() - 32,
                           nonce24.data(), sealed.data(), key.bytes.data()) != 0) {
    return std::nullopt;
  }
  return out;
}

}  // namespace tlog
