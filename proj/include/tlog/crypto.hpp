#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tlog {

using Bytes = std::vector<std::uint8_t>;
using ByteSpan = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_string(ByteSpan b);
std::string hex_encode(ByteSpan b);
Bytes hex_decode(std::string_view hex);  // throws FormatError

// 256-bit hash value, the atom of all authentication in the toolkit.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;
  ByteSpan span() const { return ByteSpan(bytes.data(), bytes.size()); }
  std::string hex() const { return hex_encode(span()); }
  static Digest from_hex(std::string_view hex);  // throws FormatError
};

// Domain-separation tags. Every hash in the system is prefixed with one of
// these so the image sets of different structures cannot collide.
inline constexpr std::uint8_t kTagLeaf = 0x00;          // history/prefix leaves
inline constexpr std::uint8_t kTagInterior = 0x01;      // interior nodes
inline constexpr std::uint8_t kTagEmptySubtree = 0x02;  // prefix-tree empties
inline constexpr std::uint8_t kTagCommitment = 0x03;    // salted value commitments
inline constexpr std::uint8_t kTagSumNode = 0x04;       // sum-tree nodes
inline constexpr std::uint8_t kTagJournal = 0x05;       // journal records
inline constexpr std::uint8_t kTagSnapshot = 0x06;      // snapshot integrity

Digest sha256(ByteSpan data);
Digest sha256_concat(std::initializer_list<ByteSpan> parts);
Digest hmac_sha256(ByteSpan key32, ByteSpan msg);

// H(0x00 || data): hash of a leaf payload.
Digest leaf_hash(ByteSpan data);
// H(0x01 || left || right): hash of an interior node.
Digest node_hash(const Digest& left, const Digest& right);
// H(""): canonical root of the size-0 log.
Digest empty_root();
// H(0x03 || salt || value): salted commitment, opened by disclosing (salt, value).
Digest value_commitment(ByteSpan salt32, ByteSpan value);

// Ed25519. Signing is deterministic, so runs are replayable from key seeds.
struct PublicKey {
  std::array<std::uint8_t, 32> bytes{};
  auto operator<=>(const PublicKey&) const = default;
  ByteSpan span() const { return ByteSpan(bytes.data(), bytes.size()); }
};

struct SecretKey {
  std::array<std::uint8_t, 64> bytes{};
  ByteSpan span() const { return ByteSpan(bytes.data(), bytes.size()); }
};

struct Signature {
  std::array<std::uint8_t, 64> bytes{};
  auto operator<=>(const Signature&) const = default;
  ByteSpan span() const { return ByteSpan(bytes.data(), bytes.size()); }
};

struct KeyPair {
  PublicKey pub;
  SecretKey priv;
};

KeyPair keygen(ByteSpan seed32);
Signature sign(const SecretKey& key, ByteSpan msg);
// Never throws: malformed inputs simply fail verification.
bool verify_sig(const PublicKey& key, ByteSpan msg, const Signature& sig) noexcept;

// X25519 box keys for envelope encryption to designated parties.
struct BoxPublicKey {
  std::array<std::uint8_t, 32> bytes{};
  auto operator<=>(const BoxPublicKey&) const = default;
  ByteSpan span() const { return ByteSpan(bytes.data(), bytes.size()); }
};

struct BoxSecretKey {
  std::array<std::uint8_t, 32> bytes{};
};

struct BoxKeyPair {
  BoxPublicKey pub;
  BoxSecretKey priv;
};

BoxKeyPair box_keygen(ByteSpan seed32);

inline constexpr std::size_t kBoxNonceBytes = 24;
inline constexpr std::size_t kBoxOverheadBytes = 32 + 16;  // ephemeral pk + MAC

// Authenticated public-key encryption with an ephemeral sender key.
// Output layout: ephemeral_pk(32) || mac+ciphertext. The ephemeral key pair is
// derived from eph_seed32 so tests can replay envelope construction.
Bytes box_encrypt(const BoxPublicKey& to, ByteSpan nonce24, ByteSpan eph_seed32,
                  ByteSpan plaintext);
// Empty optional when the MAC rejects (wrong key or tampered bytes).
std::optional<Bytes> box_decrypt(const BoxSecretKey& key, ByteSpan nonce24,
                                 ByteSpan sealed) noexcept;

}  // namespace tlog
