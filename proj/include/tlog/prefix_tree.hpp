#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "tlog/crypto.hpp"

namespace tlog {

// How map keys become 256-bit leaf indices.
//   plain: index = SHA-256(key), publicly recomputable.
//   keyed: index = HMAC-SHA-256(secret, key); hides identifiers from readers
//          that lack the secret. Stand-in for a VRF: not publicly verifiable.
struct IndexConfig {
  enum class Mode : std::uint8_t { plain = 0, keyed = 1 };
  Mode mode = Mode::plain;
  std::array<std::uint8_t, 32> secret{};

  Digest derive(ByteSpan key) const;  // throws ConfigError in keyed mode w/o secret
  bool has_secret = false;
};

// Proof that a leaf index is (or is not) bound in a prefix tree.
// siblings[t] is the hash of the node off the lookup path at depth t+1;
// the terminal node sits at depth siblings.size().
struct LookupProof {
  enum class Kind : std::uint8_t {
    inclusion = 0,
    non_inclusion_empty = 1,  // lookup path ends at an empty subtree
    non_inclusion_leaf = 2,   // lookup path ends at a leaf for another index
  };

  Kind kind = Kind::non_inclusion_empty;
  Digest index;
  Digest commitment;          // inclusion only
  Digest witness_index;       // non_inclusion_leaf only
  Digest witness_commitment;  // non_inclusion_leaf only
  std::vector<Digest> siblings;

  Bytes encode() const;
  static LookupProof decode(ByteSpan data);  // throws FormatError
};

// Merkle prefix tree over a sparse 2^256 leaf space, realized as a compressed
// binary trie: a leaf sits at the shortest depth that disambiguates its index
// from every other. Empty subtrees hash as H(0x02 || depth || prefix) so a
// proof cannot be replayed at a different position; leaves hash as
// H(0x00 || index || commitment); interior nodes as H(0x01 || left || right).
//
// Versions are immutable: put() returns a new tree sharing unchanged subtrees,
// so readers can hold a version across threads while one writer advances.
class PrefixTree {
 public:
  PrefixTree() = default;

  std::size_t size() const { return count_; }
  Digest root() const;

  // Binds index -> commitment, overwriting any previous binding.
  [[nodiscard]] PrefixTree put(const Digest& index, const Digest& commitment) const;

  std::optional<Digest> get(const Digest& index) const;
  LookupProof prove_lookup(const Digest& index) const;

  // expected_commitment present: accept only a matching inclusion proof.
  // expected_commitment absent: accept only a non-inclusion proof.
  static bool verify_lookup(const Digest& root, const Digest& index,
                            const std::optional<Digest>& expected_commitment,
                            const LookupProof& proof);

  // Pre-order dump for snapshots; hashes are recomputed on load.
  Bytes serialize() const;
  static PrefixTree deserialize(ByteSpan data);  // throws FormatError

  static Digest empty_subtree_hash(std::uint16_t depth,
                                   const std::array<std::uint8_t, 32>& prefix);
  static Digest leaf_node_hash(const Digest& index, const Digest& commitment);

  struct Node;
  using NodeRef = std::shared_ptr<const Node>;

 private:
  NodeRef root_;
  std::size_t count_ = 0;
};

// MSB-first bit of a 256-bit index.
inline bool index_bit(const Digest& index, unsigned pos) {
  return (index.bytes[pos / 8] >> (7 - (pos % 8))) & 1;
}

}  // namespace tlog
