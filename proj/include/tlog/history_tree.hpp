#pragma once

#include <cstdint>
#include <vector>

#include "tlog/crypto.hpp"

namespace tlog {

// Sibling path binding one leaf to the root of a tree of a given size.
// Canonical encoding: index u64 || tree_size u64 || count u16 || digests,
// path ordered from the leaf level upward.
struct InclusionProof {
  std::uint64_t leaf_index = 0;
  std::uint64_t tree_size = 0;
  std::vector<Digest> path;

  Bytes encode() const;
  static InclusionProof decode(ByteSpan data);  // throws FormatError
};

// Node set proving the tree of old_size is a prefix of the tree of new_size.
// Canonical encoding: old_size u64 || new_size u64 || count u16 || digests.
struct ConsistencyProof {
  std::uint64_t old_size = 0;
  std::uint64_t new_size = 0;
  std::vector<Digest> nodes;

  Bytes encode() const;
  static ConsistencyProof decode(ByteSpan data);  // throws FormatError
};

// Append-only Merkle history tree growing left to right.
//
// Shape rule: the left subtree of any range spans the largest power of two
// strictly smaller than the range size; the remainder recurses on the right.
// leaf = H(0x00 || data), node = H(0x01 || left || right), size 0 = H("").
//
// Appends are strictly append-only: no operation changes an existing
// (index -> digest) binding, and root_at(n) is a pure function of the first
// n leaves. Single writer; proofs are plain values safe to hand anywhere.
class HistoryTree {
 public:
  std::uint64_t size() const { return levels_.empty() ? 0 : levels_[0].size(); }

  // Hashes and appends leaf data; returns the new leaf's index.
  std::uint64_t append(ByteSpan leaf_data);
  // Appends a precomputed leaf digest (journal/snapshot rebuilds).
  std::uint64_t append_leaf_digest(const Digest& leaf);

  const Digest& leaf(std::uint64_t index) const;  // throws out_of_range
  const std::vector<Digest>& leaves() const;

  Digest root() const { return root_at(size()); }
  Digest root_at(std::uint64_t size) const;  // throws out_of_range

  InclusionProof prove_inclusion(std::uint64_t index, std::uint64_t size) const;
  ConsistencyProof prove_consistency(std::uint64_t old_size,
                                     std::uint64_t new_size) const;

  static bool verify_inclusion(const Digest& root, std::uint64_t tree_size,
                               std::uint64_t leaf_index, const Digest& leaf_digest,
                               const InclusionProof& proof);
  static bool verify_consistency(const Digest& old_root, std::uint64_t old_size,
                                 const Digest& new_root, std::uint64_t new_size,
                                 const ConsistencyProof& proof);

 private:
  Digest range_root(std::uint64_t lo, std::uint64_t hi) const;
  void inclusion_path(std::uint64_t index, std::uint64_t lo, std::uint64_t hi,
                      std::vector<Digest>& out) const;
  void consistency_nodes(std::uint64_t boundary, std::uint64_t lo, std::uint64_t hi,
                         bool old_is_complete_subtree, std::vector<Digest>& out) const;

  // levels_[0] holds leaf digests; levels_[k][i] caches the root of the
  // complete subtree over leaves [i*2^k, (i+1)*2^k).
  std::vector<std::vector<Digest>> levels_;
};

// Largest power of two strictly less than n (n >= 2).
std::uint64_t largest_pow2_below(std::uint64_t n);

}  // namespace tlog
