#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tlog/crypto.hpp"
#include "tlog/rational.hpp"

namespace tlog {

struct SumEntry {
  Bytes key;
  std::int64_t value = 0;
};

// Node annotations carried alongside every digest in the sum tree. Addition
// is checked: overflow is an input error, never wraparound.
struct Aggregate {
  std::int64_t sum = 0;
  std::uint64_t count = 0;
  std::int64_t min = 0;  // meaningful only when count > 0
  std::int64_t max = 0;

  static Aggregate of_value(std::int64_t v) { return {v, 1, v, v}; }
  static Aggregate combine(const Aggregate& a, const Aggregate& b);  // throws InputError

  std::optional<std::int64_t> min_value() const;
  std::optional<std::int64_t> max_value() const;
  bool operator==(const Aggregate&) const = default;
};

enum class AggregateKind : std::uint8_t { sum = 0, count = 1, avg = 2, min = 3, max = 4 };

std::optional<AggregateKind> aggregate_kind_from_name(std::string_view name);
std::string_view aggregate_kind_name(AggregateKind kind);

// Inclusive key range, lexicographic over raw bytes.
struct KeyRange {
  Bytes lo;
  Bytes hi;
};

// Proof that an aggregate (or a ranked entry) is correct under a sum-tree
// root. The pre-order node list reproduces the tree with everything outside
// the contested region pruned to (digest, aggregate) pairs; boundary leaves
// are disclosed so the covered index interval [covered_lo, covered_hi) is
// pinned against the committed key order.
struct AggregateProof {
  enum class Flavor : std::uint8_t { range = 0, rank = 1 };
  enum class NodeTag : std::uint8_t { pruned = 0, interior = 1, leaf = 2, empty = 3 };

  struct ProofNode {
    NodeTag tag = NodeTag::empty;
    Digest digest;    // pruned
    Aggregate agg;    // pruned
    Bytes key;        // leaf
    std::int64_t value = 0;  // leaf
  };

  Flavor flavor = Flavor::range;
  KeyRange range;                 // range flavor only
  std::uint64_t covered_lo = 0;   // index interval tiled by covered subtrees
  std::uint64_t covered_hi = 0;
  std::vector<ProofNode> nodes;   // pre-order

  Bytes encode() const;
  static AggregateProof decode(ByteSpan data);  // throws FormatError
};

// Merkle sum tree over distinct keys sorted lexicographically. Every node
// binds (sum, count, min, max):
//   leaf     = H(0x04 || agg || 0x00 || key)
//   interior = H(0x04 || agg || 0x01 || left || right)
//   empty    = H(0x04 || 0x02)
// Immutable after build; rebuild per epoch at desk scale.
class SumTree {
 public:
  static SumTree build(std::vector<SumEntry> entries);  // throws InputError

  std::uint64_t size() const { return entries_.size(); }
  Digest root_digest() const;
  Aggregate root_aggregate() const;
  const std::vector<SumEntry>& entries() const { return entries_; }

  // Aggregate over keys in [range.lo, range.hi], with proof.
  std::pair<Aggregate, AggregateProof> query_range(const KeyRange& range) const;

  struct QuantileResult {
    Bytes key;
    std::int64_t value = 0;
    std::uint64_t rank = 0;  // 1-indexed
    AggregateProof proof;
  };
  // Entry of rank max(1, ceil(q * N)), the lower-quantile convention.
  QuantileResult quantile(const Rational& q) const;  // throws InputError

  static bool verify_aggregate(const Digest& root, const KeyRange& range,
                               AggregateKind kind, const Aggregate& answer,
                               const AggregateProof& proof);
  static bool verify_quantile(const Digest& root, const Rational& q, ByteSpan key,
                              std::int64_t value, const AggregateProof& proof);

  static Digest empty_tree_digest();

 private:
  struct Node {
    Aggregate agg;
    Digest digest;
    std::size_t left = SIZE_MAX;
    std::size_t right = SIZE_MAX;
  };

  std::size_t build_range(std::uint64_t lo, std::uint64_t hi);
  void emit_proof(std::size_t node, std::uint64_t lo, std::uint64_t hi,
                  std::uint64_t cov_lo, std::uint64_t cov_hi,
                  const std::vector<std::uint64_t>& reveal,
                  std::vector<AggregateProof::ProofNode>& out) const;
  AggregateProof prove_interval(std::uint64_t i_lo, std::uint64_t i_hi,
                                AggregateProof::Flavor flavor) const;

  std::vector<SumEntry> entries_;  // sorted by key
  std::vector<Node> nodes_;
  std::size_t root_ = SIZE_MAX;
};

// Rank of the q-quantile in a population of n (1-indexed, floor of 1).
std::uint64_t quantile_rank(const Rational& q, std::uint64_t n);

}  // namespace tlog
