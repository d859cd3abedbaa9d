#include "tlog/sum_tree.hpp"

#include <algorithm>

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

namespace {

void write_aggregate(ByteWriter& w, const Aggregate& a) {
  w.i64(a.sum);
  w.u64(a.count);
  w.i64(a.min);
  w.i64(a.max);
}

Aggregate read_aggregate(ByteReader& r) {
  Aggregate a;
  a.sum = r.i64();
  a.count = r.u64();
  a.min = r.i64();
  a.max = r.i64();
  return a;
}

Digest leaf_digest(const Aggregate& agg, ByteSpan key) {
  ByteWriter w;
  w.u8(kTagSumNode);
  write_aggregate(w, agg);
  w.u8(0x00);
  w.var16(key);
  return sha256(ByteSpan(w.bytes().data(), w.bytes().size()));
}

Digest interior_digest(const Aggregate& agg, const Digest& left, const Digest& right) {
  ByteWriter w;
  w.u8(kTagSumNode);
  write_aggregate(w, agg);
  w.u8(0x01);
  w.digest(left);
  w.digest(right);
  return sha256(ByteSpan(w.bytes().data(), w.bytes().size()));
}

}  // namespace

Aggregate Aggregate::combine(const Aggregate& a, const Aggregate& b) {
  if (a.count == 0) return b;
  if (b.count == 0) return a;
  Aggregate out;
  if (__builtin_add_overflow(a.sum, b.sum, &out.sum)) {
    throw InputError("sum overflow in aggregate");
  }
  if (__builtin_add_overflow(a.count, b.count, &out.count)) {
    throw InputError("count overflow in aggregate");
  }
  out.min = std::min(a.min, b.min);
  out.max = std::max(a.max, b.max);
  return out;
}

std::optional<std::int64_t> Aggregate::min_value() const {
  if (count == 0) return std::nullopt;
  return min;
}

std::optional<std::int64_t> Aggregate::max_value() const {
  if (count == 0) return std::nullopt;
  return max;
}

std::optional<AggregateKind> aggregate_kind_from_name(std::string_view name) {
  if (name == "sum") return AggregateKind::sum;
  if (name == "count") return AggregateKind::count;
  if (name == "avg") return AggregateKind::avg;
  if (name == "min") return AggregateKind::min;
  if (name == "max") return AggregateKind::max;
  return std::nullopt;
}

std::string_view aggregate_kind_name(AggregateKind kind) {
  switch (kind) {
    case AggregateKind::sum: return "sum";
    case AggregateKind::count: return "count";
    case AggregateKind::avg: return "avg";
    case AggregateKind::min: return "min";
    case AggregateKind::max: return "max";
  }
  return "?";
}

Digest SumTree::empty_tree_digest() {
  ByteWriter w;
  w.u8(kTagSumNode);
  w.u8(0x02);
  return sha256(ByteSpan(w.bytes().data(), w.bytes().size()));
}

SumTree SumTree::build(std::vector<SumEntry> entries) {
  SumTree tree;
  std::sort(entries.begin(), entries.end(),
            [](const SumEntry& a, const SumEntry& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i - 1].key == entries[i].key) {
      throw InputError("duplicate key in sum tree build");
    }
  }
  tree.entries_ = std::move(entries);
  if (!tree.entries_.empty()) {
    tree.nodes_.reserve(tree.entries_.size() * 2);
    tree.root_ = tree.build_range(0, tree.entries_.size());
  }
  return tree;
}

std::size_t SumTree::build_range(std::uint64_t lo, std::uint64_t hi) {
  if (hi - lo == 1) {
    const SumEntry& e = entries_[lo];
    Node n;
    n.agg = Aggregate::of_value(e.value);
    n.digest = leaf_digest(n.agg, ByteSpan(e.key.data(), e.key.size()));
    nodes_.push_back(n);
    return nodes_.size() - 1;
  }
  const std::uint64_t mid = lo + (hi - lo + 1) / 2;  // left half takes the ceil
  const std::size_t left = build_range(lo, mid);
  const std::size_t right = build_range(mid, hi);
  Node n;
  n.agg = Aggregate::combine(nodes_[left].agg, nodes_[right].agg);
  n.digest = interior_digest(n.agg, nodes_[left].digest, nodes_[right].digest);
  n.left = left;
  n.right = right;
  nodes_.push_back(n);
  return nodes_.size() - 1;
}

Digest SumTree::root_digest() const {
  if (root_ == SIZE_MAX) return empty_tree_digest();
  return nodes_[root_].digest;
}

Aggregate SumTree::root_aggregate() const {
  if (root_ == SIZE_MAX) return Aggregate{};
  return nodes_[root_].agg;
}

void SumTree::emit_proof(std::size_t node, std::uint64_t lo, std::uint64_t hi,
                         std::uint64_t cov_lo, std::uint64_t cov_hi,
                         const std::vector<std::uint64_t>& reveal,
                         std::vector<AggregateProof::ProofNode>& out) const {
  const Node& n = nodes_[node];
  const bool touches_reveal =
      std::any_of(reveal.begin(), reveal.end(),
                  [&](std::uint64_t p) { return p >= lo && p < hi; });
  const bool inside = lo >= cov_lo && hi <= cov_hi;
  const bool outside = hi <= cov_lo || lo >= cov_hi;
  if (hi - lo == 1) {
    AggregateProof::ProofNode pn;
    if (touches_reveal) {
      pn.tag = AggregateProof::NodeTag::leaf;
      pn.key = entries_[lo].key;
      pn.value = entries_[lo].value;
    } else {
      pn.tag = AggregateProof::NodeTag::pruned;
      pn.digest = n.digest;
      pn.agg = n.agg;
    }
    out.push_back(std::move(pn));
    return;
  }
  if (!touches_reveal && (inside || outside)) {
    AggregateProof::ProofNode pn;
    pn.tag = AggregateProof::NodeTag::pruned;
    pn.digest = n.digest;
    pn.agg = n.agg;
    out.push_back(std::move(pn));
    return;
  }
  AggregateProof::ProofNode pn;
  pn.tag = AggregateProof::NodeTag::interior;
  out.push_back(std::move(pn));
  const std::uint64_t mid = lo + (hi - lo + 1) / 2;
  emit_proof(n.left, lo, mid, cov_lo, cov_hi, reveal, out);
  emit_proof(n.right, mid, hi, cov_lo, cov_hi, reveal, out);
}

AggregateProof SumTree::prove_interval(std::uint64_t i_lo, std::uint64_t i_hi,
                                       AggregateProof::Flavor flavor) const {
  AggregateProof proof;
  proof.flavor = flavor;
  proof.covered_lo = i_lo;
  proof.covered_hi = i_hi;
  const std::uint64_t n = entries_.size();
  if (n == 0) {
    proof.nodes.push_back({AggregateProof::NodeTag::empty, {}, {}, {}, 0});
    return proof;
  }
  std::vector<std::uint64_t> reveal;
  if (flavor == AggregateProof::Flavor::rank) {
    reveal.push_back(i_lo);
  } else {
    if (i_lo > 0) reveal.push_back(i_lo - 1);
    if (i_hi < n) reveal.push_back(i_hi);
    if (i_lo < i_hi) {
      reveal.push_back(i_lo);
      reveal.push_back(i_hi - 1);
    }
  }
  emit_proof(root_, 0, n, i_lo, i_hi, reveal, proof.nodes);
  return proof;
}

std::pair<Aggregate, AggregateProof> SumTree::query_range(const KeyRange& range) const {
  if (range.hi < range.lo) throw InputError("malformed key range");
  const auto lower = std::lower_bound(
      entries_.begin(), entries_.end(), range.lo,
      [](const SumEntry& e, const Bytes& k) { return e.key < k; });
  const auto upper = std::upper_bound(
      entries_.begin(), entries_.end(), range.hi,
      [](const Bytes& k, const SumEntry& e) { return k < e.key; });
  const std::uint64_t i_lo = static_cast<std::uint64_t>(lower - entries_.begin());
  const std::uint64_t i_hi = static_cast<std::uint64_t>(upper - entries_.begin());
  Aggregate answer{};
  for (std::uint64_t i = i_lo; i < i_hi; ++i) {
    answer = Aggregate::combine(answer, Aggregate::of_value(entries_[i].value));
  }
  AggregateProof proof = prove_interval(i_lo, i_hi, AggregateProof::Flavor::range);
  proof.range = range;
  return {answer, proof};
}

std::uint64_t quantile_rank(const Rational& q, std::uint64_t n) {
  if (q.is_negative() || Rational(1, 1) < q) {
    throw InputError("quantile must lie in [0, 1]");
  }
  const std::uint64_t r = ceil_mul(q, n);
  return std::max<std::uint64_t>(1, std::min(r, n));
}

SumTree::QuantileResult SumTree::quantile(const Rational& q) const {
  if (entries_.empty()) throw InputError("quantile of empty tree");
  const std::uint64_t rank = quantile_rank(q, entries_.size());
  QuantileResult result;
  result.key = entries_[rank - 1].key;
  result.value = entries_[rank - 1].value;
  result.rank = rank;
  result.proof = prove_interval(rank - 1, rank, AggregateProof::Flavor::rank);
  return result;
}

namespace {

struct ReconNode {
  Digest digest;
  Aggregate agg;
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

struct Revealed {
  std::uint64_t position;
  const AggregateProof::ProofNode* node;
};

// Rebuilds digests and index spans from the pre-order proof, accumulating the
// aggregate of everything inside [cov_lo, cov_hi). Returns nullopt on any
// structural violation (straddling pruned node, zero-count pruned node, ...).
std::optional<ReconNode> reconstruct(const AggregateProof& proof, std::size_t& cursor,
                                     std::uint64_t base, std::uint64_t cov_lo,
                                     std::uint64_t cov_hi, Aggregate& covered,
                                     std::vector<Revealed>& revealed, unsigned depth) {
  if (depth > 80) return std::nullopt;  // honest trees are < 2^64 leaves deep
  if (cursor >= proof.nodes.size()) return std::nullopt;
  const AggregateProof::ProofNode& pn = proof.nodes[cursor++];
  switch (pn.tag) {
    case AggregateProof::NodeTag::pruned: {
      if (pn.agg.count == 0) return std::nullopt;
      ReconNode rn{pn.digest, pn.agg, base, base + pn.agg.count};
      const bool inside = rn.lo >= cov_lo && rn.hi <= cov_hi;
      const bool outside = rn.hi <= cov_lo || rn.lo >= cov_hi;
      if (inside) {
        covered = Aggregate::combine(covered, rn.agg);
      } else if (!outside) {
        return std::nullopt;  // covered subtrees must exactly tile the interval
      }
      return rn;
    }
    case AggregateProof::NodeTag::leaf: {
      ReconNode rn;
      rn.agg = Aggregate::of_value(pn.value);
      rn.digest = leaf_digest(rn.agg, ByteSpan(pn.key.data(), pn.key.size()));
      rn.lo = base;
      rn.hi = base + 1;
      if (base >= cov_lo && base < cov_hi) {
        covered = Aggregate::combine(covered, rn.agg);
      }
      revealed.push_back({base, &pn});
      return rn;
    }
    case AggregateProof::NodeTag::interior: {
      auto left = reconstruct(proof, cursor, base, cov_lo, cov_hi, covered, revealed,
                              depth + 1);
      if (!left) return std::nullopt;
      auto right = reconstruct(proof, cursor, left->hi, cov_lo, cov_hi, covered,
                               revealed, depth + 1);
      if (!right) return std::nullopt;
      ReconNode rn;
      rn.agg = Aggregate::combine(left->agg, right->agg);
      rn.digest = interior_digest(rn.agg, left->digest, right->digest);
      rn.lo = left->lo;
      rn.hi = right->hi;
      return rn;
    }
    case AggregateProof::NodeTag::empty: {
      if (base != 0) return std::nullopt;
      ReconNode rn;
      rn.digest = SumTree::empty_tree_digest();
      rn.lo = rn.hi = 0;
      return rn;
    }
  }
  return std::nullopt;
}

struct Verified {
  Aggregate covered;
  Aggregate total;
  std::vector<Revealed> revealed;
};

std::optional<Verified> verify_structure(const Digest& root,
                                         const AggregateProof& proof) {
  if (proof.covered_lo > proof.covered_hi) return std::nullopt;
  Verified v;
  std::size_t cursor = 0;
  std::optional<ReconNode> rn;
  try {
    rn = reconstruct(proof, cursor, 0, proof.covered_lo, proof.covered_hi,
                     v.covered, v.revealed, 0);
  } catch (const InputError&) {
    return std::nullopt;  // aggregate overflow in adversarial proof
  }
  if (!rn || cursor != proof.nodes.size()) return std::nullopt;
  if (rn->digest != root) return std::nullopt;
  if (proof.covered_hi > rn->agg.count && !(rn->hi == 0 && proof.covered_hi == 0)) {
    return std::nullopt;
  }
  v.total = rn->agg;
  return v;
}

const AggregateProof::ProofNode* find_revealed(const std::vector<Revealed>& revealed,
                                               std::uint64_t position) {
  for (const Revealed& r : revealed) {
    if (r.position == position) return r.node;
  }
  return nullptr;
}

}  // namespace

bool SumTree::verify_aggregate(const Digest& root, const KeyRange& range,
                               AggregateKind kind, const Aggregate& answer,
                               const AggregateProof& proof) {
  (void)kind;  // the full aggregate is compared; kind selects presentation only
  if (proof.flavor != AggregateProof::Flavor::range) return false;
  if (proof.range.lo != range.lo || proof.range.hi != range.hi) return false;
  if (range.hi < range.lo) return false;
  const auto v = verify_structure(root, proof);
  if (!v) return false;
  const std::uint64_t n = v->total.count;
  const std::uint64_t i_lo = proof.covered_lo;
  const std::uint64_t i_hi = proof.covered_hi;
  // Boundary leaves pin the covered interval against the committed key order.
  if (i_lo > 0) {
    const auto* left = find_revealed(v->revealed, i_lo - 1);
    if (!left || !(left->key < range.lo)) return false;
  }
  if (i_hi < n) {
    const auto* right = find_revealed(v->revealed, i_hi);
    if (!right || !(range.hi < right->key)) return false;
  }
  if (i_lo < i_hi) {
    const auto* first = find_revealed(v->revealed, i_lo);
    const auto* last = find_revealed(v->revealed, i_hi - 1);
    if (!first || first->key < range.lo) return false;
    if (!last || range.hi < last->key) return false;
  }
  return answer == v->covered;
}

bool SumTree::verify_quantile(const Digest& root, const Rational& q, ByteSpan key,
                              std::int64_t value, const AggregateProof& proof) {
  if (proof.flavor != AggregateProof::Flavor::rank) return false;
  if (q.is_negative() || Rational(1, 1) < q) return false;
  const auto v = verify_structure(root, proof);
  if (!v) return false;
  if (v->total.count == 0) return false;
  const std::uint64_t rank = quantile_rank(q, v->total.count);
  if (proof.covered_lo != rank - 1 || proof.covered_hi != rank) return false;
  const auto* leaf = find_revealed(v->revealed, rank - 1);
  if (!leaf) return false;
  return ByteSpan(leaf->key.data(), leaf->key.size()).size() == key.size() &&
         std::equal(key.begin(), key.end(), leaf->key.begin()) &&
         leaf->value == value;
}

Bytes AggregateProof::encode() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(flavor));
  w.var16(ByteSpan(range.lo.data(), range.lo.size()));
  w.var16(ByteSpan(range.hi.data(), range.hi.size()));
  w.u64(covered_lo);
  w.u64(covered_hi);
  w.u32(static_cast<std::uint32_t>(nodes.size()));
  for (const ProofNode& n : nodes) {
    w.u8(static_cast<std::uint8_t>(n.tag));
    switch (n.tag) {
      case NodeTag::pruned:
        w.digest(n.digest);
        write_aggregate(w, n.agg);
        break;
      case NodeTag::leaf:
        w.var16(ByteSpan(n.key.data(), n.key.size()));
        w.i64(n.value);
        break;
      case NodeTag::interior:
      case NodeTag::empty:
        break;
    }
  }
  return w.take();
}

AggregateProof AggregateProof::decode(ByteSpan data) {
  ByteReader r(data);
  AggregateProof p;
  const std::uint8_t flavor = r.u8();
  if (flavor > 1) throw FormatError("unknown aggregate proof flavor");
  p.flavor = static_cast<Flavor>(flavor);
  p.range.lo = r.var16();
  p.range.hi = r.var16();
  p.covered_lo = r.u64();
  p.covered_hi = r.u64();
  const std::uint32_t count = r.u32();
  if (count > (1u << 20)) throw FormatError("aggregate proof too large");
  p.nodes.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ProofNode n;
    const std::uint8_t tag = r.u8();
    if (tag > 3) throw FormatError("unknown aggregate proof node tag");
    n.tag = static_cast<NodeTag>(tag);
    switch (n.tag) {
      case NodeTag::pruned:
        n.digest = r.digest();
        n.agg = read_aggregate(r);
        break;
      case NodeTag::leaf:
        n.key = r.var16();
        n.value = r.i64();
        break;
      case NodeTag::interior:
      case NodeTag::empty:
        break;
    }
    p.nodes.push_back(std::move(n));
  }
  r.expect_done();
  return p;
}

}  // namespace tlog
