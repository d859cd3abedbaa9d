#include "tlog/history_tree.hpp"

#include <bit>
#include <stdexcept>

#include "tlog/encoding.hpp"

namespace tlog {

std::uint64_t largest_pow2_below(std::uint64_t n) {
  if (n < 2) throw std::out_of_range("largest_pow2_below requires n >= 2");
  return std::uint64_t(1) << (std::bit_width(n - 1) - 1);
}

Bytes InclusionProof::encode() const {
  ByteWriter w;
  w.u64(leaf_index);
  w.u64(tree_size);
  if (path.size() > 0xffff) throw InputError("inclusion path too long");
  w.u16(static_cast<std::uint16_t>(path.size()));
  for (const Digest& d : path) w.digest(d);
  return w.take();
}

InclusionProof InclusionProof::decode(ByteSpan data) {
  ByteReader r(data);
  InclusionProof p;
  p.leaf_index = r.u64();
  p.tree_size = r.u64();
  std::uint16_t count = r.u16();
  p.path.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) p.path.push_back(r.digest());
  r.expect_done();
  return p;
}

Bytes ConsistencyProof::encode() const {
  ByteWriter w;
  w.u64(old_size);
  w.u64(new_size);
  if (nodes.size() > 0xffff) throw InputError("consistency proof too long");
  w.u16(static_cast<std::uint16_t>(nodes.size()));
  for (const Digest& d : nodes) w.digest(d);
  return w.take();
}

ConsistencyProof ConsistencyProof::decode(ByteSpan data) {
  ByteReader r(data);
  ConsistencyProof p;
  p.old_size = r.u64();
  p.new_size = r.u64();
  std::uint16_t count = r.u16();
  p.nodes.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) p.nodes.push_back(r.digest());
  r.expect_done();
  return p;
}

std::uint64_t HistoryTree::append(ByteSpan leaf_data) {
  return append_leaf_digest(leaf_hash(leaf_data));
}

std::uint64_t HistoryTree::append_leaf_digest(const Digest& leaf) {
  if (levels_.empty()) levels_.emplace_back();
  levels_[0].push_back(leaf);
  const std::uint64_t index = levels_[0].size() - 1;
  // Bubble up: whenever a level reaches an even count, its last pair forms a
  // new complete node one level up.
  for (std::size_t lvl = 0; levels_[lvl].size() % 2 == 0; ++lvl) {
    if (levels_.size() == lvl + 1) levels_.emplace_back();
    const auto& cur = levels_[lvl];
    levels_[lvl + 1].push_back(node_hash(cur[cur.size() - 2], cur[cur.size() - 1]));
  }
  return index;
}

const Digest& HistoryTree::leaf(std::uint64_t index) const {
  if (index >= size()) throw std::out_of_range("leaf index out of range");
  return levels_[0][index];
}

const std::vector<Digest>& HistoryTree::leaves() const {
  static const std::vector<Digest> kEmpty;
  return levels_.empty() ? kEmpty : levels_[0];
}

Digest HistoryTree::root_at(std::uint64_t size) const {
  if (size > this->size()) throw std::out_of_range("root size out of range");
  if (size == 0) return empty_root();
  return range_root(0, size);
}

Digest HistoryTree::range_root(std::uint64_t lo, std::uint64_t hi) const {
  const std::uint64_t n = hi - lo;
  if (n == 1) return levels_[0][lo];
  // Complete aligned subtrees are served from the level cache.
  if (std::has_single_bit(n) && lo % n == 0) {
    const unsigned lvl = static_cast<unsigned>(std::bit_width(n) - 1);
    if (lvl < levels_.size() && lo / n < levels_[lvl].size()) {
      return levels_[lvl][lo / n];
    }
  }
  const std::uint64_t k = largest_pow2_below(n);
  return node_hash(range_root(lo, lo + k), range_root(lo + k, hi));
}

InclusionProof HistoryTree::prove_inclusion(std::uint64_t index,
                                            std::uint64_t size) const {
  if (size > this->size() || size == 0) throw std::out_of_range("size out of range");
  if (index >= size) throw std::out_of_range("index out of range");
  InclusionProof proof;
  proof.leaf_index = index;
  proof.tree_size = size;
  inclusion_path(index, 0, size, proof.path);
  return proof;
}

void HistoryTree::inclusion_path(std::uint64_t index, std::uint64_t lo,
                                 std::uint64_t hi, std::vector<Digest>& out) const {
  if (hi - lo == 1) return;
  const std::uint64_t k = largest_pow2_below(hi - lo);
  if (index < lo + k) {
    inclusion_path(index, lo, lo + k, out);
    out.push_back(range_root(lo + k, hi));
  } else {
    inclusion_path(index, lo + k, hi, out);
    out.push_back(range_root(lo, lo + k));
  }
}

ConsistencyProof HistoryTree::prove_consistency(std::uint64_t old_size,
                                                std::uint64_t new_size) const {
  if (old_size > new_size) throw std::out_of_range("old size exceeds new size");
  if (new_size > size()) throw std::out_of_range("size out of range");
  ConsistencyProof proof;
  proof.old_size = old_size;
  proof.new_size = new_size;
  // Empty proof when the old tree is empty or both sizes coincide: the empty
  // log is a prefix of everything and any log is a prefix of itself.
  if (old_size != 0 && old_size != new_size) {
    consistency_nodes(old_size, 0, new_size, true, proof.nodes);
  }
  return proof;
}

void HistoryTree::consistency_nodes(std::uint64_t boundary, std::uint64_t lo,
                                    std::uint64_t hi, bool old_is_complete_subtree,
                                    std::vector<Digest>& out) const {
  if (boundary == hi) {
    if (!old_is_complete_subtree) out.push_back(range_root(lo, hi));
    return;
  }
  const std::uint64_t k = largest_pow2_below(hi - lo);
  if (boundary <= lo + k) {
    consistency_nodes(boundary, lo, lo + k, old_is_complete_subtree, out);
    out.push_back(range_root(lo + k, hi));
  } else {
    consistency_nodes(boundary, lo + k, hi, false, out);
    out.push_back(range_root(lo, lo + k));
  }
}

bool HistoryTree::verify_inclusion(const Digest& root, std::uint64_t tree_size,
                                   std::uint64_t leaf_index, const Digest& leaf_digest,
                                   const InclusionProof& proof) {
  if (proof.leaf_index != leaf_index || proof.tree_size != tree_size) return false;
  if (leaf_index >= tree_size) return false;
  std::uint64_t fn = leaf_index;
  std::uint64_t sn = tree_size - 1;
  Digest r = leaf_digest;
  for (const Digest& c : proof.path) {
    if (sn == 0) return false;
    if ((fn & 1) == 1 || fn == sn) {
      r = node_hash(c, r);
      if ((fn & 1) == 0) {
        while (fn != 0 && (fn & 1) == 0) {
          fn >>= 1;
          sn >>= 1;
        }
      }
    } else {
      r = node_hash(r, c);
    }
    fn >>= 1;
    sn >>= 1;
  }
  return sn == 0 && r == root;
}

bool HistoryTree::verify_consistency(const Digest& old_root, std::uint64_t old_size,
                                     const Digest& new_root, std::uint64_t new_size,
                                     const ConsistencyProof& proof) {
  if (proof.old_size != old_size || proof.new_size != new_size) return false;
  if (old_size > new_size) return false;
  if (old_size == new_size) return proof.nodes.empty() && old_root == new_root;
  if (old_size == 0) {
    // Any log extends the empty log; there is nothing else to reconstruct.
    return proof.nodes.empty() && old_root == empty_root();
  }
  std::size_t pos = 0;
  Digest first;
  // A complete old tree is itself the first component of the reconstruction.
  if (std::has_single_bit(old_size)) {
    first = old_root;
  } else {
    if (proof.nodes.empty()) return false;
    first = proof.nodes[pos++];
  }
  std::uint64_t fn = old_size - 1;
  std::uint64_t sn = new_size - 1;
  while ((fn & 1) == 1) {
    fn >>= 1;
    sn >>= 1;
  }
  Digest fr = first;
  Digest sr = first;
  for (; pos < proof.nodes.size(); ++pos) {
    const Digest& c = proof.nodes[pos];
    if (sn == 0) return false;
    if ((fn & 1) == 1 || fn == sn) {
      fr = node_hash(c, fr);
      sr = node_hash(c, sr);
      if ((fn & 1) == 0) {
        while (fn != 0 && (fn & 1) == 0) {
          fn >>= 1;
          sn >>= 1;
        }
      }
    } else {
      sr = node_hash(sr, c);
    }
    fn >>= 1;
    sn >>= 1;
  }
  return fr == old_root && sr == new_root && sn == 0;
}

}  // namespace tlog
