#include "tlog/prefix_tree.hpp"

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

namespace {

using Prefix = std::array<std::uint8_t, 32>;

void set_bit(Prefix& p, unsigned pos, bool v) {
  const std::uint8_t mask = static_cast<std::uint8_t>(1u << (7 - (pos % 8)));
  if (v) {
    p[pos / 8] |= mask;
  } else {
    p[pos / 8] &= static_cast<std::uint8_t>(~mask);
  }
}

Prefix prefix_of(const Digest& index, unsigned depth) {
  Prefix p{};
  for (unsigned i = 0; i < depth; ++i) set_bit(p, i, index_bit(index, i));
  return p;
}

}  // namespace

Digest IndexConfig::derive(ByteSpan key) const {
  if (mode == Mode::plain) return sha256(key);
  if (!has_secret) throw ConfigError("keyed index mode requires a 32-byte secret");
  return hmac_sha256(ByteSpan(secret.data(), secret.size()), key);
}

struct PrefixTree::Node {
  enum class Kind : std::uint8_t { leaf, interior };

  Kind kind;
  Digest hash;
  // leaf
  Digest index;
  Digest commitment;
  // interior; null child means empty subtree at that position
  NodeRef left;
  NodeRef right;
};

Digest PrefixTree::empty_subtree_hash(std::uint16_t depth, const Prefix& prefix) {
  ByteWriter w;
  w.u8(kTagEmptySubtree);
  w.u16(depth);
  w.raw(ByteSpan(prefix.data(), prefix.size()));
  return sha256(ByteSpan(w.bytes().data(), w.bytes().size()));
}

Digest PrefixTree::leaf_node_hash(const Digest& index, const Digest& commitment) {
  const std::uint8_t tag = kTagLeaf;
  return sha256_concat({ByteSpan(&tag, 1), index.span(), commitment.span()});
}

namespace {

using Node = PrefixTree::Node;
using NodeRef = std::shared_ptr<const Node>;

Digest child_hash(const NodeRef& child, unsigned depth, Prefix& scratch) {
  if (child) return child->hash;
  return PrefixTree::empty_subtree_hash(static_cast<std::uint16_t>(depth), scratch);
}

NodeRef make_leaf(const Digest& index, const Digest& commitment) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::leaf;
  n->index = index;
  n->commitment = commitment;
  n->hash = PrefixTree::leaf_node_hash(index, commitment);
  return n;
}

// scratch holds the bits of the path above `depth`; bits at or below depth
// must be zero on entry and are restored before returning.
NodeRef make_interior(NodeRef left, NodeRef right, unsigned depth, Prefix& scratch) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::interior;
  n->left = std::move(left);
  n->right = std::move(right);
  set_bit(scratch, depth, false);
  const Digest lh = child_hash(n->left, depth + 1, scratch);
  set_bit(scratch, depth, true);
  const Digest rh = child_hash(n->right, depth + 1, scratch);
  set_bit(scratch, depth, false);
  n->hash = node_hash(lh, rh);
  return n;
}

// Splits two leaves whose indices first diverge at or below `depth` into the
// minimal interior chain placing each at its shortest disambiguating depth.
NodeRef split_leaves(const NodeRef& a, const NodeRef& b, unsigned depth,
                     Prefix& scratch) {
  if (depth >= 256) throw InputError("prefix tree indices identical to full depth");
  const bool abit = index_bit(a->index, depth);
  const bool bbit = index_bit(b->index, depth);
  if (abit != bbit) {
    return make_interior(abit ? b : a, abit ? a : b, depth, scratch);
  }
  set_bit(scratch, depth, abit);
  NodeRef inner = split_leaves(a, b, depth + 1, scratch);
  set_bit(scratch, depth, false);
  if (abit) {
    return make_interior(nullptr, std::move(inner), depth, scratch);
  }
  return make_interior(std::move(inner), nullptr, depth, scratch);
}

NodeRef put_node(const NodeRef& node, unsigned depth, Prefix& scratch,
                 const Digest& index, const Digest& commitment, bool& replaced) {
  if (!node) {
    return make_leaf(index, commitment);
  }
  if (node->kind == Node::Kind::leaf) {
    if (node->index == index) {
      replaced = true;
      return make_leaf(index, commitment);
    }
    return split_leaves(node, make_leaf(index, commitment), depth, scratch);
  }
  const bool bit = index_bit(index, depth);
  set_bit(scratch, depth, bit);
  NodeRef child =
      put_node(bit ? node->right : node->left, depth + 1, scratch, index,
               commitment, replaced);
  set_bit(scratch, depth, false);
  if (bit) {
    return make_interior(node->left, std::move(child), depth, scratch);
  }
  return make_interior(std::move(child), node->right, depth, scratch);
}

}  // namespace

Digest PrefixTree::root() const {
  if (!root_) {
    Prefix empty{};
    return empty_subtree_hash(0, empty);
  }
  return root_->hash;
}

PrefixTree PrefixTree::put(const Digest& index, const Digest& commitment) const {
  PrefixTree next;
  Prefix scratch{};
  bool replaced = false;
  next.root_ = put_node(root_, 0, scratch, index, commitment, replaced);
  next.count_ = count_ + (replaced ? 0 : 1);
  return next;
}

std::optional<Digest> PrefixTree::get(const Digest& index) const {
  const Node* node = root_.get();
  unsigned depth = 0;
  while (node) {
    if (node->kind == Node::Kind::leaf) {
      if (node->index == index) return node->commitment;
      return std::nullopt;
    }
    node = index_bit(index, depth) ? node->right.get() : node->left.get();
    ++depth;
  }
  return std::nullopt;
}

LookupProof PrefixTree::prove_lookup(const Digest& index) const {
  LookupProof proof;
  proof.index = index;
  Prefix scratch{};
  const Node* node = root_.get();
  unsigned depth = 0;
  while (node && node->kind == Node::Kind::interior) {
    const bool bit = index_bit(index, depth);
    const NodeRef& sibling = bit ? node->left : node->right;
    set_bit(scratch, depth, !bit);
    proof.siblings.push_back(child_hash(sibling, depth + 1, scratch));
    set_bit(scratch, depth, bit);
    node = (bit ? node->right : node->left).get();
    ++depth;
  }
  if (!node) {
    proof.kind = LookupProof::Kind::non_inclusion_empty;
  } else if (node->index == index) {
    proof.kind = LookupProof::Kind::inclusion;
    proof.commitment = node->commitment;
  } else {
    proof.kind = LookupProof::Kind::non_inclusion_leaf;
    proof.witness_index = node->index;
    proof.witness_commitment = node->commitment;
  }
  return proof;
}

bool PrefixTree::verify_lookup(const Digest& root, const Digest& index,
                               const std::optional<Digest>& expected_commitment,
                               const LookupProof& proof) {
  if (proof.index != index) return false;
  if (proof.siblings.size() > 256) return false;
  const unsigned depth = static_cast<unsigned>(proof.siblings.size());

  if (expected_commitment.has_value()) {
    if (proof.kind != LookupProof::Kind::inclusion) return false;
    if (proof.commitment != *expected_commitment) return false;
  } else if (proof.kind == LookupProof::Kind::inclusion) {
    return false;
  }

  Digest h;
  switch (proof.kind) {
    case LookupProof::Kind::inclusion:
      h = leaf_node_hash(index, proof.commitment);
      break;
    case LookupProof::Kind::non_inclusion_empty: {
      h = empty_subtree_hash(static_cast<std::uint16_t>(depth),
                             prefix_of(index, depth));
      break;
    }
    case LookupProof::Kind::non_inclusion_leaf: {
      if (proof.witness_index == index) return false;
      // The witness leaf must actually live on the lookup path.
      for (unsigned i = 0; i < depth; ++i) {
        if (index_bit(proof.witness_index, i) != index_bit(index, i)) return false;
      }
      h = leaf_node_hash(proof.witness_index, proof.witness_commitment);
      break;
    }
    default:
      return false;
  }

  for (unsigned level = depth; level-- > 0;) {
    const Digest& sibling = proof.siblings[level];
    h = index_bit(index, level) ? node_hash(sibling, h) : node_hash(h, sibling);
  }
  return h == root;
}

Bytes LookupProof::encode() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  w.digest(index);
  if (kind == Kind::inclusion) {
    w.digest(commitment);
  } else if (kind == Kind::non_inclusion_leaf) {
    w.digest(witness_index);
    w.digest(witness_commitment);
  }
  if (siblings.size() > 256) throw InputError("lookup path too long");
  w.u16(static_cast<std::uint16_t>(siblings.size()));
  for (const Digest& d : siblings) w.digest(d);
  return w.take();
}

LookupProof LookupProof::decode(ByteSpan data) {
  ByteReader r(data);
  LookupProof p;
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw FormatError("unknown lookup proof kind");
  p.kind = static_cast<Kind>(kind);
  p.index = r.digest();
  if (p.kind == Kind::inclusion) {
    p.commitment = r.digest();
  } else if (p.kind == Kind::non_inclusion_leaf) {
    p.witness_index = r.digest();
    p.witness_commitment = r.digest();
  }
  const std::uint16_t count = r.u16();
  if (count > 256) throw FormatError("lookup path too long");
  p.siblings.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) p.siblings.push_back(r.digest());
  r.expect_done();
  return p;
}

namespace {

void serialize_node(const NodeRef& node, ByteWriter& w) {
  if (!node) {
    w.u8(0x02);
    return;
  }
  if (node->kind == Node::Kind::leaf) {
    w.u8(0x00);
    w.digest(node->index);
    w.digest(node->commitment);
    return;
  }
  w.u8(0x01);
  serialize_node(node->left, w);
  serialize_node(node->right, w);
}

NodeRef deserialize_node(ByteReader& r, unsigned depth, Prefix& scratch,
                         std::size_t& count) {
  if (depth > 256) throw FormatError("prefix tree serialization too deep");
  switch (r.u8()) {
    case 0x02:
      return nullptr;
    case 0x00: {
      const Digest index = r.digest();
      const Digest commitment = r.digest();
      ++count;
      return make_leaf(index, commitment);
    }
    case 0x01: {
      set_bit(scratch, depth, false);
      NodeRef left = deserialize_node(r, depth + 1, scratch, count);
      set_bit(scratch, depth, true);
      NodeRef right = deserialize_node(r, depth + 1, scratch, count);
      set_bit(scratch, depth, false);
      return make_interior(std::move(left), std::move(right), depth, scratch);
    }
    default:
      throw FormatError("unknown prefix tree node tag");
  }
}

}  // namespace

Bytes PrefixTree::serialize() const {
  ByteWriter w;
  serialize_node(root_, w);
  return w.take();
}

PrefixTree PrefixTree::deserialize(ByteSpan data) {
  ByteReader r(data);
  PrefixTree tree;
  Prefix scratch{};
  std::size_t count = 0;
  tree.root_ = deserialize_node(r, 0, scratch, count);
  tree.count_ = count;
  r.expect_done();
  return tree;
}

}  // namespace tlog
