#include "tlog/log_backed_map.hpp"

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

Bytes SignedTreeRoot::signed_portion() const {
  ByteWriter w;
  w.u64(epoch);
  w.digest(map_root);
  w.digest(log_root);
  w.u64(log_size);
  w.digest(prev_str_hash);
  w.u64(timestamp);
  return w.take();
}

Bytes SignedTreeRoot::encode() const {
  Bytes out = signed_portion();
  out.insert(out.end(), signature.bytes.begin(), signature.bytes.end());
  return out;
}

SignedTreeRoot SignedTreeRoot::decode(ByteSpan data) {
  ByteReader r(data);
  SignedTreeRoot s;
  s.epoch = r.u64();
  s.map_root = r.digest();
  s.log_root = r.digest();
  s.log_size = r.u64();
  s.prev_str_hash = r.digest();
  s.timestamp = r.u64();
  const Digest sig_lo = r.digest();
  const Digest sig_hi = r.digest();
  std::copy(sig_lo.bytes.begin(), sig_lo.bytes.end(), s.signature.bytes.begin());
  std::copy(sig_hi.bytes.begin(), sig_hi.bytes.end(), s.signature.bytes.begin() + 32);
  r.expect_done();
  return s;
}

Digest SignedTreeRoot::hash() const {
  Bytes enc = encode();
  return sha256(ByteSpan(enc.data(), enc.size()));
}

bool SignedTreeRoot::verify(const PublicKey& operator_pub) const {
  Bytes body = signed_portion();
  return verify_sig(operator_pub, ByteSpan(body.data(), body.size()), signature);
}

Bytes SignedTreeHead::signed_portion() const {
  ByteWriter w;
  w.u64(tree_size);
  w.digest(root);
  w.u64(timestamp);
  return w.take();
}

Bytes SignedTreeHead::encode() const {
  Bytes out = signed_portion();
  out.insert(out.end(), signature.bytes.begin(), signature.bytes.end());
  return out;
}

SignedTreeHead SignedTreeHead::decode(ByteSpan data) {
  ByteReader r(data);
  SignedTreeHead s;
  s.tree_size = r.u64();
  s.root = r.digest();
  s.timestamp = r.u64();
  const Digest sig_lo = r.digest();
  const Digest sig_hi = r.digest();
  std::copy(sig_lo.bytes.begin(), sig_lo.bytes.end(), s.signature.bytes.begin());
  std::copy(sig_hi.bytes.begin(), sig_hi.bytes.end(), s.signature.bytes.begin() + 32);
  r.expect_done();
  return s;
}

bool SignedTreeHead::verify(const PublicKey& pub) const {
  Bytes body = signed_portion();
  return verify_sig(pub, ByteSpan(body.data(), body.size()), signature);
}

SignedTreeHead sign_tree_head(const HistoryTree& tree, std::uint64_t timestamp,
                              const SecretKey& key) {
  SignedTreeHead head;
  head.tree_size = tree.size();
  head.root = tree.root();
  head.timestamp = timestamp;
  Bytes body = head.signed_portion();
  head.signature = sign(key, ByteSpan(body.data(), body.size()));
  return head;
}

Bytes PendingUpdate::encode() const {
  ByteWriter w;
  w.var16(ByteSpan(key.data(), key.size()));
  w.var32(ByteSpan(value.data(), value.size()));
  w.raw(ByteSpan(salt.data(), salt.size()));
  return w.take();
}

PendingUpdate PendingUpdate::decode(ByteSpan data) {
  ByteReader r(data);
  PendingUpdate u;
  u.key = r.var16();
  u.value = r.var32();
  const Digest s = r.digest();
  u.salt = s.bytes;
  r.expect_done();
  return u;
}

Bytes AuthorizedUpdate::signed_portion() const {
  ByteWriter w;
  w.u64(epoch);
  w.var16(ByteSpan(key.data(), key.size()));
  w.var32(ByteSpan(value.data(), value.size()));
  w.raw(ByteSpan(salt.data(), salt.size()));
  w.raw(owner.span());
  return w.take();
}

bool AuthorizedUpdate::verify() const {
  Bytes body = signed_portion();
  return verify_sig(owner, ByteSpan(body.data(), body.size()), signature);
}

Digest AuthorizedUpdate::commitment() const {
  return value_commitment(ByteSpan(salt.data(), salt.size()),
                          ByteSpan(value.data(), value.size()));
}

AuthorizedUpdate make_authorized_update(std::uint64_t epoch, ByteSpan key,
                                        ByteSpan value, ByteSpan salt32,
                                        const KeyPair& owner) {
  AuthorizedUpdate au;
  au.epoch = epoch;
  au.key = Bytes(key.begin(), key.end());
  au.value = Bytes(value.begin(), value.end());
  std::copy(salt32.begin(), salt32.end(), au.salt.begin());
  au.owner = owner.pub;
  Bytes body = au.signed_portion();
  au.signature = sign(owner.priv, ByteSpan(body.data(), body.size()));
  return au;
}

SignedTreeRoot EpochState::commit_epoch(std::span<const PendingUpdate> updates,
                                        const SecretKey& operator_key,
                                        std::uint64_t timestamp) {
  for (const PendingUpdate& u : updates) {
    const Digest index = index_.derive(ByteSpan(u.key.data(), u.key.size()));
    const Digest commitment = value_commitment(
        ByteSpan(u.salt.data(), u.salt.size()), ByteSpan(u.value.data(), u.value.size()));
    map_ = map_.put(index, commitment);
  }
  SignedTreeRoot str;
  str.epoch = strs_.size();
  str.map_root = map_.root();
  root_log_.append(str.map_root.span());
  str.log_root = root_log_.root();
  str.log_size = root_log_.size();
  str.prev_str_hash = strs_.empty() ? empty_root() : strs_.back().hash();
  str.timestamp = timestamp;
  Bytes body = str.signed_portion();
  str.signature = sign(operator_key, ByteSpan(body.data(), body.size()));
  strs_.push_back(str);
  return str;
}

Digest EpochState::map_root_at(std::uint64_t epoch) const {
  if (epoch >= strs_.size()) throw std::out_of_range("epoch not committed");
  return strs_[epoch].map_root;
}

LookupProof EpochState::prove_binding(ByteSpan key) const {
  return map_.prove_lookup(index_.derive(key));
}

Bytes EpochState::encode() const {
  ByteWriter w;
  Bytes map_bytes = map_.serialize();
  w.var32(ByteSpan(map_bytes.data(), map_bytes.size()));
  w.u64(root_log_.size());
  for (const Digest& d : root_log_.leaves()) w.digest(d);
  w.u32(static_cast<std::uint32_t>(strs_.size()));
  for (const SignedTreeRoot& s : strs_) {
    Bytes enc = s.encode();
    w.var16(ByteSpan(enc.data(), enc.size()));
  }
  return w.take();
}

EpochState EpochState::decode(ByteSpan data, IndexConfig index_config) {
  ByteReader r(data);
  EpochState state(index_config);
  Bytes map_bytes = r.var32();
  state.map_ = PrefixTree::deserialize(ByteSpan(map_bytes.data(), map_bytes.size()));
  const std::uint64_t leaf_count = r.u64();
  for (std::uint64_t i = 0; i < leaf_count; ++i) {
    state.root_log_.append_leaf_digest(r.digest());
  }
  const std::uint32_t str_count = r.u32();
  for (std::uint32_t i = 0; i < str_count; ++i) {
    Bytes enc = r.var16();
    state.strs_.push_back(SignedTreeRoot::decode(ByteSpan(enc.data(), enc.size())));
  }
  r.expect_done();
  if (state.strs_.size() != state.root_log_.size()) {
    throw FormatError("epoch state STR count does not match root log size");
  }
  return state;
}

ChainCheck verify_str_chain(std::span<const SignedTreeRoot> strs,
                            const PublicKey& operator_pub) {
  ChainCheck check;
  if (strs.empty()) {
    check.ok = false;
    check.reason = "empty chain";
    return check;
  }
  for (std::size_t i = 0; i < strs.size(); ++i) {
    const SignedTreeRoot& s = strs[i];
    if (!s.verify(operator_pub)) {
      return {false, i, "signature invalid"};
    }
    if (i == 0) {
      if (s.epoch == 0 && s.prev_str_hash != empty_root()) {
        return {false, i, "genesis prev hash is not the empty sentinel"};
      }
      continue;
    }
    if (s.epoch != strs[i - 1].epoch + 1) {
      return {false, i, "epochs not consecutive"};
    }
    if (s.prev_str_hash != strs[i - 1].hash()) {
      return {false, i, "previous STR hash mismatch"};
    }
  }
  return check;
}

bool audit_epoch(const SignedTreeRoot& older, const SignedTreeRoot& newer,
                 const ConsistencyProof& log_consistency,
                 const InclusionProof& map_root_inclusion) {
  if (older.epoch > newer.epoch) return false;
  if (older.epoch == newer.epoch) {
    return older.log_root == newer.log_root && older.map_root == newer.map_root &&
           log_consistency.nodes.empty();
  }
  if (!HistoryTree::verify_consistency(older.log_root, older.log_size,
                                       newer.log_root, newer.log_size,
                                       log_consistency)) {
    return false;
  }
  return HistoryTree::verify_inclusion(newer.log_root, newer.log_size, newer.epoch,
                                       leaf_hash(newer.map_root.span()),
                                       map_root_inclusion);
}

bool client_verify_binding(const SignedTreeRoot& str, const PublicKey& operator_pub,
                           const IndexConfig& index_config, ByteSpan key,
                           ByteSpan value, ByteSpan salt32, const LookupProof& proof) {
  if (!str.verify(operator_pub)) return false;
  const Digest index = index_config.derive(key);
  const Digest commitment = value_commitment(salt32, value);
  return PrefixTree::verify_lookup(str.map_root, index, commitment, proof);
}

std::vector<Alert> monitor_check_key(
    std::span<const SignedTreeRoot> strs, const PublicKey& operator_pub,
    const IndexConfig& index_config, ByteSpan key,
    std::optional<Digest> expected_commitment,
    std::span<const LookupProof> proofs_per_epoch,
    std::span<const AuthorizedUpdate> authorized_updates,
    const PublicKey& owner_pub) {
  std::vector<Alert> alerts;
  const ChainCheck chain = verify_str_chain(strs, operator_pub);
  if (!chain.ok) {
    alerts.push_back({AlertKind::chain_broken, chain.bad_index, chain.reason});
    return alerts;
  }
  const Digest index = index_config.derive(key);
  std::optional<Digest> expected = expected_commitment;
  for (std::size_t i = 0; i < strs.size(); ++i) {
    const std::uint64_t epoch = strs[i].epoch;
    if (i >= proofs_per_epoch.size()) {
      alerts.push_back({AlertKind::missing_proof, epoch, "no lookup proof supplied"});
      continue;
    }
    const LookupProof& proof = proofs_per_epoch[i];
    // Accept a whitelisted change first, then require the proof to match the
    // (possibly updated) expectation.
    for (const AuthorizedUpdate& au : authorized_updates) {
      if (au.epoch == epoch && au.key == Bytes(key.begin(), key.end()) &&
          au.owner == owner_pub && au.verify()) {
        expected = au.commitment();
      }
    }
    if (PrefixTree::verify_lookup(strs[i].map_root, index, expected, proof)) {
      continue;
    }
    // The proof does not show the expected state: either it is malformed for
    // this root, or the binding changed without authorization.
    const bool proof_is_sound =
        (proof.kind == LookupProof::Kind::inclusion &&
         PrefixTree::verify_lookup(strs[i].map_root, index, proof.commitment, proof)) ||
        (proof.kind != LookupProof::Kind::inclusion &&
         PrefixTree::verify_lookup(strs[i].map_root, index, std::nullopt, proof));
    if (!proof_is_sound) {
      alerts.push_back({AlertKind::invalid_proof, epoch, "lookup proof invalid"});
    } else {
      alerts.push_back(
          {AlertKind::unexpected_binding, epoch, "binding changed without authorization"});
      // Track the served binding so a single swap yields a single alert.
      if (proof.kind == LookupProof::Kind::inclusion) {
        expected = proof.commitment;
      } else {
        expected = std::nullopt;
      }
    }
  }
  return alerts;
}

}  // namespace tlog
