#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlog/crypto.hpp"
#include "tlog/history_tree.hpp"
#include "tlog/prefix_tree.hpp"

namespace tlog {

// Operator-signed commitment to an epoch: the map root plus the root of the
// history tree that records every epoch's map root. STRs chain through
// prev_str_hash = H(encoding of the previous STR); the genesis STR uses
// H("") as its sentinel predecessor.
//
// Canonical encoding (bit-exact, signature covers the first 120 bytes):
//   epoch u64 || map_root 32 || log_root 32 || log_size u64 ||
//   prev_str_hash 32 || timestamp u64 || signature 64
struct SignedTreeRoot {
  std::uint64_t epoch = 0;
  Digest map_root;
  Digest log_root;
  std::uint64_t log_size = 0;
  Digest prev_str_hash;
  std::uint64_t timestamp = 0;
  Signature signature;

  Bytes signed_portion() const;
  Bytes encode() const;
  static SignedTreeRoot decode(ByteSpan data);  // throws FormatError
  Digest hash() const;                          // H(encode())
  bool verify(const PublicKey& operator_pub) const;

  bool operator==(const SignedTreeRoot&) const = default;
};

// Signed commitment to a plain log at a size (no chaining); used for the
// query audit log and standalone entry logs.
// Encoding: tree_size u64 || root 32 || timestamp u64 || signature 64.
struct SignedTreeHead {
  std::uint64_t tree_size = 0;
  Digest root;
  std::uint64_t timestamp = 0;
  Signature signature;

  Bytes signed_portion() const;
  Bytes encode() const;
  static SignedTreeHead decode(ByteSpan data);
  bool verify(const PublicKey& pub) const;
};

SignedTreeHead sign_tree_head(const HistoryTree& tree, std::uint64_t timestamp,
                              const SecretKey& key);

// A key/value write staged for the next epoch. The salt blinds the value
// commitment stored in the map; it travels with the value in storage.
struct PendingUpdate {
  Bytes key;
  Bytes value;
  std::array<std::uint8_t, 32> salt{};

  Bytes encode() const;
  static PendingUpdate decode(ByteSpan data);
};

// Key-owner-signed statement authorizing a binding change at an epoch.
// Monitors treat a binding change without a matching record as misbehaviour.
struct AuthorizedUpdate {
  std::uint64_t epoch = 0;
  Bytes key;
  Bytes value;
  std::array<std::uint8_t, 32> salt{};
  PublicKey owner;
  Signature signature;

  Bytes signed_portion() const;
  bool verify() const;
  Digest commitment() const;
};

AuthorizedUpdate make_authorized_update(std::uint64_t epoch, ByteSpan key,
                                        ByteSpan value, ByteSpan salt32,
                                        const KeyPair& owner);

// The log-backed map: a prefix tree (current bindings) plus a history tree
// whose leaf at index e is leaf_hash(map root of epoch e), plus the STR chain.
class EpochState {
 public:
  EpochState() = default;
  explicit EpochState(IndexConfig index_config) : index_(index_config) {}

  const PrefixTree& map() const { return map_; }
  const HistoryTree& root_log() const { return root_log_; }
  const std::vector<SignedTreeRoot>& strs() const { return strs_; }
  const IndexConfig& index_config() const { return index_; }
  std::uint64_t next_epoch() const { return strs_.size(); }

  // Applies all pending updates, appends the new map root to the root log,
  // and publishes the chained STR for the new epoch.
  SignedTreeRoot commit_epoch(std::span<const PendingUpdate> updates,
                              const SecretKey& operator_key,
                              std::uint64_t timestamp);

  // Map root as recorded for an already-committed epoch.
  Digest map_root_at(std::uint64_t epoch) const;
  // Prefix tree version as of the latest commit.
  LookupProof prove_binding(ByteSpan key) const;

  Bytes encode() const;
  static EpochState decode(ByteSpan data, IndexConfig index_config);

 private:
  IndexConfig index_;
  PrefixTree map_;
  HistoryTree root_log_;
  std::vector<SignedTreeRoot> strs_;
};

struct ChainCheck {
  bool ok = true;
  std::size_t bad_index = 0;  // first failing position when !ok
  std::string reason;
};

// Signatures valid, epochs consecutive, every prev_str_hash matching, and a
// genesis sentinel when the chain starts at epoch 0.
ChainCheck verify_str_chain(std::span<const SignedTreeRoot> strs,
                            const PublicKey& operator_pub);

// True iff the two STRs' log roots are consistent and newer.map_root is the
// leaf at index newer.epoch of the newer log. Signatures are the chain
// check's concern, not repeated here.
bool audit_epoch(const SignedTreeRoot& older, const SignedTreeRoot& newer,
                 const ConsistencyProof& log_consistency,
                 const InclusionProof& map_root_inclusion);

// Full client-side check of one disclosed binding against a published STR.
bool client_verify_binding(const SignedTreeRoot& str, const PublicKey& operator_pub,
                           const IndexConfig& index_config, ByteSpan key,
                           ByteSpan value, ByteSpan salt32, const LookupProof& proof);

enum class AlertKind : std::uint8_t {
  chain_broken,
  missing_proof,
  invalid_proof,
  unexpected_binding,
};

struct Alert {
  AlertKind kind;
  std::uint64_t epoch = 0;
  std::string detail;
};

// Replays a key's binding across an STR history. expected_commitment is the
// binding the monitor last saw (absent = expects no binding); owner-signed
// AuthorizedUpdates whitelist changes. One alert per unexplained epoch.
std::vector<Alert> monitor_check_key(
    std::span<const SignedTreeRoot> strs, const PublicKey& operator_pub,
    const IndexConfig& index_config, ByteSpan key,
    std::optional<Digest> expected_commitment,
    std::span<const LookupProof> proofs_per_epoch,
    std::span<const AuthorizedUpdate> authorized_updates,
    const PublicKey& owner_pub);

}  // namespace tlog
