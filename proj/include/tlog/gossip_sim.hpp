#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlog/log_backed_map.hpp"

namespace tlog {

// Deterministic epoch-lockstep simulation of a log operator (honest or
// equivocating), monitors/clients exchanging STRs by gossip, witness
// checkpoint cosigning, and a CT-style multi-log inclusion policy.
// Everything is derived from the seed; identical configs produce
// byte-identical reports.
struct SimConfig {
  enum class Mode : std::uint8_t { gossip = 0, two_log = 1 };

  Mode mode = Mode::gossip;
  std::uint64_t epochs = 20;
  std::uint32_t monitors = 2;
  std::uint32_t clients = 0;
  double gossip_probability = 1.0;
  std::optional<std::uint64_t> equivocate_at;
  // fork (0/1) served to each observer after the equivocation epoch;
  // monitors first, then clients. Empty: first half 0, second half 1.
  std::vector<std::uint8_t> partition;
  std::uint32_t witnesses = 0;
  std::uint32_t witness_threshold = 0;
  std::vector<std::uint8_t> witness_partition;  // fork shown to each witness
  std::vector<std::uint8_t> witness_behavior;   // 0 honest, 1 offline, 2 colluding
  std::uint64_t seed = 1;
  // two_log mode: entries submitted (even indices reach both logs) and the
  // number of independent logs a client requires before accepting.
  std::uint32_t entries = 8;
  std::uint32_t required_logs = 2;

  std::uint32_t observer_count() const { return monitors + clients; }
  void validate() const;  // throws ConfigError
  std::string serialize() const;
  static SimConfig parse(std::string_view text);  // throws ConfigError
};

// Two authentic, operator-signed views that cannot both belong to one
// append-only history. Self-authenticating: carries the signed STRs.
struct EquivocationEvidence {
  SignedTreeRoot a;
  SignedTreeRoot b;
  std::string reason;  // "same-epoch-root-divergence" or "no-consistency-path"

  bool self_authenticating(const PublicKey& operator_pub) const {
    return a.verify(operator_pub) && b.verify(operator_pub);
  }
};

// Supplies candidate consistency proofs between two log sizes; in the
// simulation the operator answers from every fork it maintains. Detection
// treats "no candidate verifies" as proof of a split view.
using ConsistencyProofSource =
    std::function<std::vector<ConsistencyProof>(std::uint64_t old_size,
                                                std::uint64_t new_size)>;

// Returns evidence when both STRs carry valid operator signatures and either
// (a) they share an epoch or log size but disagree on roots, or (b) no
// supplied consistency proof links the smaller log to the larger one.
// Unsigned or forged inputs never implicate the operator.
std::optional<EquivocationEvidence> detect_equivocation(
    const SignedTreeRoot& a, const SignedTreeRoot& b, const PublicKey& operator_pub,
    const ConsistencyProofSource& proofs = {});

// A checkpoint witness. Honest witnesses countersign an STR only when it is
// signature-valid and consistency-provable from the last STR they signed;
// colluding witnesses sign anything; offline witnesses sign nothing.
class Witness {
 public:
  enum class Behavior : std::uint8_t { honest = 0, offline = 1, colluding = 2 };

  Witness(std::uint32_t id, Behavior behavior, std::uint64_t key_seed);

  std::optional<Signature> consider(const SignedTreeRoot& str,
                                    const PublicKey& operator_pub,
                                    const ConsistencyProofSource& proofs);

  std::uint32_t id() const { return id_; }
  Behavior behavior() const { return behavior_; }
  const PublicKey& pub() const { return keys_.pub; }

 private:
  std::uint32_t id_;
  Behavior behavior_;
  KeyPair keys_;
  std::optional<SignedTreeRoot> last_signed_;
};

struct CosignedSTR {
  SignedTreeRoot str;
  std::vector<std::pair<std::uint32_t, Signature>> cosignatures;
};

struct CosignOutcome {
  std::optional<CosignedSTR> cosigned;  // present iff signatures >= threshold
  std::vector<std::uint32_t> signed_by;
  std::vector<std::uint32_t> dissenting;
};

CosignOutcome cosign_checkpoint(std::span<Witness*> polled, const SignedTreeRoot& str,
                                std::uint32_t threshold, const PublicKey& operator_pub,
                                const ConsistencyProofSource& proofs);

bool verify_cosigned(const CosignedSTR& cosigned, const PublicKey& operator_pub,
                     std::span<const PublicKey> witness_pubs, std::uint32_t threshold);

struct ServedView {
  std::uint64_t epoch = 0;
  std::uint32_t observer = 0;
  std::uint8_t fork = 0;
  Digest map_root;
};

struct WitnessEpochOutcome {
  std::uint64_t epoch = 0;
  std::uint8_t fork = 0;
  bool cosigned = false;
  std::uint32_t signatures = 0;
  std::vector<std::uint32_t> dissenting;
};

struct SimReport {
  SimConfig config;
  std::vector<ServedView> served;
  std::uint64_t gossip_exchanges = 0;
  std::optional<std::uint64_t> detection_epoch;
  std::optional<EquivocationEvidence> evidence;
  std::vector<WitnessEpochOutcome> witness_outcomes;
  std::uint64_t witness_refusals = 0;
  // two_log mode
  std::vector<std::uint8_t> entry_accepted;
  std::uint32_t accepted_count = 0;
  std::uint32_t rejected_count = 0;

  // One record per line, stable field order; identical runs are
  // byte-identical.
  std::string machine_lines() const;
  std::string summary_table() const;
};

SimReport run_sim(const SimConfig& config);

struct DetectionPoint {
  double p = 0.0;
  double rate = 0.0;
  std::uint32_t detections = 0;
  std::uint32_t trials = 0;
};

// Detection rate as a function of gossip probability; trial seeds derive
// deterministically from the base config's seed.
std::vector<DetectionPoint> detection_curve(const SimConfig& base,
                                            std::span<const double> p_values,
                                            std::uint32_t trials);

}  // namespace tlog
