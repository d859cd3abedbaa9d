#include "tlog/gossip_sim.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "tlog/errors.hpp"
#include "tlog/rng.hpp"

namespace tlog {

namespace {

std::string fork_value(std::uint64_t epoch, std::uint8_t fork) {
  std::string v = "v" + std::to_string(epoch);
  if (fork != 0) v += "-fork";
  return v;
}

std::vector<std::uint8_t> default_split(std::uint32_t n) {
  std::vector<std::uint8_t> out(n, 0);
  for (std::uint32_t i = n / 2; i < n; ++i) out[i] = 1;
  return out;
}

std::string joined(const std::vector<std::uint8_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(static_cast<unsigned>(v[i]));
  }
  return out;
}

std::string joined32(const std::vector<std::uint32_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::uint8_t> parse_u8_list(std::string_view text) {
  std::vector<std::uint8_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string_view item =
        text.substr(start, comma == std::string_view::npos ? text.size() - start
                                                           : comma - start);
    if (!item.empty()) {
      unsigned v = 0;
      if (item == "honest") {
        v = 0;
      } else if (item == "offline") {
        v = 1;
      } else if (item == "colluding") {
        v = 2;
      } else {
        auto [ptr, ec] = std::from_chars(item.begin(), item.end(), v);
        if (ec != std::errc() || ptr != item.end()) {
          throw ConfigError("bad list item: " + std::string(item));
        }
      }
      out.push_back(static_cast<std::uint8_t>(v));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// The simulated operator: one honest chain, optionally forked into a second
// divergent chain at the equivocation epoch. Asked for a consistency proof it
// answers from every fork it maintains.
class SimOperator {
 public:
  explicit SimOperator(std::uint64_t key_seed) {
    Rng rng(key_seed);
    const auto seed = rng.bytes32();
    keys_ = keygen(ByteSpan(seed.data(), seed.size()));
    forks_.emplace_back();
    salt_rng_ = std::make_unique<Rng>(mix_seed(key_seed, 0x5a17));
  }

  const PublicKey& pub() const { return keys_.pub; }
  bool forked() const { return forks_.size() > 1; }
  std::size_t fork_count() const { return forks_.size(); }

  void commit(std::uint64_t epoch, bool fork_now) {
    if (fork_now && forks_.size() == 1) {
      forks_.push_back(forks_[0]);  // divergence starts this epoch
    }
    for (std::size_t f = 0; f < forks_.size(); ++f) {
      PendingUpdate u;
      u.key = to_bytes("k" + std::to_string(epoch));
      u.value = to_bytes(fork_value(epoch, static_cast<std::uint8_t>(f)));
      u.salt = salt_rng_->bytes32();
      forks_[f].commit_epoch(std::span<const PendingUpdate>(&u, 1), keys_.priv, epoch);
    }
  }

  const SignedTreeRoot& str(std::uint8_t fork) const {
    const std::size_t f = std::min<std::size_t>(fork, forks_.size() - 1);
    return forks_[f].strs().back();
  }

  ConsistencyProofSource proof_source() const {
    return [this](std::uint64_t old_size, std::uint64_t new_size) {
      std::vector<ConsistencyProof> out;
      for (const EpochState& fork : forks_) {
        if (new_size <= fork.root_log().size() && old_size <= new_size) {
          out.push_back(fork.root_log().prove_consistency(old_size, new_size));
        }
      }
      return out;
    };
  }

 private:
  KeyPair keys_;
  std::vector<EpochState> forks_;
  std::unique_ptr<Rng> salt_rng_;
};

}  // namespace

void SimConfig::validate() const {
  if (gossip_probability < 0.0 || gossip_probability > 1.0) {
    throw ConfigError("gossip_probability must lie in [0,1]");
  }
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (equivocate_at.has_value() && *equivocate_at >= epochs) {
    throw ConfigError("equivocate_at must be an epoch inside the run");
  }
  if (witness_threshold > witnesses) {
    throw ConfigError("witness threshold exceeds witness count");
  }
  if (!partition.empty() && partition.size() != observer_count()) {
    throw ConfigError("partition size must equal monitors + clients");
  }
  for (std::uint8_t f : partition) {
    if (f > 1) throw ConfigError("partition forks are 0 or 1");
  }
  if (!witness_partition.empty() && witness_partition.size() != witnesses) {
    throw ConfigError("witness_partition size must equal witnesses");
  }
  if (!witness_behavior.empty() && witness_behavior.size() != witnesses) {
    throw ConfigError("witness_behavior size must equal witnesses");
  }
  for (std::uint8_t b : witness_behavior) {
    if (b > 2) throw ConfigError("witness behaviors are honest|offline|colluding");
  }
  if (mode == Mode::two_log && required_logs == 0) {
    throw ConfigError("required_logs must be positive");
  }
}

std::string SimConfig::serialize() const {
  std::ostringstream out;
  out << "mode=" << (mode == Mode::gossip ? "gossip" : "two_log") << "\n";
  out << "epochs=" << epochs << "\n";
  out << "monitors=" << monitors << "\n";
  out << "clients=" << clients << "\n";
  out << "gossip_probability=" << gossip_probability << "\n";
  out << "equivocate_at="
      << (equivocate_at ? std::to_string(*equivocate_at) : std::string("none"))
      << "\n";
  if (!partition.empty()) out << "partition=" << joined(partition) << "\n";
  out << "witnesses=" << witnesses << "\n";
  out << "witness_threshold=" << witness_threshold << "\n";
  if (!witness_partition.empty()) {
    out << "witness_partition=" << joined(witness_partition) << "\n";
  }
  if (!witness_behavior.empty()) {
    out << "witness_behavior=" << joined(witness_behavior) << "\n";
  }
  out << "seed=" << seed << "\n";
  if (mode == Mode::two_log) {
    out << "entries=" << entries << "\n";
    out << "required_logs=" << required_logs << "\n";
  }
  return out.str();
}

SimConfig SimConfig::parse(std::string_view text) {
  SimConfig cfg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line missing '=': " + std::string(line));
    }
    const std::string_view key = line.substr(0, eq);
    const std::string_view value = line.substr(eq + 1);
    auto as_u64 = [&]() {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(value.begin(), value.end(), v);
      if (ec != std::errc() || ptr != value.end()) {
        throw ConfigError("bad integer for " + std::string(key));
      }
      return v;
    };
    if (key == "mode") {
      if (value == "gossip") {
        cfg.mode = Mode::gossip;
      } else if (value == "two_log") {
        cfg.mode = Mode::two_log;
      } else {
        throw ConfigError("unknown mode: " + std::string(value));
      }
    } else if (key == "epochs") {
      cfg.epochs = as_u64();
    } else if (key == "monitors") {
      cfg.monitors = static_cast<std::uint32_t>(as_u64());
    } else if (key == "clients") {
      cfg.clients = static_cast<std::uint32_t>(as_u64());
    } else if (key == "gossip_probability") {
      try {
        cfg.gossip_probability = std::stod(std::string(value));
      } catch (const std::exception&) {
        throw ConfigError("bad gossip_probability");
      }
    } else if (key == "equivocate_at") {
      if (value == "none") {
        cfg.equivocate_at.reset();
      } else {
        cfg.equivocate_at = as_u64();
      }
    } else if (key == "partition") {
      cfg.partition = parse_u8_list(value);
    } else if (key == "witnesses") {
      cfg.witnesses = static_cast<std::uint32_t>(as_u64());
    } else if (key == "witness_threshold") {
      cfg.witness_threshold = static_cast<std::uint32_t>(as_u64());
    } else if (key == "witness_partition") {
      cfg.witness_partition = parse_u8_list(value);
    } else if (key == "witness_behavior") {
      cfg.witness_behavior = parse_u8_list(value);
    } else if (key == "seed") {
      cfg.seed = as_u64();
    } else if (key == "entries") {
      cfg.entries = static_cast<std::uint32_t>(as_u64());
    } else if (key == "required_logs") {
      cfg.required_logs = static_cast<std::uint32_t>(as_u64());
    } else {
      throw ConfigError("unknown config key: " + std::string(key));
    }
  }
  cfg.validate();
  return cfg;
}

std::optional<EquivocationEvidence> detect_equivocation(
    const SignedTreeRoot& a, const SignedTreeRoot& b, const PublicKey& operator_pub,
    const ConsistencyProofSource& proofs) {
  // Evidence must be self-authenticating; refuse to implicate the operator
  // on anything it did not sign.
  if (!a.verify(operator_pub) || !b.verify(operator_pub)) return std::nullopt;

  if (a.epoch == b.epoch || a.log_size == b.log_size) {
    if (a.map_root == b.map_root && a.log_root == b.log_root) return std::nullopt;
    return EquivocationEvidence{a, b, "same-epoch-root-divergence"};
  }

  const SignedTreeRoot& older = a.log_size < b.log_size ? a : b;
  const SignedTreeRoot& newer = a.log_size < b.log_size ? b : a;
  if (proofs) {
    for (const ConsistencyProof& proof : proofs(older.log_size, newer.log_size)) {
      if (HistoryTree::verify_consistency(older.log_root, older.log_size,
                                          newer.log_root, newer.log_size, proof)) {
        return std::nullopt;
      }
    }
  }
  return EquivocationEvidence{older, newer, "no-consistency-path"};
}

Witness::Witness(std::uint32_t id, Behavior behavior, std::uint64_t key_seed)
    : id_(id), behavior_(behavior) {
  Rng rng(key_seed);
  const auto seed = rng.bytes32();
  keys_ = keygen(ByteSpan(seed.data(), seed.size()));
}

std::optional<Signature> Witness::consider(const SignedTreeRoot& str,
                                           const PublicKey& operator_pub,
                                           const ConsistencyProofSource& proofs) {
  if (behavior_ == Behavior::offline) return std::nullopt;
  const Bytes enc = str.encode();
  if (behavior_ == Behavior::colluding) {
    return sign(keys_.priv, ByteSpan(enc.data(), enc.size()));
  }
  if (!str.verify(operator_pub)) return std::nullopt;
  if (last_signed_.has_value()) {
    if (str.epoch <= last_signed_->epoch) return std::nullopt;
    bool linked = false;
    if (proofs) {
      for (const ConsistencyProof& proof :
           proofs(last_signed_->log_size, str.log_size)) {
        if (HistoryTree::verify_consistency(last_signed_->log_root,
                                            last_signed_->log_size, str.log_root,
                                            str.log_size, proof)) {
          linked = true;
          break;
        }
      }
    }
    if (!linked) return std::nullopt;
  }
  last_signed_ = str;
  return sign(keys_.priv, ByteSpan(enc.data(), enc.size()));
}

CosignOutcome cosign_checkpoint(std::span<Witness*> polled, const SignedTreeRoot& str,
                                std::uint32_t threshold, const PublicKey& operator_pub,
                                const ConsistencyProofSource& proofs) {
  CosignOutcome outcome;
  std::vector<std::pair<std::uint32_t, Signature>> sigs;
  for (Witness* w : polled) {
    if (auto sig = w->consider(str, operator_pub, proofs)) {
      sigs.emplace_back(w->id(), *sig);
      outcome.signed_by.push_back(w->id());
    } else {
      outcome.dissenting.push_back(w->id());
    }
  }
  if (sigs.size() >= threshold) {
    outcome.cosigned = CosignedSTR{str, std::move(sigs)};
  }
  return outcome;
}

bool verify_cosigned(const CosignedSTR& cosigned, const PublicKey& operator_pub,
                     std::span<const PublicKey> witness_pubs, std::uint32_t threshold) {
  if (!cosigned.str.verify(operator_pub)) return false;
  const Bytes enc = cosigned.str.encode();
  std::uint32_t valid = 0;
  std::vector<std::uint32_t> seen;
  for (const auto& [id, sig] : cosigned.cosignatures) {
    if (id >= witness_pubs.size()) return false;
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) return false;
    seen.push_back(id);
    if (verify_sig(witness_pubs[id], ByteSpan(enc.data(), enc.size()), sig)) {
      ++valid;
    }
  }
  return valid >= threshold;
}

namespace {

SimReport run_two_log(const SimConfig& cfg) {
  SimReport report;
  report.config = cfg;
  Rng rng(mix_seed(cfg.seed, 0x2106));
  const auto seed_a = rng.bytes32();
  const auto seed_b = rng.bytes32();
  const KeyPair op_a = keygen(ByteSpan(seed_a.data(), seed_a.size()));
  const KeyPair op_b = keygen(ByteSpan(seed_b.data(), seed_b.size()));
  HistoryTree log_a;
  HistoryTree log_b;
  std::vector<std::optional<std::uint64_t>> in_a(cfg.entries), in_b(cfg.entries);
  for (std::uint32_t i = 0; i < cfg.entries; ++i) {
    const Bytes payload = to_bytes("entry-" + std::to_string(i));
    in_a[i] = log_a.append(ByteSpan(payload.data(), payload.size()));
    // Every entry reaches log A; only alternate entries reach log B, so a
    // two-log policy rejects the odd ones.
    if (i % 2 == 0) {
      in_b[i] = log_b.append(ByteSpan(payload.data(), payload.size()));
    }
  }
  const SignedTreeHead head_a = sign_tree_head(log_a, 0, op_a.priv);
  const SignedTreeHead head_b = sign_tree_head(log_b, 0, op_b.priv);
  report.entry_accepted.resize(cfg.entries, 0);
  for (std::uint32_t i = 0; i < cfg.entries; ++i) {
    const Bytes payload = to_bytes("entry-" + std::to_string(i));
    const Digest leaf = leaf_hash(ByteSpan(payload.data(), payload.size()));
    std::uint32_t proofs = 0;
    if (in_a[i] && head_a.verify(op_a.pub)) {
      const InclusionProof p = log_a.prove_inclusion(*in_a[i], log_a.size());
      if (HistoryTree::verify_inclusion(head_a.root, head_a.tree_size, *in_a[i],
                                        leaf, p)) {
        ++proofs;
      }
    }
    if (in_b[i] && head_b.verify(op_b.pub)) {
      const InclusionProof p = log_b.prove_inclusion(*in_b[i], log_b.size());
      if (HistoryTree::verify_inclusion(head_b.root, head_b.tree_size, *in_b[i],
                                        leaf, p)) {
        ++proofs;
      }
    }
    const bool accept = proofs >= cfg.required_logs;
    report.entry_accepted[i] = accept ? 1 : 0;
    if (accept) {
      ++report.accepted_count;
    } else {
      ++report.rejected_count;
    }
  }
  return report;
}

}  // namespace

SimReport run_sim(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.mode == SimConfig::Mode::two_log) return run_two_log(cfg);

  SimReport report;
  report.config = cfg;

  SimOperator op(mix_seed(cfg.seed, 0x0b5e));
  Rng gossip_rng(mix_seed(cfg.seed, 0x6055));

  const std::uint32_t observers = cfg.observer_count();
  std::vector<std::uint8_t> partition =
      cfg.partition.empty() ? default_split(observers) : cfg.partition;
  std::vector<std::optional<SignedTreeRoot>> latest(observers);

  std::vector<Witness> witnesses;
  witnesses.reserve(cfg.witnesses);
  std::vector<std::uint8_t> wpart = cfg.witness_partition.empty()
                                        ? default_split(cfg.witnesses)
                                        : cfg.witness_partition;
  for (std::uint32_t i = 0; i < cfg.witnesses; ++i) {
    const auto behavior = cfg.witness_behavior.empty()
                              ? Witness::Behavior::honest
                              : static_cast<Witness::Behavior>(cfg.witness_behavior[i]);
    witnesses.emplace_back(i, behavior, mix_seed(cfg.seed, 0xa100 + i));
  }

  const ConsistencyProofSource proofs = op.proof_source();

  for (std::uint64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    op.commit(epoch, cfg.equivocate_at && *cfg.equivocate_at == epoch);

    for (std::uint32_t o = 0; o < observers; ++o) {
      const std::uint8_t fork = op.forked() ? partition[o] : 0;
      const SignedTreeRoot& str = op.str(fork);
      report.served.push_back({epoch, o, fork, str.map_root});
      // Each observer first checks its own view extends what it saw before.
      if (latest[o].has_value() && !report.detection_epoch) {
        if (auto ev = detect_equivocation(*latest[o], str, op.pub(), proofs)) {
          report.detection_epoch = epoch;
          report.evidence = ev;
        }
      }
      latest[o] = str;
    }

    if (cfg.witnesses > 0) {
      for (std::size_t fork = 0; fork < op.fork_count(); ++fork) {
        std::vector<Witness*> polled;
        for (Witness& w : witnesses) {
          const bool in_partition = !op.forked() || wpart[w.id()] == fork;
          if (in_partition || w.behavior() == Witness::Behavior::colluding) {
            polled.push_back(&w);
          }
        }
        const CosignOutcome outcome = cosign_checkpoint(
            std::span<Witness*>(polled), op.str(static_cast<std::uint8_t>(fork)),
            cfg.witness_threshold, op.pub(), proofs);
        WitnessEpochOutcome rec;
        rec.epoch = epoch;
        rec.fork = static_cast<std::uint8_t>(fork);
        rec.cosigned = outcome.cosigned.has_value();
        rec.signatures = static_cast<std::uint32_t>(outcome.signed_by.size());
        rec.dissenting = outcome.dissenting;
        if (!rec.cosigned) ++report.witness_refusals;
        report.witness_outcomes.push_back(std::move(rec));
      }
    }

    for (std::uint32_t i = 0; i < observers; ++i) {
      for (std::uint32_t j = i + 1; j < observers; ++j) {
        if (!gossip_rng.chance(cfg.gossip_probability)) continue;
        ++report.gossip_exchanges;
        if (!report.detection_epoch) {
          if (auto ev = detect_equivocation(*latest[i], *latest[j], op.pub(), proofs)) {
            report.detection_epoch = epoch;
            report.evidence = ev;
          }
        }
      }
    }
  }
  return report;
}

std::string SimReport::machine_lines() const {
  std::ostringstream out;
  out << "mode=" << (config.mode == SimConfig::Mode::gossip ? "gossip" : "two_log")
      << "\n";
  out << "seed=" << config.seed << "\n";
  if (config.mode == SimConfig::Mode::two_log) {
    for (std::size_t i = 0; i < entry_accepted.size(); ++i) {
      out << "entry index=" << i
          << " accepted=" << static_cast<unsigned>(entry_accepted[i]) << "\n";
    }
    out << "accepted=" << accepted_count << "\n";
    out << "rejected=" << rejected_count << "\n";
    return out.str();
  }
  for (const ServedView& v : served) {
    out << "served epoch=" << v.epoch << " observer=" << v.observer
        << " fork=" << static_cast<unsigned>(v.fork)
        << " map_root=" << v.map_root.hex().substr(0, 16) << "\n";
  }
  for (const WitnessEpochOutcome& w : witness_outcomes) {
    out << "witness epoch=" << w.epoch << " fork=" << static_cast<unsigned>(w.fork)
        << " cosigned=" << (w.cosigned ? 1 : 0) << " signatures=" << w.signatures
        << " dissenting=" << joined32(w.dissenting) << "\n";
  }
  out << "gossip_exchanges=" << gossip_exchanges << "\n";
  out << "witness_refusals=" << witness_refusals << "\n";
  if (detection_epoch) {
    out << "detection_epoch=" << *detection_epoch << "\n";
    out << "evidence reason=" << evidence->reason
        << " a_epoch=" << evidence->a.epoch << " b_epoch=" << evidence->b.epoch
        << " a_map_root=" << evidence->a.map_root.hex().substr(0, 16)
        << " b_map_root=" << evidence->b.map_root.hex().substr(0, 16) << "\n";
  } else {
    out << "detection_epoch=none\n";
    out << "evidence=none\n";
  }
  return out.str();
}

std::string SimReport::summary_table() const {
  std::ostringstream out;
  if (config.mode == SimConfig::Mode::two_log) {
    out << "two-log policy: " << accepted_count << " accepted, " << rejected_count
        << " rejected (policy requires " << config.required_logs << " logs)\n";
    return out.str();
  }
  out << "epochs=" << config.epochs << " observers=" << config.observer_count()
      << " p=" << config.gossip_probability << " exchanges=" << gossip_exchanges
      << "\n";
  if (detection_epoch) {
    out << "equivocation detected at epoch " << *detection_epoch << " ("
        << evidence->reason << ")\n";
  } else {
    out << "no equivocation detected\n";
  }
  if (config.witnesses > 0) {
    out << "witness refusals: " << witness_refusals << "\n";
  }
  return out.str();
}

std::vector<DetectionPoint> detection_curve(const SimConfig& base,
                                            std::span<const double> p_values,
                                            std::uint32_t trials) {
  if (trials == 0) throw ConfigError("detection_curve requires trials >= 1");
  std::vector<DetectionPoint> out;
  out.reserve(p_values.size());
  for (std::size_t pi = 0; pi < p_values.size(); ++pi) {
    DetectionPoint point;
    point.p = p_values[pi];
    point.trials = trials;
    for (std::uint32_t t = 0; t < trials; ++t) {
      SimConfig cfg = base;
      cfg.gossip_probability = point.p;
      cfg.seed = mix_seed(mix_seed(base.seed, 0xc000 + pi), t);
      const SimReport report = run_sim(cfg);
      if (report.detection_epoch.has_value()) ++point.detections;
    }
    point.rate = static_cast<double>(point.detections) / trials;
    out.push_back(point);
  }
  return out;
}

}  // namespace tlog
