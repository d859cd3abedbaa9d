#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tlog/log_backed_map.hpp"
#include "tlog/rng.hpp"
#include "tlog/sanitiser.hpp"
#include "tlog/sum_tree.hpp"

namespace tlog {

enum class Role : std::uint8_t { public_party = 0, subject = 1, auditor = 2 };

std::optional<Role> role_from_name(std::string_view name);
std::string_view role_name(Role role);

struct Principal {
  std::string id;
  Role role = Role::public_party;
  std::string subject_id;  // bound subject, role == subject only
  PublicKey key;           // request-signing key
};

enum class QueryKind : std::uint8_t {
  aggregate_sum = 0,
  aggregate_count = 1,
  aggregate_avg = 2,
  aggregate_min = 3,
  aggregate_max = 4,
  quantile = 5,
  individual_evidence = 6,
  raw_entries = 7,
};

std::optional<QueryKind> query_kind_from_name(std::string_view name);
std::string_view query_kind_name(QueryKind kind);
bool is_aggregate_kind(QueryKind kind);

struct Authorization {
  bool allowed = false;
  std::string reason;  // machine-readable denial reason
};

// Deterministic role/kind decision table plus the DP knobs. Defaults: the
// auditor reads everything raw; the public and subjects get DP-noised
// sum/count/avg; only subjects fetch individual evidence.
struct PolicyTable {
  static constexpr std::size_t kRoles = 3;
  static constexpr std::size_t kKinds = 8;

  bool allow[kRoles][kKinds] = {};
  bool dp_required[kRoles][kKinds] = {};

  Rational dp_epsilon{1, 10};       // charged per noised query
  Rational budget_total{1, 1};      // per principal (or pooled)
  BudgetLedger::Mode budget_mode = BudgetLedger::Mode::per_principal;
  double sum_sensitivity = 100.0;   // DP sensitivity of sum-valued answers

  static PolicyTable defaults();
};

Authorization authorize(const PolicyTable& policy, const Principal& principal,
                        QueryKind kind);

// One line of the tamper-evident query audit trail. Every request, served or
// denied, is appended to a dedicated history tree before its response leaves
// the service.
struct QueryRecord {
  std::string principal_id;
  std::string descriptor;
  std::uint64_t epoch = 0;
  bool served = false;
  std::string reason;       // "ok" or the denial reason
  Rational budget_charged;  // zero unless a DP charge was taken

  Bytes encode() const;
  static QueryRecord decode(ByteSpan data);
};

// Everything a third party needs to check one subject's entry against the
// published STR: the entry, its inclusion proof in the entry log, and the
// lookup proof binding the entry log's root into the map the STR signs.
struct EvidenceBundle {
  LogEntry entry;
  std::uint64_t entry_index = 0;
  std::uint64_t entry_log_size = 0;
  InclusionProof inclusion;
  LookupProof link;
  Bytes link_value;  // entry log root || size, as committed in the map
  std::array<std::uint8_t, 32> link_salt{};
  SignedTreeRoot str;

  Bytes encode() const;
  static EvidenceBundle decode(ByteSpan data);
};

bool verify_evidence_bundle(const EvidenceBundle& bundle,
                            const PublicKey& operator_pub,
                            const IndexConfig& index_config);

// Reserved map keys binding sidecar structures into each epoch's map root.
// The leading NUL byte keeps them out of the space of printable user keys.
const Bytes& entry_log_map_key();
const Bytes& sum_tree_map_key();

struct QueryRequest {
  std::string principal_id;
  QueryKind kind = QueryKind::aggregate_sum;
  Bytes from;
  Bytes to;
  Rational q{0, 1};  // quantile only
  bool dp = false;
  Signature signature;

  // type byte || principal || kind || dp || from || to || q — what the
  // signature covers, identical on the wire and in process.
  Bytes signed_portion() const;
  void sign_with(const SecretKey& key);
};

struct Denial {
  std::string reason;
  bool budget_refusal = false;
  Rational remaining_budget;
};

struct QueryAnswer {
  QueryKind kind = QueryKind::aggregate_sum;
  // exact path
  Aggregate aggregate;
  std::optional<AggregateProof> proof;
  // noised path
  bool noisy = false;
  double noisy_sum = 0.0;
  double noisy_count = 0.0;
  // quantile
  Bytes quantile_key;
  std::int64_t quantile_value = 0;
  std::uint64_t rank = 0;
  // raw entries (auditor)
  std::vector<LogEntry> raw;
};

struct QueryOutcome {
  std::optional<QueryAnswer> answer;
  std::optional<Denial> denial;
  std::uint64_t audit_index = 0;
  SignedTreeHead audit_head;
};

struct EvidenceOutcome {
  std::vector<EvidenceBundle> bundles;
  std::optional<Denial> denial;
  std::uint64_t audit_index = 0;
  SignedTreeHead audit_head;
};

struct ServiceConfig {
  IndexConfig index;
  PolicyTable policy;
  std::array<std::uint8_t, 32> operator_seed{};
  std::uint64_t rng_seed = 1;
  std::optional<BoxPublicKey> auditor_box;  // recipient for auditor-only entries
};

// Entry as persisted: the sanitised record plus its optional numeric metric
// feeding the per-epoch sum tree.
struct EntryRecord {
  LogEntry entry;
  std::optional<std::pair<Bytes, std::int64_t>> metric;  // (sum key, value)

  Bytes encode() const;
  static EntryRecord decode(ByteSpan data);
};

// Role-gated release-and-query surface over the log-backed map, entry log and
// sum tree. Ingestion and querying are serialized internally; queries are
// answered only over committed epochs.
class QueryService {
 public:
  explicit QueryService(ServiceConfig cfg);

  const PublicKey& operator_pub() const { return keys_.pub; }
  const IndexConfig& index_config() const { return config_.index; }
  const PolicyTable& policy() const { return config_.policy; }

  void register_principal(Principal principal);
  void register_subject_box(const std::string& subject_id, const BoxPublicKey& key);
  const Principal* find_principal(const std::string& id) const;

  // Sanitises and appends one entry; returns its entry-log index. Entries
  // become queryable at the next commit.
  std::uint64_t ingest(ByteSpan raw_payload, const std::string& subject_id,
                       Visibility visibility,
                       std::optional<std::int64_t> metric_value);
  // Re-adds an already-sanitised record (journal replay).
  std::uint64_t ingest_record(EntryRecord record);

  void stage_update(PendingUpdate update);
  SignedTreeRoot commit_epoch();
  // Re-commits an epoch from its recorded update set (journal replay); the
  // recorded meta updates carry their original salts, so the resulting STR
  // chain is byte-identical to the first run.
  SignedTreeRoot replay_epoch(std::span<const PendingUpdate> updates);
  // Re-appends a query audit record during restore.
  void replay_query_record(ByteSpan record_bytes);

  std::uint64_t rng_draws() const { return rng_.draws(); }
  void fast_forward_rng(std::uint64_t draws) { rng_.fast_forward(draws); }
  std::array<std::uint8_t, 32> draw_salt() { return rng_.bytes32(); }
  std::uint64_t dp_counter() const { return dp_counter_; }
  void restore_dp_counter(std::uint64_t value) { dp_counter_ = value; }

  QueryOutcome submit_query(const QueryRequest& request);
  EvidenceOutcome get_individual_evidence(const std::string& principal_id,
                                          const Signature& request_sig);
  static Bytes evidence_signed_portion(const std::string& principal_id);

  const EpochState& state() const { return state_; }
  const HistoryTree& entry_log() const { return entry_log_; }
  const HistoryTree& query_log() const { return query_log_; }
  const std::vector<QueryRecord>& query_records() const { return query_records_; }
  const std::vector<EntryRecord>& entry_records() const { return entry_records_; }
  const std::vector<std::pair<std::uint64_t, PendingUpdate>>& update_history() const {
    return update_history_;
  }
  std::uint64_t committed_entry_count() const { return committed_entries_; }
  const SumTree& sum_tree() const { return sum_tree_; }
  std::optional<SignedTreeRoot> current_str() const;
  SignedTreeHead query_log_head() const;
  BudgetLedger& ledger() { return ledger_; }

 private:
  std::uint64_t log_request(const std::string& principal_id,
                            const std::string& descriptor, bool served,
                            const std::string& reason, const Rational& charged);
  QueryAnswer answer_aggregate(const QueryRequest& request, const Principal& p,
                               bool noised, Denial* denial, Rational* charged);
  void rebuild_sum_tree();

  ServiceConfig config_;
  KeyPair keys_;
  Rng rng_;
  mutable std::mutex mu_;

  std::map<std::string, Principal> principals_;
  std::map<std::string, BoxPublicKey> subject_boxes_;

  EpochState state_;
  HistoryTree entry_log_;
  std::vector<EntryRecord> entry_records_;
  std::uint64_t committed_entries_ = 0;
  std::vector<PendingUpdate> staged_;
  std::vector<std::pair<std::uint64_t, PendingUpdate>> update_history_;
  SumTree sum_tree_;

  // Latest committed meta bindings, disclosed inside evidence bundles.
  Bytes entry_log_value_;
  std::array<std::uint8_t, 32> entry_log_salt_{};

  HistoryTree query_log_;
  std::vector<QueryRecord> query_records_;
  BudgetLedger ledger_;
  std::uint64_t dp_counter_ = 0;
};

}  // namespace tlog
