#include "tlog/release_query.hpp"

#include <algorithm>
#include <cstdio>

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

std::optional<Role> role_from_name(std::string_view name) {
  if (name == "public") return Role::public_party;
  if (name == "subject") return Role::subject;
  if (name == "auditor") return Role::auditor;
  return std::nullopt;
}

std::string_view role_name(Role role) {
  switch (role) {
    case Role::public_party: return "public";
    case Role::subject: return "subject";
    case Role::auditor: return "auditor";
  }
  return "?";
}

std::optional<QueryKind> query_kind_from_name(std::string_view name) {
  if (name == "sum") return QueryKind::aggregate_sum;
  if (name == "count") return QueryKind::aggregate_count;
  if (name == "avg") return QueryKind::aggregate_avg;
  if (name == "min") return QueryKind::aggregate_min;
  if (name == "max") return QueryKind::aggregate_max;
  if (name == "quantile") return QueryKind::quantile;
  if (name == "evidence") return QueryKind::individual_evidence;
  if (name == "raw") return QueryKind::raw_entries;
  return std::nullopt;
}

std::string_view query_kind_name(QueryKind kind) {
  switch (kind) {
    case QueryKind::aggregate_sum: return "sum";
    case QueryKind::aggregate_count: return "count";
    case QueryKind::aggregate_avg: return "avg";
    case QueryKind::aggregate_min: return "min";
    case QueryKind::aggregate_max: return "max";
    case QueryKind::quantile: return "quantile";
    case QueryKind::individual_evidence: return "evidence";
    case QueryKind::raw_entries: return "raw";
  }
  return "?";
}

bool is_aggregate_kind(QueryKind kind) {
  return kind == QueryKind::aggregate_sum || kind == QueryKind::aggregate_count ||
         kind == QueryKind::aggregate_avg || kind == QueryKind::aggregate_min ||
         kind == QueryKind::aggregate_max;
}

PolicyTable PolicyTable::defaults() {
  PolicyTable t;
  const auto pub = static_cast<std::size_t>(Role::public_party);
  const auto sub = static_cast<std::size_t>(Role::subject);
  const auto aud = static_cast<std::size_t>(Role::auditor);
  const auto k = [](QueryKind kind) { return static_cast<std::size_t>(kind); };

  for (QueryKind kind : {QueryKind::aggregate_sum, QueryKind::aggregate_count,
                         QueryKind::aggregate_avg}) {
    t.allow[pub][k(kind)] = true;
    t.dp_required[pub][k(kind)] = true;
    t.allow[sub][k(kind)] = true;
    t.dp_required[sub][k(kind)] = true;
    t.allow[aud][k(kind)] = true;
  }
  for (QueryKind kind : {QueryKind::aggregate_min, QueryKind::aggregate_max,
                         QueryKind::quantile, QueryKind::raw_entries}) {
    t.allow[aud][k(kind)] = true;
  }
  t.allow[sub][k(QueryKind::individual_evidence)] = true;
  return t;
}

Authorization authorize(const PolicyTable& policy, const Principal& principal,
                        QueryKind kind) {
  const auto r = static_cast<std::size_t>(principal.role);
  const auto c = static_cast<std::size_t>(kind);
  if (r >= PolicyTable::kRoles || c >= PolicyTable::kKinds) {
    return {false, "unknown-kind"};
  }
  if (!policy.allow[r][c]) {
    return {false, std::string("denied-for-role:") + std::string(role_name(principal.role))};
  }
  return {true, ""};
}

Bytes QueryRecord::encode() const {
  ByteWriter w;
  Bytes pid = to_bytes(principal_id);
  Bytes desc = to_bytes(descriptor);
  Bytes why = to_bytes(reason);
  w.var16(ByteSpan(pid.data(), pid.size()));
  w.var16(ByteSpan(desc.data(), desc.size()));
  w.u64(epoch);
  w.u8(served ? 1 : 0);
  w.var16(ByteSpan(why.data(), why.size()));
  w.i64(budget_charged.num);
  w.i64(budget_charged.den);
  return w.take();
}

QueryRecord QueryRecord::decode(ByteSpan data) {
  ByteReader r(data);
  QueryRecord q;
  q.principal_id = to_string(r.var16());
  q.descriptor = to_string(r.var16());
  q.epoch = r.u64();
  q.served = r.u8() != 0;
  q.reason = to_string(r.var16());
  const std::int64_t num = r.i64();
  const std::int64_t den = r.i64();
  q.budget_charged = Rational(num, den);
  r.expect_done();
  return q;
}

Bytes EvidenceBundle::encode() const {
  ByteWriter w;
  Bytes e = entry.encode();
  w.var32(ByteSpan(e.data(), e.size()));
  w.u64(entry_index);
  w.u64(entry_log_size);
  Bytes inc = inclusion.encode();
  w.var32(ByteSpan(inc.data(), inc.size()));
  Bytes lk = link.encode();
  w.var32(ByteSpan(lk.data(), lk.size()));
  w.var16(ByteSpan(link_value.data(), link_value.size()));
  w.raw(ByteSpan(link_salt.data(), link_salt.size()));
  Bytes s = str.encode();
  w.var16(ByteSpan(s.data(), s.size()));
  return w.take();
}

EvidenceBundle EvidenceBundle::decode(ByteSpan data) {
  ByteReader r(data);
  EvidenceBundle b;
  Bytes e = r.var32();
  b.entry = LogEntry::decode(ByteSpan(e.data(), e.size()));
  b.entry_index = r.u64();
  b.entry_log_size = r.u64();
  Bytes inc = r.var32();
  b.inclusion = InclusionProof::decode(ByteSpan(inc.data(), inc.size()));
  Bytes lk = r.var32();
  b.link = LookupProof::decode(ByteSpan(lk.data(), lk.size()));
  b.link_value = r.var16();
  b.link_salt = r.digest().bytes;
  Bytes s = r.var16();
  b.str = SignedTreeRoot::decode(ByteSpan(s.data(), s.size()));
  r.expect_done();
  return b;
}

const Bytes& entry_log_map_key() {
  static const Bytes key = [] {
    Bytes k;
    k.push_back(0x00);
    const Bytes name = to_bytes("meta/entry-log");
    k.insert(k.end(), name.begin(), name.end());
    return k;
  }();
  return key;
}

const Bytes& sum_tree_map_key() {
  static const Bytes key = [] {
    Bytes k;
    k.push_back(0x00);
    const Bytes name = to_bytes("meta/sum-tree");
    k.insert(k.end(), name.begin(), name.end());
    return k;
  }();
  return key;
}

namespace {

Bytes encode_root_and_size(const Digest& root, std::uint64_t size) {
  ByteWriter w;
  w.digest(root);
  w.u64(size);
  return w.take();
}

}  // namespace

bool verify_evidence_bundle(const EvidenceBundle& bundle,
                            const PublicKey& operator_pub,
                            const IndexConfig& index_config) {
  if (!bundle.str.verify(operator_pub)) return false;

  // The map binds (entry log root || size) under the reserved key.
  Digest link_index;
  try {
    link_index = index_config.derive(
        ByteSpan(entry_log_map_key().data(), entry_log_map_key().size()));
  } catch (const ConfigError&) {
    return false;
  }
  const Digest link_commitment =
      value_commitment(ByteSpan(bundle.link_salt.data(), bundle.link_salt.size()),
                       ByteSpan(bundle.link_value.data(), bundle.link_value.size()));
  if (!PrefixTree::verify_lookup(bundle.str.map_root, link_index, link_commitment,
                                 bundle.link)) {
    return false;
  }
  if (bundle.link_value.size() != 40) return false;
  ByteReader r(ByteSpan(bundle.link_value.data(), bundle.link_value.size()));
  const Digest entry_log_root = r.digest();
  const std::uint64_t entry_log_size = r.u64();
  if (entry_log_size != bundle.entry_log_size) return false;

  Bytes entry_bytes;
  try {
    entry_bytes = bundle.entry.encode();
  } catch (const InputError&) {
    return false;
  }
  if (!HistoryTree::verify_inclusion(entry_log_root, entry_log_size,
                                     bundle.entry_index,
                                     leaf_hash(ByteSpan(entry_bytes.data(), entry_bytes.size())),
                                     bundle.inclusion)) {
    return false;
  }

  // Public payloads must open the commitment.
  if (bundle.entry.payload.has_value()) {
    if (!bundle.entry.salt.has_value()) return false;
    const Digest c = value_commitment(
        ByteSpan(bundle.entry.salt->data(), bundle.entry.salt->size()),
        ByteSpan(bundle.entry.payload->data(), bundle.entry.payload->size()));
    if (c != bundle.entry.payload_commitment) return false;
  }
  return true;
}

Bytes QueryRequest::signed_portion() const {
  ByteWriter w;
  w.u8(0x01);  // wire message type for queries
  Bytes pid = to_bytes(principal_id);
  w.var16(ByteSpan(pid.data(), pid.size()));
  w.u8(static_cast<std::uint8_t>(kind));
  w.u8(dp ? 1 : 0);
  w.var16(ByteSpan(from.data(), from.size()));
  w.var16(ByteSpan(to.data(), to.size()));
  w.i64(q.num);
  w.i64(q.den);
  return w.take();
}

void QueryRequest::sign_with(const SecretKey& key) {
  Bytes body = signed_portion();
  signature = sign(key, ByteSpan(body.data(), body.size()));
}

Bytes EntryRecord::encode() const {
  ByteWriter w;
  Bytes e = entry.encode();
  w.var32(ByteSpan(e.data(), e.size()));
  w.u8(metric.has_value() ? 1 : 0);
  if (metric.has_value()) {
    w.var16(ByteSpan(metric->first.data(), metric->first.size()));
    w.i64(metric->second);
  }
  return w.take();
}

EntryRecord EntryRecord::decode(ByteSpan data) {
  ByteReader r(data);
  EntryRecord rec;
  Bytes e = r.var32();
  rec.entry = LogEntry::decode(ByteSpan(e.data(), e.size()));
  if (r.u8() != 0) {
    Bytes key = r.var16();
    const std::int64_t value = r.i64();
    rec.metric = std::make_pair(std::move(key), value);
  }
  r.expect_done();
  return rec;
}

QueryService::QueryService(ServiceConfig cfg)
    : config_(std::move(cfg)),
      keys_(keygen(ByteSpan(config_.operator_seed.data(), config_.operator_seed.size()))),
      rng_(config_.rng_seed),
      state_(config_.index),
      ledger_(config_.policy.budget_mode, config_.policy.budget_total) {}

void QueryService::register_principal(Principal principal) {
  std::lock_guard<std::mutex> lock(mu_);
  principals_[principal.id] = std::move(principal);
}

void QueryService::register_subject_box(const std::string& subject_id,
                                        const BoxPublicKey& key) {
  std::lock_guard<std::mutex> lock(mu_);
  subject_boxes_[subject_id] = key;
}

const Principal* QueryService::find_principal(const std::string& id) const {
  auto it = principals_.find(id);
  return it == principals_.end() ? nullptr : &it->second;
}

std::uint64_t QueryService::ingest(ByteSpan raw_payload, const std::string& subject_id,
                                   Visibility visibility,
                                   std::optional<std::int64_t> metric_value) {
  std::lock_guard<std::mutex> lock(mu_);
  SanitisePolicy policy;
  policy.visibility = visibility;
  policy.auditor_key = config_.auditor_box;
  if (visibility == Visibility::subject_only) {
    auto it = subject_boxes_.find(subject_id);
    if (it != subject_boxes_.end()) policy.subject_key = it->second;
  }
  EntryRecord record;
  record.entry = sanitise_entry(raw_payload, subject_id, policy, rng_);
  if (metric_value.has_value()) {
    // Per-subject metric keys: "<subject>/<hex sequence>" keeps keys distinct
    // and lets lexicographic ranges select one subject's span.
    char seq[16];
    std::snprintf(seq, sizeof seq, "%08llx",
                  static_cast<unsigned long long>(entry_records_.size()));
    Bytes key = to_bytes(subject_id + "/" + seq);
    record.metric = std::make_pair(std::move(key), *metric_value);
  }
  return ingest_record(std::move(record));
}

std::uint64_t QueryService::ingest_record(EntryRecord record) {
  const Bytes entry_bytes = record.entry.encode();
  const std::uint64_t index =
      entry_log_.append(ByteSpan(entry_bytes.data(), entry_bytes.size()));
  entry_records_.push_back(std::move(record));
  return index;
}

void QueryService::stage_update(PendingUpdate update) {
  std::lock_guard<std::mutex> lock(mu_);
  staged_.push_back(std::move(update));
}

void QueryService::rebuild_sum_tree() {
  std::vector<SumEntry> entries;
  for (std::uint64_t i = 0; i < committed_entries_; ++i) {
    if (entry_records_[i].metric.has_value()) {
      entries.push_back({entry_records_[i].metric->first,
                         entry_records_[i].metric->second});
    }
  }
  sum_tree_ = SumTree::build(std::move(entries));
}

SignedTreeRoot QueryService::commit_epoch() {
  std::lock_guard<std::mutex> lock(mu_);
  committed_entries_ = entry_log_.size();
  rebuild_sum_tree();

  std::vector<PendingUpdate> updates = std::move(staged_);
  staged_.clear();

  PendingUpdate entry_meta;
  entry_meta.key = entry_log_map_key();
  entry_meta.value = encode_root_and_size(
      committed_entries_ == 0 ? empty_root() : entry_log_.root_at(committed_entries_),
      committed_entries_);
  entry_meta.salt = rng_.bytes32();
  entry_log_value_ = entry_meta.value;
  entry_log_salt_ = entry_meta.salt;
  updates.push_back(entry_meta);

  PendingUpdate sum_meta;
  sum_meta.key = sum_tree_map_key();
  sum_meta.value = encode_root_and_size(sum_tree_.root_digest(), sum_tree_.size());
  sum_meta.salt = rng_.bytes32();
  updates.push_back(sum_meta);

  const std::uint64_t epoch = state_.next_epoch();
  for (const PendingUpdate& u : updates) update_history_.emplace_back(epoch, u);
  return state_.commit_epoch(updates, keys_.priv, epoch);
}

SignedTreeRoot QueryService::replay_epoch(std::span<const PendingUpdate> updates) {
  std::lock_guard<std::mutex> lock(mu_);
  for (const PendingUpdate& u : updates) {
    if (u.key == entry_log_map_key()) {
      if (u.value.size() != 40) throw IntegrityError("bad entry-log meta value");
      ByteReader r(ByteSpan(u.value.data(), u.value.size()));
      (void)r.digest();
      committed_entries_ = r.u64();
      entry_log_value_ = u.value;
      entry_log_salt_ = u.salt;
    }
  }
  if (committed_entries_ > entry_log_.size()) {
    throw IntegrityError("recorded epoch references entries beyond the journal");
  }
  rebuild_sum_tree();
  const std::uint64_t epoch = state_.next_epoch();
  for (const PendingUpdate& u : updates) update_history_.emplace_back(epoch, u);
  return state_.commit_epoch(updates, keys_.priv, epoch);
}

void QueryService::replay_query_record(ByteSpan record_bytes) {
  std::lock_guard<std::mutex> lock(mu_);
  query_log_.append(record_bytes);
  query_records_.push_back(QueryRecord::decode(record_bytes));
}

std::optional<SignedTreeRoot> QueryService::current_str() const {
  if (state_.strs().empty()) return std::nullopt;
  return state_.strs().back();
}

SignedTreeHead QueryService::query_log_head() const {
  return sign_tree_head(query_log_, query_log_.size(), keys_.priv);
}

std::uint64_t QueryService::log_request(const std::string& principal_id,
                                        const std::string& descriptor, bool served,
                                        const std::string& reason,
                                        const Rational& charged) {
  QueryRecord record;
  record.principal_id = principal_id;
  record.descriptor = descriptor;
  record.epoch = state_.strs().size();
  record.served = served;
  record.reason = reason;
  record.budget_charged = charged;
  const Bytes bytes = record.encode();
  const std::uint64_t index =
      query_log_.append(ByteSpan(bytes.data(), bytes.size()));
  query_records_.push_back(std::move(record));
  return index;
}

QueryAnswer QueryService::answer_aggregate(const QueryRequest& request,
                                           const Principal& p, bool noised,
                                           Denial* denial, Rational* charged) {
  QueryAnswer answer;
  answer.kind = request.kind;
  const KeyRange range{request.from, request.to};
  auto [agg, proof] = sum_tree_.query_range(range);
  if (!noised) {
    answer.aggregate = agg;
    answer.proof = std::move(proof);
    return answer;
  }

  // DP path: only additive aggregates are answerable with bounded
  // sensitivity; the ledger is charged before any noise is drawn.
  if (request.kind != QueryKind::aggregate_sum &&
      request.kind != QueryKind::aggregate_count &&
      request.kind != QueryKind::aggregate_avg) {
    *denial = Denial{"dp-unsupported-kind", false, {}};
    return answer;
  }
  const Rational eps = config_.policy.dp_epsilon;
  const BudgetLedger::ChargeResult charge = ledger_.charge(p.id, eps);
  if (!charge.accepted) {
    *denial = Denial{"budget-exhausted", true, charge.remaining};
    return answer;
  }
  *charged = eps;
  answer.noisy = true;
  const double eps_each = eps.to_double() / 2.0;
  const std::uint64_t s1 = mix_seed(config_.rng_seed, 0xd0 + 2 * dp_counter_);
  const std::uint64_t s2 = mix_seed(config_.rng_seed, 0xd1 + 2 * dp_counter_);
  ++dp_counter_;
  switch (request.kind) {
    case QueryKind::aggregate_sum:
      answer.noisy_sum = dp_answer(static_cast<double>(agg.sum),
                                   config_.policy.sum_sensitivity,
                                   eps.to_double(), s1);
      break;
    case QueryKind::aggregate_count:
      answer.noisy_count =
          dp_answer(static_cast<double>(agg.count), 1.0, eps.to_double(), s1);
      break;
    case QueryKind::aggregate_avg:
      // avg is released as a (sum, count) pair; the budget is split across
      // the two noised components.
      answer.noisy_sum = dp_answer(static_cast<double>(agg.sum),
                                   config_.policy.sum_sensitivity, eps_each, s1);
      answer.noisy_count =
          dp_answer(static_cast<double>(agg.count), 1.0, eps_each, s2);
      break;
    default:
      break;
  }
  return answer;
}

QueryOutcome QueryService::submit_query(const QueryRequest& request) {
  std::lock_guard<std::mutex> lock(mu_);
  QueryOutcome outcome;
  std::string descriptor = std::string(query_kind_name(request.kind));
  if (is_aggregate_kind(request.kind) || request.kind == QueryKind::quantile) {
    descriptor += " [" + hex_encode(ByteSpan(request.from.data(), request.from.size())) +
                  "," + hex_encode(ByteSpan(request.to.data(), request.to.size())) + "]";
    if (request.kind == QueryKind::quantile) descriptor += " q=" + request.q.str();
    if (request.dp) descriptor += " dp";
  }

  auto deny = [&](const std::string& reason, bool budget, Rational remaining) {
    outcome.denial = Denial{reason, budget, remaining};
    outcome.audit_index =
        log_request(request.principal_id, descriptor, false, reason, Rational{});
    outcome.audit_head = query_log_head();
    return outcome;
  };

  const Principal* p = find_principal(request.principal_id);
  if (p == nullptr) return deny("unknown-principal", false, {});

  const Bytes body = request.signed_portion();
  if (!verify_sig(p->key, ByteSpan(body.data(), body.size()), request.signature)) {
    return deny("bad-signature", false, {});
  }

  const Authorization auth = authorize(config_.policy, *p, request.kind);
  if (!auth.allowed) return deny(auth.reason, false, {});

  if (state_.strs().empty()) return deny("no-epoch-committed", false, {});

  if (request.kind == QueryKind::individual_evidence) {
    return deny("use-evidence-endpoint", false, {});
  }

  QueryAnswer answer;
  Rational charged;
  if (request.kind == QueryKind::raw_entries) {
    answer.kind = request.kind;
    for (std::uint64_t i = 0; i < committed_entries_; ++i) {
      answer.raw.push_back(entry_records_[i].entry);
    }
  } else if (request.kind == QueryKind::quantile) {
    if (sum_tree_.size() == 0) return deny("empty-dataset", false, {});
    if (request.q.is_negative() || Rational(1, 1) < request.q) {
      return deny("malformed-query", false, {});
    }
    answer.kind = request.kind;
    const SumTree::QuantileResult qr = sum_tree_.quantile(request.q);
    answer.quantile_key = qr.key;
    answer.quantile_value = qr.value;
    answer.rank = qr.rank;
    answer.proof = qr.proof;
  } else {
    if (request.to < request.from) return deny("malformed-query", false, {});
    const auto r = static_cast<std::size_t>(p->role);
    const auto c = static_cast<std::size_t>(request.kind);
    const bool noised = request.dp || config_.policy.dp_required[r][c];
    Denial denial;
    answer = answer_aggregate(request, *p, noised, &denial, &charged);
    if (!denial.reason.empty()) {
      return deny(denial.reason, denial.budget_refusal, denial.remaining_budget);
    }
  }

  outcome.answer = std::move(answer);
  outcome.audit_index =
      log_request(request.principal_id, descriptor, true, "ok", charged);
  outcome.audit_head = query_log_head();
  return outcome;
}

Bytes QueryService::evidence_signed_portion(const std::string& principal_id) {
  ByteWriter w;
  w.u8(0x02);  // wire message type for evidence requests
  Bytes pid = to_bytes(principal_id);
  w.var16(ByteSpan(pid.data(), pid.size()));
  return w.take();
}

EvidenceOutcome QueryService::get_individual_evidence(const std::string& principal_id,
                                                      const Signature& request_sig) {
  std::lock_guard<std::mutex> lock(mu_);
  EvidenceOutcome outcome;
  const std::string descriptor = "evidence";

  auto deny = [&](const std::string& reason) {
    outcome.denial = Denial{reason, false, {}};
    outcome.audit_index =
        log_request(principal_id, descriptor, false, reason, Rational{});
    outcome.audit_head = query_log_head();
    return outcome;
  };

  const Principal* p = find_principal(principal_id);
  if (p == nullptr) return deny("unknown-principal");
  const Bytes body = evidence_signed_portion(principal_id);
  if (!verify_sig(p->key, ByteSpan(body.data(), body.size()), request_sig)) {
    return deny("bad-signature");
  }
  const Authorization auth =
      authorize(config_.policy, *p, QueryKind::individual_evidence);
  if (!auth.allowed) return deny(auth.reason);
  if (state_.strs().empty()) return deny("no-epoch-committed");

  const SignedTreeRoot str = state_.strs().back();
  const LookupProof link =
      state_.prove_binding(ByteSpan(entry_log_map_key().data(),
                                    entry_log_map_key().size()));
  for (std::uint64_t i = 0; i < committed_entries_; ++i) {
    if (entry_records_[i].entry.subject_id != p->subject_id) continue;
    EvidenceBundle bundle;
    bundle.entry = entry_records_[i].entry;
    bundle.entry_index = i;
    bundle.entry_log_size = committed_entries_;
    bundle.inclusion = entry_log_.prove_inclusion(i, committed_entries_);
    bundle.link = link;
    bundle.link_value = entry_log_value_;
    bundle.link_salt = entry_log_salt_;
    bundle.str = str;
    outcome.bundles.push_back(std::move(bundle));
  }
  outcome.audit_index = log_request(principal_id, descriptor, true, "ok", Rational{});
  outcome.audit_head = query_log_head();
  return outcome;
}

}  // namespace tlog
