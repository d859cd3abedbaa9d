#include "data_dir.hpp"

#include <sys/file.h>
#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <map>
#include <sstream>

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog::cli {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

PolicyTable policy_from_kv(const std::map<std::string, std::string>& kv) {
  PolicyTable policy = PolicyTable::defaults();
  if (auto it = kv.find("budget_mode"); it != kv.end()) {
    if (it->second == "shared_pool") {
      policy.budget_mode = BudgetLedger::Mode::shared_pool;
    } else if (it->second == "per_principal") {
      policy.budget_mode = BudgetLedger::Mode::per_principal;
    } else {
      throw ConfigError("unknown budget_mode: " + it->second);
    }
  }
  if (auto it = kv.find("budget_total"); it != kv.end()) {
    policy.budget_total = Rational::from_decimal(it->second);
  }
  if (auto it = kv.find("dp_epsilon"); it != kv.end()) {
    policy.dp_epsilon = Rational::from_decimal(it->second);
  }
  if (auto it = kv.find("sum_sensitivity"); it != kv.end()) {
    policy.sum_sensitivity = Rational::from_decimal(it->second).to_double();
  }
  return policy;
}

std::array<std::uint8_t, 32> seed_from_hex_file(const std::filesystem::path& path) {
  std::string text = read_text(path);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) {
    text.pop_back();
  }
  const Bytes raw = hex_decode(text);
  if (raw.size() != 32) throw ConfigError("seed file must hold 32 hex bytes");
  std::array<std::uint8_t, 32> seed{};
  std::copy(raw.begin(), raw.end(), seed.begin());
  return seed;
}

}  // namespace

DirLock::DirLock(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0600);
  if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) {
    throw ConfigError("cannot lock data directory " + dir.string());
  }
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

void DataDir::init(const std::filesystem::path& dir,
                   const std::array<std::uint8_t, 32>& operator_seed,
                   const PolicyTable& policy, std::uint64_t rng_seed) {
  std::filesystem::create_directories(dir / "keys");
  write_text(dir / "keys" / "operator.seed",
             hex_encode(ByteSpan(operator_seed.data(), operator_seed.size())) + "\n");
  // Auditor envelope key derives from the operator seed; a deployment would
  // provision it separately.
  Rng rng(mix_seed(rng_seed, 0xb0c5));
  const auto box_seed = rng.bytes32();
  write_text(dir / "keys" / "auditor.box.seed",
             hex_encode(ByteSpan(box_seed.data(), box_seed.size())) + "\n");

  std::ostringstream policy_text;
  policy_text << "budget_mode="
              << (policy.budget_mode == BudgetLedger::Mode::shared_pool
                      ? "shared_pool"
                      : "per_principal")
              << "\n";
  policy_text << "budget_total=" << policy.budget_total.str() << "\n";
  policy_text << "dp_epsilon=" << policy.dp_epsilon.str() << "\n";
  policy_text << "sum_sensitivity=" << policy.sum_sensitivity << "\n";
  policy_text << "rng_seed=" << rng_seed << "\n";
  write_text(dir / "policy.cfg", policy_text.str());
  write_text(dir / "principals.cfg", "");
  write_text(dir / "aux.cfg", "rng_draws=0\ndp_counter=0\n");
  LeafJournal::create(dir / "entries.journal");
  LeafJournal::create(dir / "updates.journal");
  LeafJournal::create(dir / "queries.journal");
  write_text(dir / "staged.bin", "");
}

DataDir DataDir::open(const std::filesystem::path& dir) {
  DataDir d;
  d.dir_ = dir;
  if (!std::filesystem::exists(dir / "policy.cfg")) {
    throw ConfigError("not a tlog data directory (run init first): " + dir.string());
  }
  const auto policy_kv = parse_kv(read_text(dir / "policy.cfg"));
  ServiceConfig cfg;
  cfg.policy = policy_from_kv(policy_kv);
  cfg.operator_seed = seed_from_hex_file(dir / "keys" / "operator.seed");
  if (auto it = policy_kv.find("rng_seed"); it != policy_kv.end()) {
    cfg.rng_seed = std::stoull(it->second);
  }
  const auto box_seed = seed_from_hex_file(dir / "keys" / "auditor.box.seed");
  cfg.auditor_box = box_keygen(ByteSpan(box_seed.data(), box_seed.size())).pub;
  d.service_ = std::make_unique<QueryService>(cfg);

  d.entries_ = std::make_unique<LeafJournal>(LeafJournal::open(dir / "entries.journal"));
  d.updates_ = std::make_unique<LeafJournal>(LeafJournal::open(dir / "updates.journal"));
  d.queries_ = std::make_unique<LeafJournal>(LeafJournal::open(dir / "queries.journal"));

  d.load_principals();
  d.replay();
  return d;
}

void DataDir::load_principals() {
  if (!std::filesystem::exists(dir_ / "principals.cfg")) return;
  std::istringstream in(read_text(dir_ / "principals.cfg"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string id, role_str, subject, pub_hex;
    fields >> id >> role_str >> subject >> pub_hex;
    const auto role = role_from_name(role_str);
    if (!role || pub_hex.empty()) {
      throw ConfigError("bad principals.cfg line: " + line);
    }
    Principal p;
    p.id = id;
    p.role = *role;
    p.subject_id = subject == "-" ? "" : subject;
    const Bytes raw = hex_decode(pub_hex);
    if (raw.size() != 32) throw ConfigError("bad principal key in principals.cfg");
    std::copy(raw.begin(), raw.end(), p.key.bytes.begin());
    service_->register_principal(p);
    // Subjects reuse their signing seed as box seed for subject-only
    // envelopes; re-register it on load.
    const std::filesystem::path seed_path = dir_ / "keys" / (id + ".seed");
    if (p.role == Role::subject && !p.subject_id.empty() &&
        std::filesystem::exists(seed_path)) {
      const auto seed = seed_from_hex_file(seed_path);
      service_->register_subject_box(
          p.subject_id, box_keygen(ByteSpan(seed.data(), seed.size())).pub);
    }
  }
}

void DataDir::replay() {
  // Entries first (their order defines entry-log indices), then committed
  // epochs, then the query audit log, then counters.
  for (std::uint64_t i = 0; i < entries_->size(); ++i) {
    const Bytes bytes = entries_->read(i);
    service_->ingest_record(EntryRecord::decode(ByteSpan(bytes.data(), bytes.size())));
  }
  std::vector<PendingUpdate> epoch_updates;
  std::uint64_t current_epoch = 0;
  auto flush = [&]() {
    if (!epoch_updates.empty()) {
      service_->replay_epoch(epoch_updates);
      epoch_updates.clear();
    }
  };
  for (std::uint64_t i = 0; i < updates_->size(); ++i) {
    const Bytes bytes = updates_->read(i);
    ByteReader r(ByteSpan(bytes.data(), bytes.size()));
    const std::uint64_t epoch = r.u64();
    const Bytes update_bytes = r.rest();
    if (epoch != current_epoch) {
      flush();
      current_epoch = epoch;
    }
    epoch_updates.push_back(
        PendingUpdate::decode(ByteSpan(update_bytes.data(), update_bytes.size())));
  }
  flush();
  for (std::uint64_t i = 0; i < queries_->size(); ++i) {
    const Bytes bytes = queries_->read(i);
    service_->replay_query_record(ByteSpan(bytes.data(), bytes.size()));
  }
  replayed_queries_ = queries_->size();

  const auto aux = parse_kv(read_text(dir_ / "aux.cfg"));
  if (auto it = aux.find("dp_counter"); it != aux.end()) {
    service_->restore_dp_counter(std::stoull(it->second));
  }
  if (auto it = aux.find("rng_draws"); it != aux.end()) {
    const std::uint64_t target = std::stoull(it->second);
    if (target > service_->rng_draws()) {
      service_->fast_forward_rng(target - service_->rng_draws());
    }
  }
  for (const auto& [key, value] : aux) {
    if (key.rfind("budget.", 0) == 0) {
      const std::size_t slash = value.find('/');
      const Rational balance =
          slash == std::string::npos
              ? Rational(std::stoll(value), 1)
              : Rational(std::stoll(value.substr(0, slash)),
                         std::stoll(value.substr(slash + 1)));
      const std::string principal = key.substr(7);
      if (principal == "__pool__") {
        service_->ledger().restore_pool(balance);
      } else {
        service_->ledger().restore_balance(principal, balance);
      }
    }
  }
}

void DataDir::save_aux() {
  std::ostringstream out;
  out << "rng_draws=" << service_->rng_draws() << "\n";
  out << "dp_counter=" << service_->dp_counter() << "\n";
  if (service_->ledger().mode() == BudgetLedger::Mode::shared_pool) {
    out << "budget.__pool__=" << service_->ledger().pool_balance().str() << "\n";
  }
  for (const auto& [principal, balance] : service_->ledger().balances()) {
    out << "budget." << principal << "=" << balance.str() << "\n";
  }
  write_text(dir_ / "aux.cfg", out.str());
}

void DataDir::append_query_journal() {
  const auto& records = service_->query_records();
  for (std::uint64_t i = replayed_queries_; i < records.size(); ++i) {
    const Bytes bytes = records[i].encode();
    queries_->append(ByteSpan(bytes.data(), bytes.size()));
  }
  replayed_queries_ = records.size();
}

DataDir::PrincipalKeys DataDir::add_principal(const std::string& id, Role role,
                                              const std::string& subject_id) {
  if (id.empty() || id.find_first_of(" \t\n") != std::string::npos) {
    throw InputError("principal id must be a single token");
  }
  Rng rng(mix_seed(0x9e37, static_cast<std::uint64_t>(std::hash<std::string>{}(id))));
  const auto seed = rng.bytes32();
  write_text(dir_ / "keys" / (id + ".seed"),
             hex_encode(ByteSpan(seed.data(), seed.size())) + "\n");
  PrincipalKeys pk;
  pk.keys = keygen(ByteSpan(seed.data(), seed.size()));
  pk.principal.id = id;
  pk.principal.role = role;
  pk.principal.subject_id = subject_id;
  pk.principal.key = pk.keys.pub;
  service_->register_principal(pk.principal);
  if (role == Role::subject && !subject_id.empty()) {
    const BoxKeyPair box = box_keygen(ByteSpan(seed.data(), seed.size()));
    service_->register_subject_box(subject_id, box.pub);
  }

  std::ostringstream line;
  line << id << " " << role_name(role) << " "
       << (subject_id.empty() ? "-" : subject_id) << " "
       << hex_encode(pk.keys.pub.span()) << "\n";
  std::ofstream out(dir_ / "principals.cfg", std::ios::app);
  if (!out) throw ConfigError("cannot append principals.cfg");
  out << line.str();
  return pk;
}

std::optional<DataDir::PrincipalKeys> DataDir::load_principal(
    const std::string& id) const {
  const Principal* p = service_->find_principal(id);
  const std::filesystem::path seed_path = dir_ / "keys" / (id + ".seed");
  if (p == nullptr || !std::filesystem::exists(seed_path)) return std::nullopt;
  PrincipalKeys pk;
  pk.principal = *p;
  const auto seed = seed_from_hex_file(seed_path);
  pk.keys = keygen(ByteSpan(seed.data(), seed.size()));
  return pk;
}

std::optional<DataDir::PrincipalKeys> DataDir::find_subject_principal(
    const std::string& subject_id) const {
  std::istringstream in(read_text(dir_ / "principals.cfg"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, role_str, subject;
    fields >> id >> role_str >> subject;
    if (role_str == "subject" && subject == subject_id) return load_principal(id);
  }
  return std::nullopt;
}

BoxKeyPair DataDir::auditor_box() const {
  const auto seed = seed_from_hex_file(dir_ / "keys" / "auditor.box.seed");
  return box_keygen(ByteSpan(seed.data(), seed.size()));
}

std::uint64_t DataDir::ingest(ByteSpan payload, const std::string& subject_id,
                              Visibility visibility,
                              std::optional<std::int64_t> metric) {
  const std::uint64_t index =
      service_->ingest(payload, subject_id, visibility, metric);
  const EntryRecord& record = service_->entry_records().back();
  const Bytes bytes = record.encode();
  entries_->append(ByteSpan(bytes.data(), bytes.size()));
  save_aux();  // rng advanced
  return index;
}

void DataDir::stage_update(ByteSpan key, ByteSpan value) {
  // Staged updates live in a scratch file until the next commit; they are
  // fed to the service only then, so reopening mid-stage loses nothing.
  PendingUpdate u;
  u.key = Bytes(key.begin(), key.end());
  u.value = Bytes(value.begin(), value.end());
  u.salt = service_->draw_salt();

  ByteWriter w;
  Bytes staged;
  if (std::filesystem::exists(dir_ / "staged.bin")) {
    std::ifstream in(dir_ / "staged.bin", std::ios::binary);
    staged.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  w.raw(ByteSpan(staged.data(), staged.size()));
  Bytes enc = u.encode();
  w.var32(ByteSpan(enc.data(), enc.size()));
  std::ofstream out(dir_ / "staged.bin", std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  save_aux();
}

SignedTreeRoot DataDir::commit_epoch() {
  // Load staged updates from scratch (session state may be fresh).
  if (std::filesystem::exists(dir_ / "staged.bin")) {
    std::ifstream in(dir_ / "staged.bin", std::ios::binary);
    Bytes staged((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!staged.empty()) {
      ByteReader r(ByteSpan(staged.data(), staged.size()));
      while (!r.done()) {
        Bytes enc = r.var32();
        service_->stage_update(PendingUpdate::decode(ByteSpan(enc.data(), enc.size())));
      }
    }
  }

  const SignedTreeRoot str = service_->commit_epoch();
  const std::uint64_t epoch = str.epoch;
  for (const auto& [e, update] : service_->update_history()) {
    if (e != epoch) continue;
    ByteWriter w;
    w.u64(e);
    Bytes enc = update.encode();
    w.raw(ByteSpan(enc.data(), enc.size()));
    updates_->append(ByteSpan(w.bytes().data(), w.bytes().size()));
  }
  write_text(dir_ / "staged.bin", "");
  save_aux();
  return str;
}

}  // namespace tlog::cli
