#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "tlog/release_query.hpp"
#include "tlog/storage.hpp"

namespace tlog::cli {

// On-disk layout of a tlog data directory:
//   keys/operator.seed       hex signing seed
//   keys/auditor.box.seed    hex box seed for auditor-only envelopes
//   keys/<principal>.seed    per-principal request-signing seeds
//   principals.cfg           one principal per line: id role subject pub-hex
//   policy.cfg               budget/dp knobs, key=value
//   entries.journal          sanitised EntryRecords (append-only)
//   updates.journal          committed PendingUpdates, epoch-tagged
//   queries.journal          QueryRecords (append-only)
//   staged.bin               updates staged for the next epoch (scratch)
//   aux.cfg                  rng position, dp counter, budget balances
// State is reconstructed by replaying the journals; every salt and envelope
// is recorded, so replayed STR chains are byte-identical to the originals.
class DataDir {
 public:
  static void init(const std::filesystem::path& dir,
                   const std::array<std::uint8_t, 32>& operator_seed,
                   const PolicyTable& policy, std::uint64_t rng_seed);
  static DataDir open(const std::filesystem::path& dir);  // throws ConfigError

  QueryService& service() { return *service_; }
  const std::filesystem::path& dir() const { return dir_; }

  struct PrincipalKeys {
    Principal principal;
    KeyPair keys;
  };
  // Generates and persists a principal with a fresh deterministic key.
  PrincipalKeys add_principal(const std::string& id, Role role,
                              const std::string& subject_id);
  std::optional<PrincipalKeys> load_principal(const std::string& id) const;
  std::optional<PrincipalKeys> find_subject_principal(const std::string& subject_id) const;
  BoxKeyPair auditor_box() const;

  std::uint64_t ingest(ByteSpan payload, const std::string& subject_id,
                       Visibility visibility, std::optional<std::int64_t> metric);
  void stage_update(ByteSpan key, ByteSpan value);
  SignedTreeRoot commit_epoch();
  // Persist budget/rng/dp counters after read-write query commands.
  void save_aux();
  void append_query_journal();

 private:
  DataDir() = default;
  void load_principals();
  void replay();

  std::filesystem::path dir_;
  std::unique_ptr<QueryService> service_;
  std::unique_ptr<LeafJournal> entries_;
  std::unique_ptr<LeafJournal> updates_;
  std::unique_ptr<LeafJournal> queries_;
  std::uint64_t replayed_queries_ = 0;
};

// Exclusive advisory lock on <dir>/lock, held for the lifetime of the guard.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace tlog::cli
