#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tlog/crypto.hpp"
#include "tlog/log_backed_map.hpp"

namespace tlog {

// Append-only record journal.
//
// File layout (bit-exact): version byte 0x01, then per record
//   index u64 || length u32 || bytes || digest 32
// with digest = H(0x05 || index || bytes). Records are never rewritten.
// Opening recovers from a torn tail by truncating trailing records that are
// structurally incomplete or fail their digest; anything earlier that fails
// its digest is surfaced as an IntegrityError at read time, naming the index.
class LeafJournal {
 public:
  static LeafJournal create(const std::filesystem::path& path);
  static LeafJournal open(const std::filesystem::path& path);

  std::uint64_t append(ByteSpan record);
  Bytes read(std::uint64_t index) const;  // throws IntegrityError / out_of_range
  std::uint64_t size() const { return offsets_.size(); }
  // Bytes dropped while recovering a torn tail at open time.
  std::uint64_t truncated_bytes() const { return truncated_; }
  const std::filesystem::path& path() const { return path_; }

  static Digest record_digest(std::uint64_t index, ByteSpan record);

 private:
  LeafJournal() = default;

  std::filesystem::path path_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> offsets_;  // offset, length
  std::uint64_t end_offset_ = 1;
  std::uint64_t truncated_ = 0;
};

// Whole-state snapshot of a log-backed map. Layout: version byte 0x01 ||
// EpochState encoding || H(0x06 || body). Restore is all-or-nothing: any
// truncation or digest mismatch refuses the snapshot.
void save_snapshot(const EpochState& state, const std::filesystem::path& path);
EpochState load_snapshot(const std::filesystem::path& path, IndexConfig index_config);

Bytes encode_snapshot(const EpochState& state);
EpochState decode_snapshot(ByteSpan data, IndexConfig index_config);

}  // namespace tlog
