#include "tlog/storage.hpp"

#include <cstdio>
#include <fstream>

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

namespace {

constexpr std::uint8_t kJournalVersion = 0x01;
constexpr std::uint8_t kSnapshotVersion = 0x01;
constexpr std::size_t kRecordHeader = 8 + 4;
constexpr std::size_t kRecordTrailer = 32;

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open file: " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

void write_file_atomic(const std::filesystem::path& path, ByteSpan data) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write file: " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw IntegrityError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t be64_at(const Bytes& b, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | b[pos + i];
  return v;
}

std::uint32_t be32_at(const Bytes& b, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | b[pos + i];
  return v;
}

}  // namespace

Digest LeafJournal::record_digest(std::uint64_t index, ByteSpan record) {
  ByteWriter w;
  w.u8(kTagJournal);
  w.u64(index);
  Digest prefix = sha256_concat({ByteSpan(w.bytes().data(), w.bytes().size()), record});
  return prefix;
}

LeafJournal LeafJournal::create(const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot create journal: " + path.string());
    const char version = static_cast<char>(kJournalVersion);
    out.write(&version, 1);
  }
  LeafJournal j;
  j.path_ = path;
  j.end_offset_ = 1;
  return j;
}

LeafJournal LeafJournal::open(const std::filesystem::path& path) {
  Bytes data = read_file(path);
  if (data.empty() || data[0] != kJournalVersion) {
    throw IntegrityError("journal missing version byte: " + path.string());
  }
  LeafJournal j;
  j.path_ = path;

  // Structural scan by frame length. A record that does not fit is a torn
  // tail; byte flips inside complete records are caught at read time so a
  // mid-file corruption does not silently discard later records.
  std::size_t pos = 1;
  while (pos < data.size()) {
    if (data.size() - pos < kRecordHeader) break;
    const std::uint32_t length = be32_at(data, pos + 8);
    if (data.size() - pos - kRecordHeader < static_cast<std::size_t>(length) + kRecordTrailer) {
      break;
    }
    j.offsets_.emplace_back(pos, length);
    pos += kRecordHeader + length + kRecordTrailer;
  }
  std::uint64_t keep = pos;

  // A torn write can only affect the final record: verify it and drop it if
  // its digest does not bind.
  if (!j.offsets_.empty()) {
    const auto [off, len] = j.offsets_.back();
    const ByteSpan body(data.data() + off + kRecordHeader, len);
    const Digest expect = record_digest(j.offsets_.size() - 1, body);
    Digest stored;
    std::copy(data.begin() + off + kRecordHeader + len,
              data.begin() + off + kRecordHeader + len + kRecordTrailer,
              stored.bytes.begin());
    if (stored != expect) {
      keep = off;
      j.offsets_.pop_back();
    }
  }

  if (keep < data.size()) {
    j.truncated_ = data.size() - keep;
    std::filesystem::resize_file(path, keep);
  }
  j.end_offset_ = keep;
  return j;
}

std::uint64_t LeafJournal::append(ByteSpan record) {
  const std::uint64_t index = offsets_.size();
  ByteWriter w;
  w.u64(index);
  w.u32(static_cast<std::uint32_t>(record.size()));
  w.raw(record);
  w.digest(record_digest(index, record));
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IntegrityError("cannot append to journal: " + path_.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  out.flush();
  if (!out) throw IntegrityError("short journal append: " + path_.string());
  offsets_.emplace_back(end_offset_, static_cast<std::uint32_t>(record.size()));
  end_offset_ += w.bytes().size();
  return index;
}

Bytes LeafJournal::read(std::uint64_t index) const {
  if (index >= offsets_.size()) throw std::out_of_range("journal index out of range");
  const auto [off, len] = offsets_[index];
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IntegrityError("cannot open journal: " + path_.string());
  in.seekg(static_cast<std::streamoff>(off));
  Bytes frame(kRecordHeader + len + kRecordTrailer);
  in.read(reinterpret_cast<char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
  if (!in) throw IntegrityError("journal truncated under reader: " + path_.string());
  if (be64_at(frame, 0) != index || be32_at(frame, 8) != len) {
    throw IntegrityError("journal record " + std::to_string(index) + " header corrupt");
  }
  const ByteSpan body(frame.data() + kRecordHeader, len);
  Digest stored;
  std::copy(frame.begin() + kRecordHeader + len, frame.end(), stored.bytes.begin());
  if (stored != record_digest(index, body)) {
    throw IntegrityError("journal record " + std::to_string(index) +
                         " failed its digest check");
  }
  return Bytes(body.begin(), body.end());
}

Bytes encode_snapshot(const EpochState& state) {
  ByteWriter w;
  w.u8(kSnapshotVersion);
  Bytes body = state.encode();
  w.raw(ByteSpan(body.data(), body.size()));
  const std::uint8_t tag = kTagSnapshot;
  w.digest(sha256_concat({ByteSpan(&tag, 1), ByteSpan(body.data(), body.size())}));
  return w.take();
}

EpochState decode_snapshot(ByteSpan data, IndexConfig index_config) {
  if (data.size() < 1 + 32) throw IntegrityError("snapshot truncated");
  if (data[0] != kSnapshotVersion) throw IntegrityError("snapshot version unknown");
  const ByteSpan body(data.data() + 1, data.size() - 1 - 32);
  const ByteSpan stored(data.data() + data.size() - 32, 32);
  const std::uint8_t tag = kTagSnapshot;
  const Digest expect = sha256_concat({ByteSpan(&tag, 1), body});
  if (!std::equal(stored.begin(), stored.end(), expect.bytes.begin())) {
    throw IntegrityError("snapshot integrity digest mismatch");
  }
  try {
    return EpochState::decode(body, index_config);
  } catch (const FormatError& e) {
    throw IntegrityError(std::string("snapshot undecodable: ") + e.what());
  }
}

void save_snapshot(const EpochState& state, const std::filesystem::path& path) {
  Bytes data = encode_snapshot(state);
  write_file_atomic(path, ByteSpan(data.data(), data.size()));
}

EpochState load_snapshot(const std::filesystem::path& path, IndexConfig index_config) {
  Bytes data = read_file(path);
  return decode_snapshot(ByteSpan(data.data(), data.size()), index_config);
}

}  // namespace tlog
