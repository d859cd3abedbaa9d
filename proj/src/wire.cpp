#include "tlog/wire.hpp"

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

namespace wire {

namespace {

constexpr std::size_t kMaxFrame = 64 * 1024 * 1024;

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::write(fd, data, len);
    if (n <= 0) throw IntegrityError("socket write failed");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

void read_all(int fd, std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::read(fd, data, len);
    if (n <= 0) throw IntegrityError("socket closed mid-frame");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

std::uint64_t double_bits(double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  return bits;
}

double bits_double(std::uint64_t bits) {
  double v = 0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_frame(int fd, const Message& message) {
  if (message.body.size() + 1 > kMaxFrame) throw FormatError("frame too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(message.body.size() + 1));
  w.u8(message.type);
  w.raw(ByteSpan(message.body.data(), message.body.size()));
  write_all(fd, w.bytes().data(), w.bytes().size());
}

Message read_frame(int fd) {
  std::uint8_t header[4];
  read_all(fd, header, sizeof header);
  const std::uint32_t len = (std::uint32_t(header[0]) << 24) |
                            (std::uint32_t(header[1]) << 16) |
                            (std::uint32_t(header[2]) << 8) | header[3];
  if (len == 0 || len > kMaxFrame) throw FormatError("bad frame length");
  Message m;
  Bytes payload(len);
  read_all(fd, payload.data(), payload.size());
  m.type = payload[0];
  m.body.assign(payload.begin() + 1, payload.end());
  return m;
}

Bytes encode_query_request(const QueryRequest& request) {
  // type byte lives in the frame; the body restates the signed fields in the
  // same order so the server can rebuild the signed portion exactly.
  ByteWriter w;
  Bytes pid = to_bytes(request.principal_id);
  w.var16(ByteSpan(pid.data(), pid.size()));
  w.u8(static_cast<std::uint8_t>(request.kind));
  w.u8(request.dp ? 1 : 0);
  w.var16(ByteSpan(request.from.data(), request.from.size()));
  w.var16(ByteSpan(request.to.data(), request.to.size()));
  w.i64(request.q.num);
  w.i64(request.q.den);
  w.raw(request.signature.span());
  return w.take();
}

QueryRequest decode_query_request(ByteSpan body) {
  ByteReader r(body);
  QueryRequest q;
  q.principal_id = to_string(r.var16());
  const std::uint8_t kind = r.u8();
  if (kind >= PolicyTable::kKinds) throw FormatError("unknown query kind");
  q.kind = static_cast<QueryKind>(kind);
  q.dp = r.u8() != 0;
  q.from = r.var16();
  q.to = r.var16();
  const std::int64_t num = r.i64();
  const std::int64_t den = r.i64();
  q.q = Rational(num, den);
  const Digest lo = r.digest();
  const Digest hi = r.digest();
  std::copy(lo.bytes.begin(), lo.bytes.end(), q.signature.bytes.begin());
  std::copy(hi.bytes.begin(), hi.bytes.end(), q.signature.bytes.begin() + 32);
  r.expect_done();
  return q;
}

Bytes encode_evidence_request(const std::string& principal_id, const Signature& sig) {
  ByteWriter w;
  Bytes pid = to_bytes(principal_id);
  w.var16(ByteSpan(pid.data(), pid.size()));
  w.raw(sig.span());
  return w.take();
}

Bytes encode_query_answer(const QueryAnswer& answer, std::uint64_t audit_index) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(answer.kind));
  std::uint8_t flags = 0;
  if (answer.noisy) flags |= 0x01;
  if (answer.proof.has_value()) flags |= 0x02;
  w.u8(flags);
  w.i64(answer.aggregate.sum);
  w.u64(answer.aggregate.count);
  w.i64(answer.aggregate.min);
  w.i64(answer.aggregate.max);
  w.u64(double_bits(answer.noisy_sum));
  w.u64(double_bits(answer.noisy_count));
  if (answer.proof.has_value()) {
    Bytes proof = answer.proof->encode();
    w.var32(ByteSpan(proof.data(), proof.size()));
  }
  w.var16(ByteSpan(answer.quantile_key.data(), answer.quantile_key.size()));
  w.i64(answer.quantile_value);
  w.u64(answer.rank);
  w.u32(static_cast<std::uint32_t>(answer.raw.size()));
  for (const LogEntry& e : answer.raw) {
    Bytes enc = e.encode();
    w.var32(ByteSpan(enc.data(), enc.size()));
  }
  w.u64(audit_index);
  return w.take();
}

DecodedAnswer decode_query_answer(ByteSpan body) {
  ByteReader r(body);
  DecodedAnswer out;
  const std::uint8_t kind = r.u8();
  if (kind >= PolicyTable::kKinds) throw FormatError("unknown query kind");
  out.answer.kind = static_cast<QueryKind>(kind);
  const std::uint8_t flags = r.u8();
  out.answer.noisy = flags & 0x01;
  out.answer.aggregate.sum = r.i64();
  out.answer.aggregate.count = r.u64();
  out.answer.aggregate.min = r.i64();
  out.answer.aggregate.max = r.i64();
  out.answer.noisy_sum = bits_double(r.u64());
  out.answer.noisy_count = bits_double(r.u64());
  if (flags & 0x02) {
    Bytes proof = r.var32();
    out.answer.proof = AggregateProof::decode(ByteSpan(proof.data(), proof.size()));
  }
  out.answer.quantile_key = r.var16();
  out.answer.quantile_value = r.i64();
  out.answer.rank = r.u64();
  const std::uint32_t raw_count = r.u32();
  for (std::uint32_t i = 0; i < raw_count; ++i) {
    Bytes enc = r.var32();
    out.answer.raw.push_back(LogEntry::decode(ByteSpan(enc.data(), enc.size())));
  }
  out.audit_index = r.u64();
  r.expect_done();
  return out;
}

Bytes encode_denial(const Denial& denial, std::uint64_t audit_index) {
  ByteWriter w;
  Bytes reason = to_bytes(denial.reason);
  w.var16(ByteSpan(reason.data(), reason.size()));
  w.u8(denial.budget_refusal ? 1 : 0);
  w.i64(denial.remaining_budget.num);
  w.i64(denial.remaining_budget.den);
  w.u64(audit_index);
  return w.take();
}

DecodedDenial decode_denial(ByteSpan body) {
  ByteReader r(body);
  DecodedDenial out;
  out.denial.reason = to_string(r.var16());
  out.denial.budget_refusal = r.u8() != 0;
  const std::int64_t num = r.i64();
  const std::int64_t den = r.i64();
  out.denial.remaining_budget = Rational(num, den);
  out.audit_index = r.u64();
  r.expect_done();
  return out;
}

Bytes encode_bundles(const std::vector<EvidenceBundle>& bundles,
                     std::uint64_t audit_index) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(bundles.size()));
  for (const EvidenceBundle& b : bundles) {
    Bytes enc = b.encode();
    w.var32(ByteSpan(enc.data(), enc.size()));
  }
  w.u64(audit_index);
  return w.take();
}

std::pair<std::vector<EvidenceBundle>, std::uint64_t> decode_bundles(ByteSpan body) {
  ByteReader r(body);
  std::vector<EvidenceBundle> bundles;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    Bytes enc = r.var32();
    bundles.push_back(EvidenceBundle::decode(ByteSpan(enc.data(), enc.size())));
  }
  const std::uint64_t audit_index = r.u64();
  r.expect_done();
  return {std::move(bundles), audit_index};
}

}  // namespace wire

WireServer::WireServer(QueryService& service, std::filesystem::path socket_path)
    : service_(service), path_(std::move(socket_path)) {}

WireServer::~WireServer() {
  stop();
}

void WireServer::start() {
  std::filesystem::remove(path_);
  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw ConfigError("cannot create unix socket");
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string path = path_.string();
  if (path.size() + 1 > sizeof addr.sun_path) {
    throw ConfigError("socket path too long");
  }
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 8) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw ConfigError("cannot bind unix socket at " + path);
  }
  running_ = true;
  thread_ = std::thread([this] { serve_loop(); });
}

void WireServer::stop() {
  if (!running_.exchange(false)) {
    if (thread_.joinable()) thread_.join();
    return;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (thread_.joinable()) thread_.join();
  listen_fd_ = -1;
  std::filesystem::remove(path_);
}

void WireServer::serve_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    try {
      handle_connection(fd);
    } catch (const std::exception&) {
      // Malformed frame or dropped peer; the connection dies, the server
      // stays up.
    }
    ::close(fd);
  }
}

void WireServer::handle_connection(int fd) {
  for (;;) {
    wire::Message request;
    try {
      request = wire::read_frame(fd);
    } catch (const IntegrityError&) {
      return;  // client hung up
    }
    wire::Message response;
    try {
      switch (request.type) {
        case wire::kMsgQuery: {
          const QueryRequest q = wire::decode_query_request(
              ByteSpan(request.body.data(), request.body.size()));
          const QueryOutcome outcome = service_.submit_query(q);
          if (outcome.answer.has_value()) {
            response.type = wire::kMsgQueryOk;
            response.body =
                wire::encode_query_answer(*outcome.answer, outcome.audit_index);
          } else {
            response.type = wire::kMsgDenied;
            response.body = wire::encode_denial(*outcome.denial, outcome.audit_index);
          }
          break;
        }
        case wire::kMsgEvidence: {
          ByteReader r(ByteSpan(request.body.data(), request.body.size()));
          const std::string principal_id = to_string(r.var16());
          const Digest lo = r.digest();
          const Digest hi = r.digest();
          Signature sig;
          std::copy(lo.bytes.begin(), lo.bytes.end(), sig.bytes.begin());
          std::copy(hi.bytes.begin(), hi.bytes.end(), sig.bytes.begin() + 32);
          r.expect_done();
          const EvidenceOutcome outcome =
              service_.get_individual_evidence(principal_id, sig);
          if (!outcome.denial.has_value()) {
            response.type = wire::kMsgEvidenceOk;
            response.body = wire::encode_bundles(outcome.bundles, outcome.audit_index);
          } else {
            response.type = wire::kMsgDenied;
            response.body = wire::encode_denial(*outcome.denial, outcome.audit_index);
          }
          break;
        }
        case wire::kMsgGetStr: {
          const auto str = service_.current_str();
          if (str.has_value()) {
            response.type = wire::kMsgStrOk;
            response.body = str->encode();
          } else {
            response.type = wire::kMsgError;
            ByteWriter w;
            Bytes msg = to_bytes("no-epoch-committed");
            w.var16(ByteSpan(msg.data(), msg.size()));
            response.body = w.take();
          }
          break;
        }
        case wire::kMsgGetQueryLogHead: {
          response.type = wire::kMsgHeadOk;
          response.body = service_.query_log_head().encode();
          break;
        }
        default: {
          response.type = wire::kMsgError;
          ByteWriter w;
          Bytes msg = to_bytes("unknown-message-type");
          w.var16(ByteSpan(msg.data(), msg.size()));
          response.body = w.take();
        }
      }
    } catch (const std::exception& e) {
      response.type = wire::kMsgError;
      ByteWriter w;
      Bytes msg = to_bytes(std::string("request-failed: ") + e.what());
      w.var16(ByteSpan(msg.data(), msg.size()));
      response.body = w.take();
    }
    wire::write_frame(fd, response);
  }
}

WireClient::WireClient(const std::filesystem::path& socket_path) {
  fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd_ < 0) throw ConfigError("cannot create unix socket");
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  const std::string path = socket_path.string();
  if (path.size() + 1 > sizeof addr.sun_path) {
    ::close(fd_);
    throw ConfigError("socket path too long");
  }
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd_);
    throw ConfigError("cannot connect to " + path);
  }
}

WireClient::~WireClient() {
  if (fd_ >= 0) ::close(fd_);
}

wire::Message WireClient::call(const wire::Message& request) {
  wire::write_frame(fd_, request);
  return wire::read_frame(fd_);
}

}  // namespace tlog
