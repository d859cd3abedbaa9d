#pragma once

#include <atomic>
#include <filesystem>
#include <thread>

#include "tlog/release_query.hpp"

namespace tlog {

// Request/response framing over a local (AF_UNIX) socket:
//   frame := length u32 (of everything after it) || type u8 || body
// Request signatures cover type || body-without-signature, so the signed
// bytes are exactly QueryRequest::signed_portion() /
// QueryService::evidence_signed_portion().
namespace wire {

inline constexpr std::uint8_t kMsgQuery = 0x01;
inline constexpr std::uint8_t kMsgEvidence = 0x02;
inline constexpr std::uint8_t kMsgGetStr = 0x03;
inline constexpr std::uint8_t kMsgGetQueryLogHead = 0x04;
inline constexpr std::uint8_t kMsgQueryOk = 0x81;
inline constexpr std::uint8_t kMsgEvidenceOk = 0x82;
inline constexpr std::uint8_t kMsgStrOk = 0x83;
inline constexpr std::uint8_t kMsgHeadOk = 0x84;
inline constexpr std::uint8_t kMsgDenied = 0x7e;
inline constexpr std::uint8_t kMsgError = 0x7f;

struct Message {
  std::uint8_t type = 0;
  Bytes body;
};

// Blocking frame I/O on a connected fd. Throws IntegrityError on EOF/short
// frames and FormatError on oversize frames.
void write_frame(int fd, const Message& message);
Message read_frame(int fd);

Bytes encode_query_request(const QueryRequest& request);
QueryRequest decode_query_request(ByteSpan body);
Bytes encode_evidence_request(const std::string& principal_id, const Signature& sig);

Bytes encode_query_answer(const QueryAnswer& answer, std::uint64_t audit_index);
Bytes encode_denial(const Denial& denial, std::uint64_t audit_index);
Bytes encode_bundles(const std::vector<EvidenceBundle>& bundles,
                     std::uint64_t audit_index);

struct DecodedAnswer {
  QueryAnswer answer;
  std::uint64_t audit_index = 0;
};
DecodedAnswer decode_query_answer(ByteSpan body);
struct DecodedDenial {
  Denial denial;
  std::uint64_t audit_index = 0;
};
DecodedDenial decode_denial(ByteSpan body);
std::pair<std::vector<EvidenceBundle>, std::uint64_t> decode_bundles(ByteSpan body);

}  // namespace wire

// Serves a QueryService on a unix-domain socket, one connection at a time
// (the service serializes internally anyway). start() spawns the accept
// loop; stop() shuts it down and removes the socket file.
class WireServer {
 public:
  WireServer(QueryService& service, std::filesystem::path socket_path);
  ~WireServer();

  void start();  // throws ConfigError on bind failure
  void stop();
  const std::filesystem::path& socket_path() const { return path_; }

 private:
  void serve_loop();
  void handle_connection(int fd);

  QueryService& service_;
  std::filesystem::path path_;
  int listen_fd_ = -1;
  std::thread thread_;
  std::atomic<bool> running_{false};
};

// Minimal client: connect, one call per request.
class WireClient {
 public:
  explicit WireClient(const std::filesystem::path& socket_path);
  ~WireClient();
  WireClient(const WireClient&) = delete;
  WireClient& operator=(const WireClient&) = delete;

  wire::Message call(const wire::Message& request);

 private:
  int fd_ = -1;
};

}  // namespace tlog
