#include "tlog/sanitiser.hpp"

#include <cmath>

#include "tlog/encoding.hpp"
#include "tlog/errors.hpp"

namespace tlog {

std::optional<Visibility> visibility_from_name(std::string_view name) {
  if (name == "public") return Visibility::public_release;
  if (name == "subject") return Visibility::subject_only;
  if (name == "auditor") return Visibility::auditor_only;
  return std::nullopt;
}

std::string_view visibility_name(Visibility v) {
  switch (v) {
    case Visibility::public_release: return "public";
    case Visibility::subject_only: return "subject";
    case Visibility::auditor_only: return "auditor";
  }
  return "?";
}

Bytes LogEntry::encode() const {
  ByteWriter w;
  Bytes subject = to_bytes(subject_id);
  w.var16(ByteSpan(subject.data(), subject.size()));
  w.u8(static_cast<std::uint8_t>(visibility));
  w.digest(payload_commitment);
  std::uint8_t flags = 0;
  if (payload.has_value()) flags |= 0x01;
  if (envelope.has_value()) flags |= 0x02;
  w.u8(flags);
  if (payload.has_value()) {
    w.var32(ByteSpan(payload->data(), payload->size()));
    if (!salt.has_value()) throw InputError("public entry missing salt");
    w.raw(ByteSpan(salt->data(), salt->size()));
  }
  if (envelope.has_value()) {
    w.var32(ByteSpan(envelope->data(), envelope->size()));
  }
  return w.take();
}

LogEntry LogEntry::decode(ByteSpan data) {
  ByteReader r(data);
  LogEntry e;
  e.subject_id = to_string(r.var16());
  const std::uint8_t vis = r.u8();
  if (vis > 2) throw FormatError("unknown visibility");
  e.visibility = static_cast<Visibility>(vis);
  e.payload_commitment = r.digest();
  const std::uint8_t flags = r.u8();
  if (flags & 0x01) {
    e.payload = r.var32();
    e.salt = r.digest().bytes;
  }
  if (flags & 0x02) {
    e.envelope = r.var32();
  }
  r.expect_done();
  return e;
}

Bytes seal_envelope(const BoxPublicKey& to, ByteSpan plaintext, Rng& rng) {
  const Digest key_id = sha256(to.span());
  const auto nonce = rng.bytes24();
  const auto eph_seed = rng.bytes32();
  ByteWriter w;
  w.digest(key_id);
  w.raw(ByteSpan(nonce.data(), nonce.size()));
  Bytes sealed = box_encrypt(to, ByteSpan(nonce.data(), nonce.size()),
                             ByteSpan(eph_seed.data(), eph_seed.size()), plaintext);
  w.raw(ByteSpan(sealed.data(), sealed.size()));
  return w.take();
}

LogEntry sanitise_entry(ByteSpan raw_payload, std::string subject_id,
                        const SanitisePolicy& policy, Rng& rng) {
  LogEntry entry;
  entry.subject_id = std::move(subject_id);
  entry.visibility = policy.visibility;
  const auto salt = rng.bytes32();
  entry.payload_commitment =
      value_commitment(ByteSpan(salt.data(), salt.size()), raw_payload);

  if (policy.visibility == Visibility::public_release) {
    entry.payload = Bytes(raw_payload.begin(), raw_payload.end());
    entry.salt = salt;
    return entry;
  }

  const std::optional<BoxPublicKey>& recipient =
      policy.visibility == Visibility::auditor_only ? policy.auditor_key
                                                    : policy.subject_key;
  if (!recipient.has_value()) {
    throw ConfigError(std::string("no recipient key configured for ") +
                      std::string(visibility_name(policy.visibility)) +
                      " visibility");
  }
  // salt || payload inside the envelope so the opener can re-check the
  // public commitment.
  Bytes plaintext;
  plaintext.insert(plaintext.end(), salt.begin(), salt.end());
  plaintext.insert(plaintext.end(), raw_payload.begin(), raw_payload.end());
  entry.envelope = seal_envelope(*recipient, ByteSpan(plaintext.data(), plaintext.size()), rng);
  return entry;
}

Bytes open_envelope(const LogEntry& entry, const BoxSecretKey& recipient_key) {
  if (!entry.envelope.has_value()) {
    throw InputError("entry has no envelope");
  }
  const Bytes& env = *entry.envelope;
  if (env.size() < 32 + kBoxNonceBytes + kBoxOverheadBytes) {
    throw FormatError("envelope truncated");
  }
  const ByteSpan nonce(env.data() + 32, kBoxNonceBytes);
  const ByteSpan sealed(env.data() + 32 + kBoxNonceBytes,
                        env.size() - 32 - kBoxNonceBytes);
  std::optional<Bytes> plaintext = box_decrypt(recipient_key, nonce, sealed);
  if (!plaintext.has_value()) {
    throw DecryptionError("envelope decryption failed");
  }
  if (plaintext->size() < 32) {
    throw FormatError("envelope plaintext truncated");
  }
  const ByteSpan salt(plaintext->data(), 32);
  const ByteSpan payload(plaintext->data() + 32, plaintext->size() - 32);
  if (value_commitment(salt, payload) != entry.payload_commitment) {
    throw IntegrityError("payload does not match its commitment");
  }
  return Bytes(payload.begin(), payload.end());
}

double dp_answer(double true_value, double sensitivity, double epsilon,
                 std::uint64_t rng_seed) {
  if (!(sensitivity > 0.0) || !(epsilon > 0.0)) {
    throw InputError("sensitivity and epsilon must be positive");
  }
  const double scale = sensitivity / epsilon;
  Rng rng(rng_seed);
  // Difference of two unit exponentials is Laplace(0, 1).
  const double noise = scale * (std::log(rng.next_open_unit()) -
                                std::log(rng.next_open_unit()));
  return true_value + noise;
}

BudgetLedger::ChargeResult BudgetLedger::charge(const std::string& principal,
                                                const Rational& epsilon) {
  if (epsilon.is_zero() || epsilon.is_negative()) {
    throw InputError("charge epsilon must be positive");
  }
  std::lock_guard<std::mutex> lock(mu_);
  Rational& balance = mode_ == Mode::shared_pool
                          ? pool_
                          : per_.try_emplace(principal, total_).first->second;
  if (balance < epsilon) {
    return {false, balance};
  }
  balance = balance - epsilon;
  return {true, balance};
}

Rational BudgetLedger::remaining(const std::string& principal) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (mode_ == Mode::shared_pool) return pool_;
  auto it = per_.find(principal);
  return it == per_.end() ? total_ : it->second;
}

void BudgetLedger::reset(const std::string& principal) {
  std::lock_guard<std::mutex> lock(mu_);
  if (mode_ == Mode::shared_pool) {
    pool_ = total_;
  } else {
    per_[principal] = total_;
  }
}

std::vector<std::pair<std::string, Rational>> BudgetLedger::balances() const {
  std::lock_guard<std::mutex> lock(mu_);
  return std::vector<std::pair<std::string, Rational>>(per_.begin(), per_.end());
}

Rational BudgetLedger::pool_balance() const {
  std::lock_guard<std::mutex> lock(mu_);
  return pool_;
}

void BudgetLedger::restore_balance(const std::string& principal,
                                   const Rational& value) {
  std::lock_guard<std::mutex> lock(mu_);
  per_[principal] = value;
}

void BudgetLedger::restore_pool(const Rational& value) {
  std::lock_guard<std::mutex> lock(mu_);
  pool_ = value;
}

}  // namespace tlog
