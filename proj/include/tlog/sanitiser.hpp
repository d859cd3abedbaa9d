#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tlog/crypto.hpp"
#include "tlog/rational.hpp"
#include "tlog/rng.hpp"

namespace tlog {

enum class Visibility : std::uint8_t {
  public_release = 0,  // raw payload travels with the entry
  subject_only = 1,    // envelope decryptable by the data subject
  auditor_only = 2,    // envelope decryptable by the designated auditor
};

std::optional<Visibility> visibility_from_name(std::string_view name);
std::string_view visibility_name(Visibility v);

// A subject-attributed record after sanitisation. The commitment
// H(0x03 || salt || payload) is always public; the raw payload is present
// only for public entries, otherwise it lives inside the envelope together
// with its salt so any authorized opener can re-check the commitment.
struct LogEntry {
  std::string subject_id;
  Visibility visibility = Visibility::public_release;
  Digest payload_commitment;
  std::optional<Bytes> payload;                        // public entries only
  std::optional<std::array<std::uint8_t, 32>> salt;    // public entries only
  std::optional<Bytes> envelope;

  Bytes encode() const;
  static LogEntry decode(ByteSpan data);  // throws FormatError
};

struct SanitisePolicy {
  Visibility visibility = Visibility::public_release;
  std::optional<BoxPublicKey> auditor_key;
  std::optional<BoxPublicKey> subject_key;
};

// Envelope layout: recipient key id (32, = H(recipient pk)) || nonce (24) ||
// authenticated ciphertext. Tampering anywhere fails the MAC.
Bytes seal_envelope(const BoxPublicKey& to, ByteSpan plaintext, Rng& rng);

// Transforms a raw payload per policy. Throws ConfigError when the policy
// demands an envelope but the recipient key is missing.
LogEntry sanitise_entry(ByteSpan raw_payload, std::string subject_id,
                        const SanitisePolicy& policy, Rng& rng);

// Opens an entry's envelope and re-checks the payload commitment.
// Throws InputError (no envelope), DecryptionError (wrong key / tampered
// ciphertext) or IntegrityError (plaintext does not match the commitment,
// e.g. envelopes swapped between entries).
Bytes open_envelope(const LogEntry& entry, const BoxSecretKey& recipient_key);

// Laplace mechanism: true_value + Laplace(sensitivity / epsilon) drawn from
// the seeded generator. Deterministic per seed so audits can replay answers.
double dp_answer(double true_value, double sensitivity, double epsilon,
                 std::uint64_t rng_seed);  // throws InputError

// Per-principal or pooled privacy-budget accounting. Budgets only decrease,
// except by administrative reset; charges are atomic per principal.
class BudgetLedger {
 public:
  enum class Mode : std::uint8_t { per_principal = 0, shared_pool = 1 };

  BudgetLedger(Mode mode, Rational total_epsilon)
      : mode_(mode), total_(total_epsilon), pool_(total_epsilon) {}

  struct ChargeResult {
    bool accepted = false;
    Rational remaining;  // after the charge (or the unchanged refusing balance)
  };

  ChargeResult charge(const std::string& principal, const Rational& epsilon);
  Rational remaining(const std::string& principal) const;
  void reset(const std::string& principal);
  Mode mode() const { return mode_; }

  // Persistence hooks: administrative restore of saved balances.
  std::vector<std::pair<std::string, Rational>> balances() const;
  Rational pool_balance() const;
  void restore_balance(const std::string& principal, const Rational& value);
  void restore_pool(const Rational& value);

 private:
  mutable std::mutex mu_;
  Mode mode_;
  Rational total_;
  Rational pool_;
  std::map<std::string, Rational> per_;
};

}  // namespace tlog
