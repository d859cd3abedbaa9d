#pragma once

#include <stdexcept>
#include <string>

namespace tlog {

// Bad user-supplied data (duplicate keys, overflowing sums, bad decimals).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Missing or inconsistent configuration (no auditor key, bad sim config).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stored or transported bytes fail a digest / commitment check.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Authenticated decryption failed (wrong key or tampered ciphertext).
// Distinct from IntegrityError: decryption succeeded but the plaintext
// does not match its commitment is an IntegrityError instead.
struct DecryptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Canonical encoding cannot be parsed.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tlog
