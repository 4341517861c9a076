#pragma once

// Alternative protocol: daily Ed25519 keys sign per-broadcast (R || h) where
// h = H(r, t) commits to the broadcast time. Reports carry only the daily
// verification keys; checking verifies every stored triple against them.

#include <map>
#include <optional>
#include <vector>

#include "pact/bytes.hpp"
#include "pact/crypto.hpp"
#include "pact/observation.hpp"

namespace pact::alt {

struct AltParams {
  int n_bits = 128;  // length of R, r and h
  Seconds tolerance = 120;
  std::size_t n_bytes() const { return static_cast<std::size_t>(n_bits / 8); }
};

struct DailyKey {
  std::int64_t day = 0;
  crypto::SecretKey signing_key;
  crypto::PublicKey verification_key{};
};

class WrongDay : public Error {
 public:
  using Error::Error;
};

/// Per-device key schedule. Keeps at most one live signing key; verification
/// keys stay until they fall out of the infection window.
class DailyKeyRing {
 public:
  explicit DailyKeyRing(std::int64_t window_days) : window_days_(window_days) {}

  /// Returns the key for day, creating it if needed. Moving to a later day
  /// erases every earlier signing key. Asking for an earlier day than the
  /// newest one throws WrongDay.
  const DailyKey& daily_keygen(std::int64_t day, crypto::RandomSource& rng);

  const DailyKey* find(std::int64_t day) const;
  /// Verification keys for days in (current_day - window_days, current_day].
  std::vector<crypto::PublicKey> report_keys(std::int64_t current_day) const;
  /// Drops verification keys older than the window.
  void purge(std::int64_t current_day);
  void reset() { keys_.clear(); }

  std::int64_t window_days() const { return window_days_; }
  const std::map<std::int64_t, DailyKey>& keys() const { return keys_; }
  void restore(DailyKey key) { keys_[key.day] = std::move(key); }

 private:
  std::int64_t window_days_;
  std::map<std::int64_t, DailyKey> keys_;
};

struct AltBroadcast {
  crypto::Signature sigma{};
  Bytes big_r;
  Bytes h;
  Bytes r;
  Seconds t = 0;
  friend bool operator==(const AltBroadcast&, const AltBroadcast&) = default;
};

/// H(r, t) = first n bits of SHA-256(r || be64(t)).
Bytes commit_time(ByteView r, Seconds t, const AltParams& params);

AltBroadcast make_broadcast(const DailyKey& key, Seconds t, crypto::RandomSource& rng, const AltParams& params);

Bytes encode_broadcast(const AltBroadcast& b);
AltBroadcast decode_broadcast(ByteView data, const AltParams& params);

/// Stores (sigma, R, h) iff |now - t| <= tolerance and h = H(r, t).
bool validate_and_collect(ObservationStore& store, const AltBroadcast& b, Seconds now, Seconds tolerance,
                          const AltParams& params);

struct AltCheckResult {
  std::vector<ExposureEvent> events;
  std::size_t malformed_keys = 0;
};

/// Verifies every stored triple under every reported key. Malformed keys are
/// skipped and counted.
AltCheckResult check_exposure_alt(const ObservationStore& store, std::span<const Bytes> report_keys);

struct AltReport {
  std::vector<crypto::PublicKey> verification_keys;
  friend bool operator==(const AltReport&, const AltReport&) = default;
};

/// Count-prefixed (u32, big-endian) list of 32-byte keys.
Bytes encode_report(const AltReport& report);
AltReport decode_report(ByteView data);

struct CostEstimate {
  double pact = 0;
  double alt = 0;
};

/// Analytic check costs: L * delta * log2(S) * t_G versus L * S * t_Vrfy.
CostEstimate cost_model(double num_keys, double store_size, double delta, double t_g, double t_vrfy);

}  // namespace pact::alt
