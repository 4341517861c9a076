#pragma once

// Seed-chain pseudonyms: derivation, advancing, reports, regeneration and the
// strong-integrity variant that binds a verification key into every step.
//
// Chain indexing: S_0 is the sampled seed and (S_i, id_i) = G(S_{i-1}). id_i is
// broadcast during the i-th epoch of the chain. The state keeps S_i, the current
// id, and the window seed S* = S_max(i-Delta, 0). An entry (S*, t_start, t_end)
// names the epoch starts of the first and last id it regenerates, so a chain
// that ran for k <= Delta epochs reports t_end - t_start = (k - 1) * dt.

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pact/bytes.hpp"
#include "pact/crypto.hpp"

namespace pact::core {

struct Params {
  int n_bits = 128;
  Seconds dt = 900;
  std::int64_t delta = 1344;
  /// Grid origin; 0 puts epoch boundaries on midnight UTC when dt divides a day.
  Seconds origin = 0;

  std::size_t seed_bytes() const { return static_cast<std::size_t>(n_bits / 8); }
  Seconds infection_window() const { return delta * dt; }
  /// Throws pact::Error when an invariant is violated.
  void validate() const;
};

/// Matching slack default: half an epoch (see README, "Time tolerance").
inline Seconds default_time_tolerance(const Params& p) { return p.dt / 2; }

struct PseudonymId {
  Bytes bytes;
  friend auto operator<=>(const PseudonymId&, const PseudonymId&) = default;
};

struct PseudonymIdHash {
  std::size_t operator()(const PseudonymId& id) const noexcept;
};

struct Step {
  Bytes next_seed;
  PseudonymId id;
};

/// G(seed): hash to 2n bits, first half is the next seed, second half the id.
Step derive_next(ByteView seed, const Params& params);
/// G(seed, vk): same split over H(seed || vk).
Step derive_next_bound(ByteView seed, const crypto::PublicKey& vk, const Params& params);

struct EpochPos {
  std::int64_t index;  // 1-based on the global grid
  Seconds start;
};

EpochPos epoch_index(Seconds t, const Params& params);

struct ChainState {
  Bytes current_seed;
  std::int64_t current_index = 0;  // chain counter i
  std::int64_t current_epoch = 0;  // grid epoch in which id_i is broadcast
  Seconds current_time = 0;        // start of current_epoch
  PseudonymId current_id;
  Bytes window_seed;
  Seconds window_time = 0;  // epoch start of the first id derived from window_seed
  std::optional<crypto::PublicKey> bound_vk;

  friend bool operator==(const ChainState&, const ChainState&) = default;
};

class ClockRegression : public Error {
 public:
  using Error::Error;
};

class MalformedEntry : public Error {
 public:
  using Error::Error;
};

ChainState init_chain(const Params& params, ByteView entropy, bool skip_to_delta, Seconds now,
                      std::optional<crypto::PublicKey> bound_vk = std::nullopt);

struct Advanced {
  ChainState state;
  PseudonymId id;
  std::int64_t steps = 0;
};

/// Steps the chain to the epoch containing now. Throws ClockRegression if now
/// precedes the current epoch; the input state is never modified.
Advanced advance(const ChainState& state, Seconds now, const Params& params);

struct EntrySignature {
  std::string cert_id;
  crypto::Signature sig{};
  friend bool operator==(const EntrySignature&, const EntrySignature&) = default;
};

struct Entry {
  Bytes window_seed;
  Seconds t_start = 0;
  Seconds t_end = 0;
  std::optional<crypto::PublicKey> vk;
  std::optional<crypto::Signature> si_signature;
  std::vector<EntrySignature> signatures;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// S* || t_start || t_end [|| vk]: the bytes every entry signature covers.
Bytes signing_bytes(const Entry& entry);
Bytes encode_entry(const Entry& entry);
Entry decode_entry(ByteView data, const Params& params);
nlohmann::json entry_to_json(const Entry& entry);
Entry entry_from_json(const nlohmann::json& j, const Params& params);

struct Report {
  Entry entry;
  ChainState fresh_state;
};

/// Builds the upload for the current window and restarts the chain from
/// fresh_entropy in the same epoch. The old seeds are not carried over.
Report build_report(const ChainState& state, const Params& params, ByteView fresh_entropy,
                    bool skip_to_delta = false,
                    std::optional<crypto::PublicKey> fresh_vk = std::nullopt);

struct TimedId {
  PseudonymId id;
  Seconds epoch_start = 0;
};

/// Ids of the epochs [t_start, t_end] (partial epochs rounded outward),
/// oldest first, at most delta of them. Uses G(., vk) when the entry has vk.
std::vector<TimedId> regenerate(const Entry& entry, const Params& params);

/// Attaches vk and the strong-integrity signature over (S*, t_start, t_end, vk).
Entry sign_entry(Entry entry, const crypto::KeyPair& keypair);
bool verify_entry_si(const Entry& entry, const Params& params);

}  // namespace pact::core
