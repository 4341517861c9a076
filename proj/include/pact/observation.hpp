#pragma once

// Local store of heard identifiers and the matching step run against
// regenerated report ids.

#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "pact/bytes.hpp"
#include "pact/core.hpp"
#include "pact/crypto.hpp"

namespace pact {

/// How much timing detail an alert may carry. Stored data is never redacted.
enum class Redaction { none, day, suppress_time };

std::string to_string(Redaction r);
Redaction redaction_from_string(std::string_view s);

/// Stored form of an alternative-protocol identifier (sigma, R, h). There is
/// deliberately no time field.
struct AltTriple {
  crypto::Signature sigma{};
  Bytes big_r;
  Bytes h;
  friend bool operator==(const AltTriple&, const AltTriple&) = default;
};

struct ExposureEvent {
  Bytes matched;  // the id (core) or R (alternative protocol)
  std::optional<Seconds> heard_at;
  std::optional<std::int64_t> day;
};

class ObservationStore {
 public:
  ObservationStore(core::Params params, Seconds retention, Redaction redaction);

  /// Stores (id, heard_at) unless the same id was already heard in that epoch.
  bool add(const core::PseudonymId& id, Seconds heard_at);
  /// Alt triples are bucketed by collection day for retention only.
  bool add_alt(const AltTriple& triple, std::int64_t day);

  std::span<const Seconds> heard_times(const core::PseudonymId& id) const;
  const std::map<std::int64_t, std::vector<AltTriple>>& alt_buckets() const { return alt_; }

  /// Removes records with now - heard_at >= retention.
  std::size_t purge(Seconds now);

  std::size_t size() const { return core_count_ + alt_count_; }
  std::size_t core_size() const { return core_count_; }
  std::size_t alt_size() const { return alt_count_; }
  bool empty() const { return size() == 0; }

  const core::Params& params() const { return params_; }
  Seconds retention() const { return retention_; }
  Redaction redaction() const { return redaction_; }
  void set_redaction(Redaction r) { redaction_ = r; }

  /// Applies the redaction policy to a raw match.
  ExposureEvent make_event(Bytes matched, std::optional<Seconds> heard_at,
                           std::optional<std::int64_t> day) const;

  /// Flat copy of the core records, for snapshots and oracles.
  std::vector<std::pair<core::PseudonymId, Seconds>> core_records() const;

  void clear();

 private:
  core::Params params_;
  Seconds retention_;
  Redaction redaction_;
  std::unordered_map<core::PseudonymId, std::vector<Seconds>, core::PseudonymIdHash> core_;
  std::map<std::int64_t, std::vector<AltTriple>> alt_;
  std::size_t core_count_ = 0;
  std::size_t alt_count_ = 0;
};

namespace core {

/// One event per stored (id, t) whose id is a candidate and whose time is
/// within dt + time_tolerance of the candidate's epoch start.
std::vector<ExposureEvent> match_exposure(const ObservationStore& store,
                                          std::span<const TimedId> candidates,
                                          Seconds time_tolerance);

}  // namespace core
}  // namespace pact
