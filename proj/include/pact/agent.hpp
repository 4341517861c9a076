#pragma once

// The phone-side state machine: broadcasts, collection, retention, reports
// and checking against the registry. Every operation on one agent is
// serialised; separate agents are independent.

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pact/alt.hpp"
#include "pact/core.hpp"
#include "pact/crypto.hpp"
#include "pact/narrowcast.hpp"
#include "pact/observation.hpp"
#include "pact/transport.hpp"

namespace pact::agent {

enum class Protocol { core, core_strong_integrity, alt_sig };

std::string to_string(Protocol p);
Protocol protocol_from_string(std::string_view s);

/// Certificate and key attached to every report this agent uploads.
struct SigningMaterial {
  std::string cert;
  crypto::SecretKey key;
};

struct Config {
  core::Params params;
  Protocol protocol = Protocol::core;
  /// 0 selects delta * dt.
  Seconds retention = 0;
  Redaction redaction = Redaction::day;
  /// Negative selects the protocol default (dt/2 core, 120 s alt).
  Seconds time_tolerance = -1;
  bool skip_to_delta = false;
  alt::AltParams alt;
  std::optional<SigningMaterial> signing;
  std::size_t fetch_page = 1000;

  Seconds effective_retention() const { return retention > 0 ? retention : params.infection_window(); }
  Seconds effective_tolerance() const;
  std::int64_t alt_window_days() const;
};

struct TickResult {
  Bytes payload;
  std::optional<std::string> warning;
};

enum class ReportStatus { submitted, refused, rejected, failed };
std::string to_string(ReportStatus s);

struct ReportOutcome {
  ReportStatus status = ReportStatus::refused;
  std::optional<core::Entry> entry;
  std::optional<alt::AltReport> alt_report;
  std::string detail;
};

struct Alert {
  bool at_risk = false;
  Redaction redaction = Redaction::day;
  std::vector<ExposureEvent> events;

  /// suppress-time: {"at_risk": bool} only; day: adds matches and days;
  /// none: adds times as well.
  nlohmann::json to_json() const;
};

using RiskHook = std::function<void(const std::vector<ExposureEvent>&)>;

class Agent {
 public:
  /// registry may be null for an agent that never syncs or reports.
  Agent(Config config, crypto::RandomSource& rng, net::Transport* registry, Seconds now);

  TickResult tick(Seconds now);
  /// Stores a heard payload; false (and counted) when rejected or malformed.
  bool on_hear(ByteView payload, Seconds now);
  std::size_t purge(Seconds now);
  /// Without consent nothing is built and nothing is sent.
  ReportOutcome make_report(Seconds now, bool consent);
  /// Fetches new registry entries and matches them locally. Throws
  /// net::TransportError with the cursor unchanged when the registry fails.
  Alert sync_and_check(Seconds now);
  /// Queries the narrowcast service for the region around the newest trace
  /// point and matches the messages against the whole trace locally.
  std::vector<Bytes> check_narrowcast(net::Transport& narrowcast, std::span<const narrowcast::TracePoint> trace,
                                      Seconds since, std::size_t budget);

  void set_risk_hook(RiskHook hook);

  Bytes snapshot() const;
  static Agent restore(ByteView snapshot, Config config, crypto::RandomSource& rng, net::Transport* registry);

  const Config& config() const { return config_; }
  const ObservationStore& store() const { return store_; }
  const core::ChainState& chain() const { return chain_; }
  const alt::DailyKeyRing& keys() const { return ring_; }
  std::uint64_t cursor() const { return cursor_; }
  std::uint64_t alt_cursor() const { return alt_cursor_; }
  std::size_t malformed_heard() const { return malformed_; }
  std::size_t rejected_heard() const { return rejected_; }
  std::size_t skipped_entries() const { return skipped_entries_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Restore {};
  Agent(Restore, Config config, crypto::RandomSource& rng, net::Transport* registry);

  void fresh_chain(Seconds now);
  ReportOutcome report_core(Seconds now);
  ReportOutcome report_alt(Seconds now);
  Alert check_core();
  Alert check_alt();

  Config config_;
  crypto::RandomSource* rng_;
  net::Transport* registry_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();

  core::ChainState chain_;
  std::optional<crypto::KeyPair> si_key_;
  alt::DailyKeyRing ring_;
  Bytes last_payload_;
  ObservationStore store_;
  std::uint64_t cursor_ = 0;
  std::uint64_t alt_cursor_ = 0;
  std::size_t malformed_ = 0;
  std::size_t rejected_ = 0;
  std::size_t skipped_entries_ = 0;
  std::vector<std::string> warnings_;
  RiskHook hook_;
};

}  // namespace pact::agent
