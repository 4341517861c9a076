#pragma once

// Public report server: plausibility checks and signature tiers at intake,
// delayed (optionally shuffled) publication into an append-only list, and
// cursor-paged download. Also carries alternative-protocol key reports.

#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pact/alt.hpp"
#include "pact/core.hpp"
#include "pact/crypto.hpp"
#include "pact/transport.hpp"

namespace pact::registry {

enum class Tier { none = 0, self_report = 1, healthcare = 2 };

std::string to_string(Tier t);
Tier tier_from_string(std::string_view s);

struct Signer {
  crypto::PublicKey vk{};
  Tier tier = Tier::self_report;
};

/// Whitelist of certificate ids. Stored as JSON:
/// {"signers": [{"cert": "...", "vk": "<base64>", "tier": "healthcare"}]}
class SignaturePolicy {
 public:
  void add(const std::string& cert, const crypto::PublicKey& vk, Tier tier);
  const Signer* find(const std::string& cert) const;
  std::size_t size() const { return signers_.size(); }

  nlohmann::json to_json() const;
  static SignaturePolicy from_json(const nlohmann::json& j);
  static SignaturePolicy load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, Signer> signers_;
};

enum class RejectReason {
  malformed,
  stale,
  future,
  span,
  unknown_signer,
  bad_signature,
  duplicate,
  rate_limited,
  weak_integrity,
  not_found,
};

std::string to_string(RejectReason r);
/// HTTP status used for each rejection.
int http_status(RejectReason r);

enum class AltPublication { grouped, ungrouped };

struct Config {
  core::Params params;
  Seconds delay = 2 * 900;
  Seconds max_report_age = 1344 * 900 + kSecondsPerDay;
  /// t_end may run ahead of the server clock by this much (reporter skew).
  Seconds clock_slack = 300;
  bool shuffle = true;
  std::optional<std::uint64_t> shuffle_seed;
  bool require_strong_integrity = false;
  /// Accepted submissions below healthcare tier per source per window; 0 disables.
  std::size_t rate_limit = 10;
  Seconds rate_window = 3600;
  AltPublication alt_publication = AltPublication::grouped;
  std::int64_t alt_window_days = 14;
  /// Append-only record file; replayed on construction when present.
  std::optional<std::string> log_path;

  /// Defaults derived from params: delay 2 dt, max age delta*dt + 1 day.
  static Config defaults_for(const core::Params& params);
};

struct SubmitResult {
  bool accepted = false;
  std::optional<RejectReason> reason;
  std::string detail;
  Tier tier = Tier::none;
  Seconds release_at = 0;
};

struct PublishedEntry {
  core::Entry entry;
  Tier tier = Tier::none;
  Seconds submitted_at = 0;
  Seconds published_at = 0;
};

struct FetchResult {
  std::vector<PublishedEntry> entries;
  std::uint64_t next_cursor = 0;
};

struct PublishedKeys {
  std::vector<crypto::PublicKey> keys;
  Seconds submitted_at = 0;
  Seconds published_at = 0;
};

struct AltFetchResult {
  std::vector<PublishedKeys> groups;
  std::uint64_t next_cursor = 0;
};

struct AuditRecord {
  Seconds submitted_at;
  Seconds published_at;
};

class Registry {
 public:
  explicit Registry(Config config, SignaturePolicy policy = {});

  SubmitResult submit(const core::Entry& entry, Seconds now, const std::string& source = "local");
  /// Adds an authority signature to a pending or published entry, located by
  /// S*. Re-signing by the same authority is a no-op.
  SubmitResult countersign(ByteView window_seed, const std::string& cert, const crypto::Signature& sig,
                           Seconds now);
  /// Publishes every pending report whose release time has come.
  std::size_t release_tick(Seconds now);
  FetchResult fetch(std::uint64_t cursor, std::size_t limit = SIZE_MAX) const;

  SubmitResult submit_alt(const alt::AltReport& report, Seconds now, const std::string& source = "local");
  AltFetchResult fetch_alt(std::uint64_t cursor, std::size_t limit = SIZE_MAX) const;

  std::size_t published_count() const;
  std::size_t pending_count() const;
  std::vector<AuditRecord> audit() const;
  const Config& config() const { return config_; }
  const SignaturePolicy& policy() const { return policy_; }

  /// HTTP surface; see README for the routes.
  net::Response handle(const net::Request& request, Seconds now);

 private:
  struct PendingCore {
    PublishedEntry item;
    Seconds release_at;
  };
  struct PendingAlt {
    PublishedKeys item;
    Seconds release_at;
  };
  using Pending = std::variant<PendingCore, PendingAlt>;

  SubmitResult check_signatures(const core::Entry& entry) const;
  bool rate_limited(const std::string& source, Seconds now);
  PublishedEntry* locate(ByteView window_seed);
  void publish_locked(Seconds now);

  void log_record(char kind, const Bytes& payload);
  void replay_log();

  Config config_;
  SignaturePolicy policy_;
  mutable std::shared_mutex mu_;
  std::vector<PublishedEntry> published_;
  std::vector<PublishedKeys> published_alt_;
  std::deque<Pending> pending_;
  std::set<Bytes> seen_seeds_;
  std::set<crypto::PublicKey> seen_keys_;
  std::map<std::string, std::deque<Seconds>> recent_by_source_;
  std::mt19937_64 shuffle_rng_;
  std::ofstream log_;
  std::ofstream index_;
  std::uint64_t log_offset_ = 0;
  bool replaying_ = false;
};

nlohmann::json published_to_json(const PublishedEntry& p);
PublishedEntry published_from_json(const nlohmann::json& j, const core::Params& params);

}  // namespace pact::registry
