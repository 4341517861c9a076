#pragma once

// Discrete-event co-location simulator. Agents, the registry and adversaries
// share one virtual clock; a brute-force oracle computes who should be
// alerted from the contact list alone.
//
// Radio model: while two adopting agents are co-located, each hears the
// other's broadcast at the start of the contact, whenever the sender's local
// clock crosses an epoch boundary, and right after the sender resets its
// identity by reporting. Every delivery is dropped independently with the
// scenario's drop probability.
//
// At each grid boundary (and at the end of the run) the registry publishes,
// adversaries react, then every adopting agent syncs, checks and purges.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pact/agent.hpp"
#include "pact/core.hpp"
#include "pact/registry.hpp"

namespace pact::sim {

inline constexpr const char* kScenarioSchema = "pact-scenario/1";

struct AgentSpec {
  Seconds skew = 0;
  bool adopter = true;
};

struct Contact {
  int a = 0;
  int b = 0;
  Seconds start = 0;  // offsets from Scenario::start
  Seconds end = 0;
};

struct Positive {
  int agent = 0;
  Seconds at = 0;
  /// false models a positive who never reports.
  bool consent = true;
};

struct AttackSpec {
  std::string kind;
  nlohmann::json params = nlohmann::json::object();
};

struct Scenario {
  std::uint64_t seed = 1;
  agent::Protocol protocol = agent::Protocol::core;
  core::Params params;
  Seconds start = 1590969600;  // 2020-06-01T00:00:00Z
  Seconds duration = 86400;
  std::vector<AgentSpec> agents;
  std::vector<Contact> contacts;
  std::vector<Positive> positives;
  std::vector<AttackSpec> adversaries;
  double drop_probability = 0.0;
  Seconds tolerance = -1;
  /// 0 selects delta*dt + delay + 2*dt so nothing is purged before its check.
  Seconds retention = 0;
  Redaction redaction = Redaction::none;

  Seconds registry_delay = -1;  // negative: 2*dt
  bool registry_shuffle = true;
  std::size_t registry_rate_limit = 10;
  bool require_strong_integrity = false;
  registry::AltPublication alt_publication = registry::AltPublication::grouped;

  Seconds delay() const { return registry_delay >= 0 ? registry_delay : 2 * params.dt; }
  Seconds effective_retention() const;
  Seconds effective_tolerance() const;
  /// Throws Error describing the first problem found.
  void validate() const;

  nlohmann::json to_json() const;
  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::string& path);
};

/// (observer agent, positive index) pairs.
using ExposureSet = std::set<std::pair<int, int>>;

/// Ground truth from contacts and report windows only. With
/// respect_adoption, pairs involving a non-adopter are left out.
ExposureSet oracle_exposures(const Scenario& s, bool respect_adoption = true);

struct AgentResult {
  bool alerted = false;
  std::vector<int> exposed_to;  // positive indices
  std::size_t bytes_sent = 0;
  std::size_t bytes_received = 0;
  std::size_t requests = 0;
  std::size_t broadcasts = 0;
  std::size_t heard = 0;
  std::size_t stored = 0;
};

struct RunResult {
  std::vector<AgentResult> agents;
  ExposureSet alerts;
  ExposureSet oracle;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t reports_submitted = 0;
  std::size_t reports_rejected = 0;
  std::map<std::string, std::size_t> registry_rejections;
  nlohmann::json attacks = nlohmann::json::array();

  nlohmann::json to_json() const;
  std::string summary() const;
};

RunResult run_scenario(const Scenario& s);

struct AttackOutcome {
  std::string kind;
  std::string protocol;
  bool succeeded = false;
  std::size_t false_alerts = 0;
  std::size_t linkable_ids = 0;
  std::size_t linked_sites = 0;
  std::size_t accepted_submissions = 0;
  std::size_t rejected_submissions = 0;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Runs the scenario with its first adversary and scores the attack.
AttackOutcome run_attack(const Scenario& s);

struct RandomScenarioOptions {
  int agents = 20;
  int days = 14;
  int contacts = 100;
  int positives = 3;
  Seconds min_contact = 900;
  Seconds max_contact = 4 * 3600;
  Seconds max_skew = 0;  // per-agent skew drawn from [-max_skew, max_skew]
  double adoption = 1.0;
  agent::Protocol protocol = agent::Protocol::core;
  core::Params params;
};

Scenario random_scenario(const RandomScenarioOptions& opts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Check-cost benchmark

struct BenchOptions {
  std::vector<std::int64_t> L = {1, 2, 4, 8, 16, 32, 64};
  std::vector<std::int64_t> S = {2};
  std::int64_t delta = 1344;
  std::vector<agent::Protocol> protocols = {agent::Protocol::core, agent::Protocol::alt_sig};
  int repetitions = 3;
  std::uint64_t seed = 1;
};

struct BenchRow {
  std::string protocol;
  std::int64_t L = 0;
  std::int64_t S = 0;
  std::int64_t delta = 0;
  double seconds = 0;
  double model_seconds = 0;
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct BenchReport {
  std::vector<BenchRow> rows;
  /// Fit of measured time against L, per (protocol, S).
  std::map<std::pair<std::string, std::int64_t>, LinearFit> fits;
  double t_g = 0;     // seconds per chain step
  double t_vrfy = 0;  // seconds per signature verification

  nlohmann::json to_json() const;
  std::string table() const;
};

BenchReport bench_check_cost(const BenchOptions& opts);

// ---------------------------------------------------------------------------
// Adoption curve

struct AdoptionPoint {
  double p = 0;
  std::size_t exposures = 0;  // ground truth
  std::size_t detected = 0;
  double fraction() const { return exposures ? static_cast<double>(detected) / static_cast<double>(exposures) : 0; }
};

AdoptionPoint adoption_experiment(double p, int scenarios, const RandomScenarioOptions& base, std::uint64_t seed);

}  // namespace pact::sim
