#include <gtest/gtest.h>

#include "pact/simnet.hpp"

using namespace pact;
using namespace pact::sim;
using nlohmann::json;

namespace {

std::string scenario_path(const std::string& name) { return std::string(PACT_SCENARIO_DIR) + "/" + name; }

// Two agents, one contact, agent 0 reports at `at`. delta is one day.
Scenario pair(Seconds c_start, Seconds c_end, Seconds at, bool consent = true) {
  Scenario s;
  s.params.delta = 96;
  s.duration = 3 * 86400;
  s.agents.resize(2);
  s.contacts.push_back({0, 1, c_start, c_end});
  s.positives.push_back({0, at, consent});
  return s;
}

void expect_matches_oracle(const Scenario& s) {
  const auto r = run_scenario(s);
  EXPECT_EQ(r.alerts, r.oracle);
  EXPECT_EQ(r.false_positives, 0u);
  EXPECT_EQ(r.false_negatives, 0u);
}

}  // namespace

TEST(Scenario, TwoAgentsFile) {
  const auto s = Scenario::load(scenario_path("two_agents.scn"));
  const auto r = run_scenario(s);
  EXPECT_EQ(r.alerts.size(), 1u);
  EXPECT_EQ(r.alerts, (ExposureSet{{1, 0}}));
  EXPECT_EQ(r.oracle, r.alerts);
  EXPECT_EQ(r.reports_submitted, 1u);
  EXPECT_TRUE(r.agents[1].alerted);
  EXPECT_FALSE(r.agents[0].alerted);
  EXPECT_GT(r.agents[1].heard, 0u);
}

TEST(Scenario, JsonRoundTrip) {
  auto s = Scenario::load(scenario_path("attacks/replay.scn"));
  const auto back = Scenario::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.delay(), 1800);
  EXPECT_EQ(back.adversaries.at(0).kind, "replay");
}

TEST(Scenario, ValidationErrors) {
  auto bad = [](const json& j) {
    try {
      Scenario::from_json(j);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const json base = json::parse(R"({"agents": 2, "contacts": [{"a":0,"b":1,"start":0,"end":10}]})");
  EXPECT_EQ(bad(base), "");
  auto j = base;
  j["schema"] = "other/2";
  EXPECT_NE(bad(j), "");
  j = base;
  j["contacts"][0]["b"] = 5;
  EXPECT_NE(bad(j), "");
  j = base;
  j["contacts"][0]["end"] = 0;
  EXPECT_NE(bad(j), "");
  j = base;
  j["positives"] = json::array({{{"agent", 0}, {"at", 10}}, {{"agent", 0}, {"at", 20}}});
  EXPECT_NE(bad(j), "");
  j = base;
  j["agents"] = json::array({{{"skew", 1000}}, json::object()});
  EXPECT_NE(bad(j), "");
  j = base;
  j["protocol"] = "carrier-pigeon";
  EXPECT_NE(bad(j), "");
  j = base;
  j["adversaries"] = json::array({{{"kind", "seed-sharing"}, {"colluders", {0}}}});
  EXPECT_NE(bad(j).find("adversary 0"), std::string::npos);
  j = base;
  j["adversaries"] = json::array({{{"kind", "teleport"}}});
  EXPECT_NE(bad(j), "");
  j = base;
  j["drop_probability"] = 1.5;
  EXPECT_NE(bad(j), "");
  EXPECT_THROW(Scenario::load(scenario_path("missing.scn")), Error);
}

TEST(Oracle, WindowEdges) {
  // report on day 2; the window opens 95 epochs before the report epoch
  const Seconds at = 2 * 86400;
  const Seconds open = at - 95 * 900;

  auto s = pair(open - 600, open, at);  // ends as the window opens
  EXPECT_TRUE(oracle_exposures(s).empty());
  expect_matches_oracle(s);

  s = pair(open - 300, open + 300, at);
  EXPECT_EQ(oracle_exposures(s).size(), 1u);
  expect_matches_oracle(s);

  s = pair(at + 600, at + 3600, at);  // after the report
  EXPECT_TRUE(oracle_exposures(s).empty());
  expect_matches_oracle(s);

  s = pair(at - 3600, at - 1800, at, false);  // positive without consent
  EXPECT_TRUE(oracle_exposures(s).empty());
  expect_matches_oracle(s);

  s = pair(36000, 39600, 3 * 86400 - 900);  // published after the run ends
  EXPECT_TRUE(oracle_exposures(s).empty());
  expect_matches_oracle(s);
}

TEST(Oracle, NonAdoptersNeverAlerted) {
  auto s = pair(36000, 39600, 86400);
  s.agents[1].adopter = false;
  EXPECT_TRUE(oracle_exposures(s).empty());
  EXPECT_EQ(oracle_exposures(s, false).size(), 1u);
  const auto r = run_scenario(s);
  EXPECT_TRUE(r.alerts.empty());
  EXPECT_EQ(r.agents[1].requests, 0u);
}

TEST(Simulator, DroppedRadioMeansNoAlert) {
  auto s = pair(36000, 39600, 86400);
  s.drop_probability = 1.0;
  const auto r = run_scenario(s);
  EXPECT_TRUE(r.alerts.empty());
  EXPECT_EQ(r.false_negatives, 1u);
}

TEST(Simulator, Deterministic) {
  RandomScenarioOptions o;
  o.agents = 15;
  o.days = 4;
  o.contacts = 40;
  const auto s = random_scenario(o, 99);
  EXPECT_EQ(random_scenario(o, 99).to_json(), s.to_json());
  EXPECT_EQ(run_scenario(s).to_json(), run_scenario(s).to_json());
}

TEST(Simulator, RandomScenariosMatchOracle) {
  for (const auto protocol : {agent::Protocol::core, agent::Protocol::core_strong_integrity, agent::Protocol::alt_sig}) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      RandomScenarioOptions o;
      o.agents = 12;
      o.days = 5;
      o.contacts = 40;
      o.positives = 3;
      o.protocol = protocol;
      o.params.delta = 192;
      const auto s = random_scenario(o, seed);
      const auto r = run_scenario(s);
      ASSERT_EQ(r.alerts, r.oracle) << agent::to_string(protocol) << " seed " << seed;
    }
  }
}

TEST(Simulator, ClockSkewWithinTolerance) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RandomScenarioOptions o;
    o.agents = 12;
    o.days = 4;
    o.contacts = 40;
    o.max_skew = 120;
    o.params.delta = 192;
    const auto s = random_scenario(o, seed);
    const auto r = run_scenario(s);
    EXPECT_EQ(r.alerts, r.oracle) << "seed " << seed;
  }
}

TEST(Attacks, ReplayDependsOnPublicationDelay) {
  const auto delayed = run_attack(Scenario::load(scenario_path("attacks/replay.scn")));
  EXPECT_EQ(delayed.false_alerts, 0u);
  EXPECT_FALSE(delayed.succeeded);
  EXPECT_GT(delayed.details["replayed"].get<int>(), 0);

  const auto immediate = run_attack(Scenario::load(scenario_path("attacks/replay_no_delay.scn")));
  EXPECT_GE(immediate.false_alerts, 1u);
  EXPECT_TRUE(immediate.succeeded);
}

TEST(Attacks, RelayWorksAgainstAlt) {
  const auto out = run_attack(Scenario::load(scenario_path("attacks/relay_alt.scn")));
  EXPECT_EQ(out.protocol, "alt-sig");
  EXPECT_TRUE(out.succeeded);
  EXPECT_GE(out.false_alerts, 1u);
}

TEST(Attacks, RelayBeyondToleranceFails) {
  auto s = Scenario::load(scenario_path("attacks/relay_alt.scn"));
  s.adversaries[0].params["latency"] = 600;
  const auto out = run_attack(s);
  EXPECT_EQ(out.false_alerts, 0u);
  EXPECT_FALSE(out.succeeded);
}

TEST(Attacks, SeedSharingAndFlood) {
  const auto shared = run_attack(Scenario::load(scenario_path("attacks/seed_sharing.scn")));
  EXPECT_TRUE(shared.succeeded);
  const auto flood = run_attack(Scenario::load(scenario_path("attacks/flood.scn")));
  EXPECT_EQ(flood.accepted_submissions, 10u);
  EXPECT_EQ(flood.rejected_submissions, 40u);
  EXPECT_FALSE(flood.succeeded);
}

TEST(Attacks, LinkageAcrossSites) {
  const auto out = run_attack(Scenario::load(scenario_path("attacks/linkage.scn")));
  EXPECT_TRUE(out.succeeded);
  EXPECT_EQ(out.linked_sites, 3u);
}

TEST(Attacks, DerivedSeedBlockedByStrongIntegrity) {
  const auto weak = run_attack(Scenario::load(scenario_path("attacks/derived_seed.scn")));
  EXPECT_TRUE(weak.succeeded);
  EXPECT_GT(weak.accepted_submissions, 0u);
  const auto strong = run_attack(Scenario::load(scenario_path("attacks/derived_seed_strong.scn")));
  EXPECT_FALSE(strong.succeeded);
  EXPECT_EQ(strong.accepted_submissions, 0u);
  EXPECT_GT(strong.rejected_submissions, 0u);
}

TEST(Attacks, DualVariantsSucceedWhereCoreDoesNot) {
  const auto framing = run_attack(Scenario::load(scenario_path("attacks/dual_framing.scn")));
  EXPECT_EQ(framing.protocol, "dual");
  EXPECT_TRUE(framing.succeeded);
  EXPECT_FALSE(framing.details["counterpart"]["succeeded"].get<bool>());
  EXPECT_EQ(framing.details["counterpart"]["false_alerts"], 0);

  const auto surveillance = run_attack(Scenario::load(scenario_path("attacks/dual_surveillance.scn")));
  EXPECT_TRUE(surveillance.succeeded);
  EXPECT_FALSE(surveillance.details["counterpart"]["succeeded"].get<bool>());
}

TEST(Bench, SchemaAndFits) {
  BenchOptions o;
  o.L = {1, 2, 4, 8};
  o.delta = 96;
  o.repetitions = 1;
  const auto rep = bench_check_cost(o);
  EXPECT_EQ(rep.rows.size(), 8u);
  EXPECT_GT(rep.t_g, 0);
  EXPECT_GT(rep.t_vrfy, 0);
  const auto j = rep.to_json();
  ASSERT_TRUE(j.contains("rows"));
  for (const auto& row : j["rows"]) {
    for (const auto* k : {"protocol", "L", "S", "delta", "seconds", "model_seconds"}) EXPECT_TRUE(row.contains(k)) << k;
  }
  EXPECT_EQ(rep.fits.size(), 2u);
  EXPECT_NE(rep.table().find("R^2"), std::string::npos);
}

TEST(Bench, LineFit) {
  const auto f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_NEAR(f.slope, 2, 1e-12);
  EXPECT_NEAR(f.intercept, 1, 1e-12);
  EXPECT_NEAR(f.r2, 1, 1e-12);
}

TEST(Adoption, FullAdoptionDetectsEverything) {
  RandomScenarioOptions o;
  o.agents = 8;
  o.days = 2;
  o.contacts = 20;
  o.positives = 2;
  o.params.delta = 96;
  const auto full = adoption_experiment(1.0, 10, o, 3);
  EXPECT_GT(full.exposures, 0u);
  EXPECT_EQ(full.detected, full.exposures);
  EXPECT_EQ(adoption_experiment(0.0, 10, o, 3).detected, 0u);
}
