#include <gtest/gtest.h>

#include "pact/agent.hpp"
#include "pact/registry.hpp"

using namespace pact;
using namespace pact::agent;
using nlohmann::json;

namespace {

constexpr Seconds kT0 = 1590969600;

// Forwards to the registry, or fails every call while down is set.
class Switch final : public net::Transport {
 public:
  explicit Switch(net::Transport& inner) : inner_(inner) {}
  net::Response send(const net::Request& r) override {
    if (down) throw net::TransportError("link down");
    return inner_.send(r);
  }
  bool down = false;

 private:
  net::Transport& inner_;
};

struct World {
  explicit World(Protocol protocol = Protocol::core, bool require_si = false) {
    params.delta = 96;
    auto c = registry::Config::defaults_for(params);
    c.delay = 0;
    c.shuffle_seed = 1;
    c.require_strong_integrity = require_si;
    reg = std::make_unique<registry::Registry>(c);
    local.mount("/", [this](const net::Request& r) { return reg->handle(r, now); });
    config.params = params;
    config.protocol = protocol;
  }

  Agent make(crypto::RandomSource& rng, net::Transport* t) { return Agent(config, rng, t, now); }

  core::Params params;
  Config config;
  Seconds now = kT0;
  std::unique_ptr<registry::Registry> reg;
  net::LocalTransport local{"phone"};
};

// Alice and Bob meet for an hour; Carol is elsewhere.
void meet(World& w, Agent& a, Agent& b, Agent& c) {
  for (Seconds t = kT0; t < kT0 + 3 * 3600; t += 300) {
    w.now = t;
    const auto pa = a.tick(t).payload;
    const auto pb = b.tick(t).payload;
    c.tick(t);
    if (t >= kT0 + 3600 && t < kT0 + 7200) {
      b.on_hear(pa, t);
      a.on_hear(pb, t);
    }
  }
}

}  // namespace

TEST(Agent, EndToEndCore) {
  World w;
  crypto::DeterministicRandom ra(1), rb(2), rc(3);
  net::SpyTransport sa(&w.local), sb(&w.local), sc(&w.local);
  auto alice = w.make(ra, &sa);
  auto bob = w.make(rb, &sb);
  auto carol = w.make(rc, &sc);
  meet(w, alice, bob, carol);
  EXPECT_GT(bob.store().size(), 0u);

  const auto out = alice.make_report(w.now, true);
  ASSERT_EQ(out.status, ReportStatus::submitted) << out.detail;
  w.reg->release_tick(w.now);

  std::vector<ExposureEvent> hooked;
  bob.set_risk_hook([&](const std::vector<ExposureEvent>& ev) { hooked = ev; });
  const auto alert = bob.sync_and_check(w.now);
  EXPECT_TRUE(alert.at_risk);
  EXPECT_EQ(hooked.size(), alert.events.size());
  EXPECT_FALSE(carol.sync_and_check(w.now).at_risk);
  EXPECT_FALSE(alice.sync_and_check(w.now).at_risk);
  EXPECT_EQ(bob.cursor(), 1u);

  // nothing new on a second sync
  EXPECT_FALSE(bob.sync_and_check(w.now).at_risk);
}

TEST(Agent, NonReporterSendsNothingAboutItself) {
  World w;
  crypto::DeterministicRandom ra(1), rb(2), rc(3);
  net::SpyTransport sa(&w.local), sb(&w.local), sc(&w.local);
  auto alice = w.make(ra, &sa);
  auto bob = w.make(rb, &sb);
  auto carol = w.make(rc, &sc);
  meet(w, alice, bob, carol);
  alice.make_report(w.now, true);
  w.reg->release_tick(w.now);
  for (int i = 0; i < 3; ++i) {
    bob.sync_and_check(w.now + i);
    carol.sync_and_check(w.now + i);
  }
  for (const auto* spy : {&sb, &sc}) {
    ASSERT_FALSE(spy->requests().empty());
    for (const auto& r : spy->requests()) {
      EXPECT_EQ(r.method, "GET");
      EXPECT_EQ(r.path, "/entries");
      EXPECT_TRUE(r.body.empty());
      std::set<std::string> keys;
      for (const auto& kv : r.query) keys.insert(kv.first);
      EXPECT_EQ(keys, (std::set<std::string>{"cursor", "limit"}));
    }
  }
  // the only uploads are Alice's
  std::size_t posts = 0;
  for (const auto& r : sa.requests()) posts += r.method == "POST";
  EXPECT_EQ(posts, 1u);
}

TEST(Agent, RefusedReportSendsZeroBytes) {
  World w;
  crypto::DeterministicRandom r(4);
  net::SpyTransport spy(&w.local);
  auto a = w.make(r, &spy);
  a.tick(w.now);
  const auto before = a.chain();
  const auto out = a.make_report(w.now, false);
  EXPECT_EQ(out.status, ReportStatus::refused);
  EXPECT_FALSE(out.entry.has_value());
  EXPECT_EQ(spy.requests().size(), 0u);
  EXPECT_EQ(spy.bytes_sent(), 0u);
  EXPECT_EQ(a.chain(), before);
}

TEST(Agent, ChainResetsOnlyOnAcceptance) {
  World w(Protocol::core, true);  // registry demands strong integrity
  crypto::DeterministicRandom r(5);
  Switch link(w.local);
  auto a = w.make(r, &link);
  w.now += 4 * 900;
  a.tick(w.now);
  const auto before = a.chain();

  auto out = a.make_report(w.now, true);
  EXPECT_EQ(out.status, ReportStatus::rejected);
  EXPECT_EQ(out.detail, "weak-integrity");
  EXPECT_EQ(a.chain(), before);

  link.down = true;
  out = a.make_report(w.now, true);
  EXPECT_EQ(out.status, ReportStatus::failed);
  EXPECT_EQ(a.chain(), before);

  // a strong-integrity agent against the same registry
  World s(Protocol::core_strong_integrity, true);
  crypto::DeterministicRandom r2(6);
  auto b = s.make(r2, &s.local);
  const auto t = s.now += 10 * 900;
  const auto first = b.tick(t).payload;
  out = b.make_report(t, true);
  ASSERT_EQ(out.status, ReportStatus::submitted) << out.detail;
  EXPECT_TRUE(out.entry->vk.has_value());
  EXPECT_NE(b.chain().current_id.bytes, first);
  EXPECT_NE(b.chain().window_seed, out.entry->window_seed);
  // the reported ids regenerate, including the one just broadcast
  const auto ids = core::regenerate(*out.entry, s.params);
  EXPECT_EQ(ids.back().id.bytes, first);
  for (const auto& id : ids) EXPECT_NE(id.id.bytes, b.chain().current_id.bytes);
}

TEST(Agent, FailedSyncKeepsCursor) {
  World w;
  crypto::DeterministicRandom ra(7), rb(8), rc(9);
  Switch link(w.local);
  auto alice = w.make(ra, &w.local);
  auto bob = w.make(rb, &link);
  auto carol = w.make(rc, nullptr);
  meet(w, alice, bob, carol);
  alice.make_report(w.now, true);
  w.reg->release_tick(w.now);

  link.down = true;
  EXPECT_THROW(bob.sync_and_check(w.now), net::TransportError);
  EXPECT_EQ(bob.cursor(), 0u);
  link.down = false;
  EXPECT_TRUE(bob.sync_and_check(w.now).at_risk);
  EXPECT_EQ(bob.cursor(), 1u);
  EXPECT_THROW(carol.sync_and_check(w.now), net::TransportError);
  EXPECT_EQ(carol.make_report(w.now, true).status, ReportStatus::failed);
}

TEST(Agent, AlertRedaction) {
  Alert a;
  a.at_risk = true;
  a.events = {{Bytes{1}, kT0 + 10, day_of(kT0)}, {Bytes{2}, kT0 + 86400, day_of(kT0) + 1}};
  a.redaction = Redaction::suppress_time;
  EXPECT_EQ(a.to_json(), (json{{"at_risk", true}}));
  a.redaction = Redaction::day;
  auto j = a.to_json();
  EXPECT_EQ(j["matches"], 2);
  EXPECT_EQ(j["days"].size(), 2u);
  EXPECT_FALSE(j.contains("times"));
  a.redaction = Redaction::none;
  EXPECT_EQ(a.to_json()["times"].size(), 2u);
  Alert quiet;
  quiet.redaction = Redaction::none;
  EXPECT_EQ(quiet.to_json(), (json{{"at_risk", false}}));
}

TEST(Agent, HeardPayloadValidation) {
  World w;
  crypto::DeterministicRandom r(10);
  auto a = w.make(r, nullptr);
  EXPECT_FALSE(a.on_hear(Bytes(5, 1), w.now));
  EXPECT_EQ(a.malformed_heard(), 1u);
  EXPECT_TRUE(a.on_hear(Bytes(16, 1), w.now));
  EXPECT_FALSE(a.on_hear(Bytes(16, 1), w.now));  // duplicate in the same epoch

  a.tick(w.now + 3600);
  const auto warn = a.tick(w.now);
  EXPECT_TRUE(warn.warning.has_value());
  EXPECT_EQ(a.warnings().size(), 1u);

  EXPECT_EQ(a.purge(w.now + w.params.infection_window() + 1), 1u);
  EXPECT_EQ(a.store().size(), 0u);
}

TEST(Agent, SnapshotRoundTrip) {
  World w;
  crypto::DeterministicRandom ra(11), rb(12), rc(13);
  auto alice = w.make(ra, &w.local);
  auto bob = w.make(rb, &w.local);
  auto carol = w.make(rc, &w.local);
  meet(w, alice, bob, carol);
  bob.sync_and_check(w.now);

  const auto snap = bob.snapshot();
  auto back = Agent::restore(snap, w.config, rb, &w.local);
  EXPECT_EQ(back.chain(), bob.chain());
  EXPECT_EQ(back.store().core_records(), bob.store().core_records());
  EXPECT_EQ(back.cursor(), bob.cursor());
  EXPECT_EQ(back.snapshot(), snap);

  // the restored agent still detects exposure
  alice.make_report(w.now, true);
  w.reg->release_tick(w.now);
  EXPECT_TRUE(back.sync_and_check(w.now).at_risk);

  auto other = w.config;
  other.params.dt = 600;
  EXPECT_THROW(Agent::restore(snap, other, rb, nullptr), Error);
  auto truncated = snap;
  truncated.resize(snap.size() - 3);
  EXPECT_THROW(Agent::restore(truncated, w.config, rb, nullptr), DecodeError);
  EXPECT_THROW(Agent::restore(Bytes(20, 0), w.config, rb, nullptr), DecodeError);
}

TEST(Agent, EndToEndAlt) {
  World w(Protocol::alt_sig);
  crypto::DeterministicRandom ra(14), rb(15), rc(16);
  net::SpyTransport sb(&w.local);
  auto alice = w.make(ra, &w.local);
  auto bob = w.make(rb, &sb);
  auto carol = w.make(rc, &w.local);
  meet(w, alice, bob, carol);
  EXPECT_GT(bob.store().alt_size(), 0u);

  // a broadcast replayed long after it was made is dropped
  const auto stale = alice.tick(w.now).payload;
  EXPECT_FALSE(bob.on_hear(stale, w.now + 600));
  EXPECT_EQ(bob.rejected_heard(), 1u);

  const auto out = alice.make_report(w.now, true);
  ASSERT_EQ(out.status, ReportStatus::submitted) << out.detail;
  EXPECT_EQ(out.alt_report->verification_keys.size(), 1u);
  w.reg->release_tick(w.now);
  const auto alert = bob.sync_and_check(w.now);
  EXPECT_TRUE(alert.at_risk);
  for (const auto& e : alert.events) EXPECT_FALSE(e.heard_at.has_value());
  EXPECT_FALSE(carol.sync_and_check(w.now).at_risk);
  EXPECT_EQ(bob.alt_cursor(), 1u);
  for (const auto& r : sb.requests()) EXPECT_EQ(r.path, "/alt/keys");
  // the ring restarted after the upload
  EXPECT_EQ(alice.keys().keys().size(), 1u);
  EXPECT_NE(alice.keys().keys().begin()->second.verification_key, out.alt_report->verification_keys[0]);
}

TEST(Agent, NarrowcastCheckSendsOnlyRegions) {
  crypto::DeterministicRandom rng(17);
  const auto auth = crypto::ed25519_keypair(rng);
  registry::SignaturePolicy policy;
  policy.add("dept", auth.pub, registry::Tier::healthcare);
  narrowcast::Server server(policy);
  const auto here = narrowcast::Location::from_degrees(40.7128, -74.0060);
  server.announce(narrowcast::sign_announcement({here, 100, kT0, kT0 + 3600}, to_bytes("visit"), "dept", auth.secret),
                  kT0);
  net::LocalTransport lt;
  lt.mount("/", [&](const net::Request& r) { return server.handle(r, kT0); });
  net::SpyTransport spy(&lt);

  World w;
  auto a = w.make(rng, nullptr);
  const std::vector<narrowcast::TracePoint> trace{{here, kT0 + 100}};
  const auto hits = a.check_narrowcast(spy, trace, 0, 1 << 20);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(to_string(hits[0]), "visit");
  const auto lat = std::to_string(here.lat_e7);
  for (const auto& r : spy.requests()) {
    for (const auto& [k, v] : r.query) EXPECT_NE(v, lat);
  }
}
