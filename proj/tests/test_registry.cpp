#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "pact/registry.hpp"

using namespace pact;
using namespace pact::registry;
using nlohmann::json;

namespace {

constexpr Seconds kNow = 1591574400;

core::Params params() { return core::Params{}; }

Config config() {
  auto c = Config::defaults_for(params());
  c.shuffle_seed = 7;
  return c;
}

core::Entry entry(crypto::RandomSource& rng, Seconds t_end = kNow - 900, std::int64_t epochs = 96) {
  core::Entry e;
  e.window_seed = rng.bytes(16);
  e.t_end = t_end;
  e.t_start = t_end - (epochs - 1) * 900;
  return e;
}

core::Entry signed_by(core::Entry e, const std::string& cert, const crypto::KeyPair& kp) {
  e.signatures.push_back({cert, crypto::sign(kp.secret, core::signing_bytes(e))});
  return e;
}

std::filesystem::path temp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pact-reg-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove(p);
  std::filesystem::remove(p.string() + ".idx");
  return p;
}

}  // namespace

TEST(Policy, JsonRoundTripAndValidation) {
  crypto::DeterministicRandom rng(1);
  SignaturePolicy p;
  const auto kp = crypto::ed25519_keypair(rng);
  p.add("clinic-1", kp.pub, Tier::healthcare);
  p.add("app", crypto::ed25519_keypair(rng).pub, Tier::self_report);
  const auto back = SignaturePolicy::from_json(p.to_json());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.find("clinic-1")->vk, kp.pub);
  EXPECT_EQ(back.find("clinic-1")->tier, Tier::healthcare);
  EXPECT_EQ(back.find("nobody"), nullptr);
  EXPECT_THROW(p.add("", kp.pub, Tier::healthcare), Error);
  EXPECT_THROW(p.add("x", kp.pub, Tier::none), Error);
  EXPECT_THROW(SignaturePolicy::from_json(json{{"signers", json::array({{{"cert", "a"}}})}}), DecodeError);
  EXPECT_EQ(tier_from_string("healthcare-validated"), Tier::healthcare);
  EXPECT_THROW(tier_from_string("bogus"), Error);

  const auto path = temp_path("policy");
  p.save(path.string());
  EXPECT_EQ(SignaturePolicy::load(path.string()).to_json(), p.to_json());
  std::filesystem::remove(path);
}

TEST(Submit, RejectionsInOrder) {
  crypto::DeterministicRandom rng(2);
  auto c = config();
  Registry reg(c);

  auto bad_len = entry(rng);
  bad_len.window_seed.pop_back();
  EXPECT_EQ(reg.submit(bad_len, kNow).reason, RejectReason::malformed);

  auto inverted = entry(rng);
  std::swap(inverted.t_start, inverted.t_end);
  EXPECT_EQ(reg.submit(inverted, kNow).reason, RejectReason::malformed);

  // malformed wins over future
  auto both = entry(rng, kNow + 10000);
  both.window_seed.clear();
  EXPECT_EQ(reg.submit(both, kNow).reason, RejectReason::malformed);

  EXPECT_EQ(reg.submit(entry(rng, kNow + 301), kNow).reason, RejectReason::future);
  EXPECT_TRUE(reg.submit(entry(rng, kNow + 300), kNow).accepted);

  auto old = entry(rng);
  old.t_start = kNow - c.max_report_age - 1;
  old.t_end = old.t_start + 900;
  EXPECT_EQ(reg.submit(old, kNow).reason, RejectReason::stale);

  auto wide = entry(rng, kNow - 900, 1344 + 3);  // one partial epoch of slack is allowed
  EXPECT_EQ(reg.submit(wide, kNow).reason, RejectReason::span);

  auto unknown = signed_by(entry(rng), "ghost", crypto::ed25519_keypair(rng));
  const auto r = reg.submit(unknown, kNow);
  EXPECT_EQ(r.reason, RejectReason::unknown_signer);
  EXPECT_EQ(r.detail, "ghost");
  EXPECT_EQ(http_status(*r.reason), 403);

  const auto e = entry(rng);
  EXPECT_TRUE(reg.submit(e, kNow).accepted);
  EXPECT_EQ(reg.submit(e, kNow).reason, RejectReason::duplicate);
  EXPECT_EQ(reg.pending_count(), 2u);
}

TEST(Submit, SignaturesAndTiers) {
  crypto::DeterministicRandom rng(3);
  const auto clinic = crypto::ed25519_keypair(rng);
  const auto app = crypto::ed25519_keypair(rng);
  SignaturePolicy policy;
  policy.add("clinic", clinic.pub, Tier::healthcare);
  policy.add("app", app.pub, Tier::self_report);
  Registry reg(config(), policy);

  EXPECT_EQ(reg.submit(entry(rng), kNow).tier, Tier::none);
  EXPECT_EQ(reg.submit(signed_by(entry(rng), "app", app), kNow).tier, Tier::self_report);
  EXPECT_EQ(reg.submit(signed_by(signed_by(entry(rng), "app", app), "clinic", clinic), kNow).tier, Tier::healthcare);

  EXPECT_EQ(reg.submit(signed_by(entry(rng), "clinic", app), kNow).reason, RejectReason::bad_signature);
  auto twice = signed_by(signed_by(entry(rng), "app", app), "app", app);
  EXPECT_EQ(reg.submit(twice, kNow).reason, RejectReason::malformed);
}

TEST(Submit, StrongIntegrityPolicy) {
  crypto::DeterministicRandom rng(4);
  auto c = config();
  c.require_strong_integrity = true;
  Registry reg(c);
  const auto kp = crypto::ed25519_keypair(rng);

  EXPECT_EQ(reg.submit(entry(rng), kNow).reason, RejectReason::weak_integrity);
  const auto good = core::sign_entry(entry(rng), kp);
  EXPECT_TRUE(reg.submit(good, kNow).accepted);

  auto tampered = core::sign_entry(entry(rng), kp);
  tampered.t_start -= 900;
  EXPECT_EQ(reg.submit(tampered, kNow).reason, RejectReason::bad_signature);

  auto half = entry(rng);
  half.vk = kp.pub;
  EXPECT_EQ(reg.submit(half, kNow).reason, RejectReason::malformed);
}

TEST(Publish, DelayedAndShuffled) {
  crypto::DeterministicRandom rng(5);
  auto c = config();
  c.rate_limit = 0;
  Registry reg(c);
  std::vector<Bytes> order;
  for (int i = 0; i < 20; ++i) {
    const auto e = entry(rng);
    order.push_back(e.window_seed);
    const auto r = reg.submit(e, kNow + i);
    EXPECT_EQ(r.release_at, kNow + i + 1800);
  }
  EXPECT_EQ(reg.release_tick(kNow + 1799), 0u);
  EXPECT_EQ(reg.fetch(0).entries.size(), 0u);
  EXPECT_EQ(reg.release_tick(kNow + 1810), 11u);
  EXPECT_EQ(reg.release_tick(kNow + 1900), 9u);
  EXPECT_EQ(reg.pending_count(), 0u);

  const auto all = reg.fetch(0);
  ASSERT_EQ(all.entries.size(), 20u);
  std::vector<Bytes> got;
  for (const auto& p : all.entries) got.push_back(p.entry.window_seed);
  EXPECT_NE(got, order);
  // release batches never mix
  std::set<Bytes> first(order.begin(), order.begin() + 11);
  for (int i = 0; i < 11; ++i) EXPECT_TRUE(first.count(got[i]));
  for (const auto& a : reg.audit()) EXPECT_GE(a.published_at - a.submitted_at, 1800);
}

TEST(Publish, NoShuffleKeepsOrder) {
  crypto::DeterministicRandom rng(6);
  auto c = config();
  c.shuffle = false;
  c.delay = 0;
  Registry reg(c);
  std::vector<Bytes> order;
  for (int i = 0; i < 5; ++i) {
    const auto e = entry(rng);
    order.push_back(e.window_seed);
    reg.submit(e, kNow);
  }
  EXPECT_EQ(reg.release_tick(kNow), 5u);
  const auto all = reg.fetch(0);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(all.entries[i].entry.window_seed, order[i]);
}

TEST(Fetch, CursorPaging) {
  crypto::DeterministicRandom rng(7);
  auto c = config();
  c.delay = 0;
  c.rate_limit = 0;
  Registry reg(c);
  for (int i = 0; i < 25; ++i) reg.submit(entry(rng), kNow);
  reg.release_tick(kNow);
  std::uint64_t cursor = 0;
  std::size_t total = 0;
  for (;;) {
    const auto page = reg.fetch(cursor, 10);
    if (page.entries.empty()) break;
    total += page.entries.size();
    EXPECT_EQ(page.next_cursor, cursor + page.entries.size());
    cursor = page.next_cursor;
  }
  EXPECT_EQ(total, 25u);
  EXPECT_EQ(reg.fetch(1000).next_cursor, 1000u);
}

TEST(RateLimit, PerSourceWindowAndHealthcareExempt) {
  crypto::DeterministicRandom rng(8);
  const auto clinic = crypto::ed25519_keypair(rng);
  SignaturePolicy policy;
  policy.add("clinic", clinic.pub, Tier::healthcare);
  auto c = config();
  c.rate_limit = 3;
  Registry reg(c, policy);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(reg.submit(entry(rng), kNow, "a").accepted);
  EXPECT_EQ(reg.submit(entry(rng), kNow, "a").reason, RejectReason::rate_limited);
  EXPECT_TRUE(reg.submit(entry(rng), kNow, "b").accepted);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(reg.submit(signed_by(entry(rng), "clinic", clinic), kNow, "a").accepted);
  EXPECT_TRUE(reg.submit(entry(rng), kNow + 3600, "a").accepted);
  // rejected duplicates do not use up quota
  Registry reg2(c);
  const auto e = entry(rng);
  reg2.submit(e, kNow, "c");
  for (int i = 0; i < 5; ++i) reg2.submit(e, kNow, "c");
  EXPECT_TRUE(reg2.submit(entry(rng), kNow, "c").accepted);
}

TEST(Countersign, OnlyGrows) {
  crypto::DeterministicRandom rng(9);
  const auto clinic = crypto::ed25519_keypair(rng);
  SignaturePolicy policy;
  policy.add("clinic", clinic.pub, Tier::healthcare);
  auto c = config();
  c.delay = 0;
  Registry reg(c, policy);
  const auto e = entry(rng);
  reg.submit(e, kNow);
  const auto sig = crypto::sign(clinic.secret, core::signing_bytes(e));

  EXPECT_EQ(reg.countersign(e.window_seed, "ghost", sig, kNow).reason, RejectReason::unknown_signer);
  EXPECT_EQ(reg.countersign(rng.bytes(16), "clinic", sig, kNow).reason, RejectReason::not_found);
  auto wrong = sig;
  wrong[0] ^= 1;
  EXPECT_EQ(reg.countersign(e.window_seed, "clinic", wrong, kNow).reason, RejectReason::bad_signature);

  const auto r = reg.countersign(e.window_seed, "clinic", sig, kNow);
  EXPECT_TRUE(r.accepted);
  EXPECT_EQ(r.tier, Tier::healthcare);
  EXPECT_TRUE(reg.countersign(e.window_seed, "clinic", wrong, kNow).accepted);  // already present
  reg.release_tick(kNow);
  const auto pub = reg.fetch(0).entries.at(0);
  EXPECT_EQ(pub.tier, Tier::healthcare);
  EXPECT_EQ(pub.entry.signatures.size(), 1u);
  EXPECT_EQ(pub.entry.window_seed, e.window_seed);
}

TEST(Alt, GroupedAndUngrouped) {
  crypto::DeterministicRandom rng(10);
  alt::AltReport report;
  for (int i = 0; i < 3; ++i) report.verification_keys.push_back(crypto::ed25519_keypair(rng).pub);

  auto c = config();
  c.delay = 0;
  Registry grouped(c);
  EXPECT_TRUE(grouped.submit_alt(report, kNow).accepted);
  EXPECT_EQ(grouped.submit_alt(report, kNow).reason, RejectReason::duplicate);
  EXPECT_EQ(grouped.release_tick(kNow), 1u);
  EXPECT_EQ(grouped.fetch_alt(0).groups.at(0).keys, report.verification_keys);

  c.alt_publication = AltPublication::ungrouped;
  Registry loose(c);
  loose.submit_alt(report, kNow);
  EXPECT_EQ(loose.release_tick(kNow), 3u);
  for (const auto& g : loose.fetch_alt(0).groups) EXPECT_EQ(g.keys.size(), 1u);

  EXPECT_EQ(loose.submit_alt({}, kNow).reason, RejectReason::malformed);
  alt::AltReport repeated{{report.verification_keys[0], report.verification_keys[0]}};
  EXPECT_EQ(loose.submit_alt(repeated, kNow).reason, RejectReason::malformed);
  alt::AltReport too_many;
  for (int i = 0; i < 15; ++i) too_many.verification_keys.push_back(crypto::ed25519_keypair(rng).pub);
  EXPECT_EQ(loose.submit_alt(too_many, kNow).reason, RejectReason::span);
}

TEST(Log, ReplayRestoresStateAndDropsTornTail) {
  crypto::DeterministicRandom rng(11);
  const auto clinic = crypto::ed25519_keypair(rng);
  SignaturePolicy policy;
  policy.add("clinic", clinic.pub, Tier::healthcare);
  const auto path = temp_path("log");
  auto c = config();
  c.log_path = path.string();

  core::Entry first = entry(rng), second = entry(rng);
  alt::AltReport keys{{crypto::ed25519_keypair(rng).pub}};
  {
    Registry reg(c, policy);
    reg.submit(first, kNow);
    reg.submit_alt(keys, kNow);
    reg.release_tick(kNow + 1800);
    reg.countersign(first.window_seed, "clinic", crypto::sign(clinic.secret, core::signing_bytes(first)), kNow + 1900);
    reg.submit(second, kNow + 2000);
  }
  const auto size = std::filesystem::file_size(path);
  EXPECT_EQ(std::filesystem::file_size(path.string() + ".idx"), 6u * 8u);
  {
    std::ofstream torn(path, std::ios::binary | std::ios::app);
    torn.write("\x01\x00\x00\x10", 4);
  }
  {
    Registry reg(c, policy);
    EXPECT_EQ(std::filesystem::file_size(path), size);
    EXPECT_EQ(reg.published_count(), 1u);
    EXPECT_EQ(reg.pending_count(), 1u);
    EXPECT_EQ(reg.fetch_alt(0).groups.size(), 1u);
    const auto pub = reg.fetch(0).entries.at(0);
    EXPECT_EQ(pub.entry.window_seed, first.window_seed);
    EXPECT_EQ(pub.tier, Tier::healthcare);
    EXPECT_EQ(pub.published_at, kNow + 1800);
    EXPECT_EQ(reg.submit(first, kNow + 2100).reason, RejectReason::duplicate);
    EXPECT_EQ(reg.release_tick(kNow + 4000), 1u);
  }
  {
    Registry reg(c, policy);
    EXPECT_EQ(reg.published_count(), 2u);
    EXPECT_EQ(reg.pending_count(), 0u);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".idx");
}

TEST(Http, RoutesInProcess) {
  crypto::DeterministicRandom rng(12);
  auto c = config();
  c.delay = 0;
  Registry reg(c);

  net::Request health;
  health.path = "/health";
  EXPECT_EQ(json::parse(reg.handle(health, kNow).body)["status"], "ok");

  const auto e = entry(rng);
  net::Request post{"POST", "/report", {}, json{{"entry", to_base64(core::encode_entry(e))}}.dump(), "1.2.3.4"};
  auto res = reg.handle(post, kNow);
  EXPECT_EQ(res.status, 200);
  auto body = json::parse(res.body);
  EXPECT_TRUE(body["accepted"].get<bool>());
  EXPECT_EQ(body["release_at"], kNow);

  res = reg.handle(post, kNow);
  EXPECT_EQ(res.status, 409);
  EXPECT_EQ(json::parse(res.body)["reason"], "duplicate");

  net::Request as_json{"POST", "/report", {}, json{{"entry", core::entry_to_json(entry(rng))}}.dump(), "x"};
  EXPECT_EQ(reg.handle(as_json, kNow).status, 200);

  net::Request future{"POST", "/report", {}, json{{"entry", core::entry_to_json(entry(rng, kNow + 5000))}}.dump(), "x"};
  EXPECT_EQ(reg.handle(future, kNow).status, 422);

  EXPECT_EQ(reg.handle({"POST", "/report", {}, "not json", "x"}, kNow).status, 400);
  EXPECT_EQ(reg.handle({"POST", "/report", {}, R"({"entry":"!!"})", "x"}, kNow).status, 400);
  EXPECT_EQ(reg.handle({"GET", "/nothing", {}, "", "x"}, kNow).status, 404);

  alt::AltReport keys{{crypto::ed25519_keypair(rng).pub}};
  net::Request alt_post{"POST", "/alt/report", {}, json{{"report", to_base64(alt::encode_report(keys))}}.dump(), "y"};
  EXPECT_EQ(reg.handle(alt_post, kNow).status, 200);

  reg.release_tick(kNow);
  net::Request list{"GET", "/entries", {{"cursor", "0"}, {"limit", "1"}}, "", "x"};
  body = json::parse(reg.handle(list, kNow).body);
  EXPECT_EQ(body["entries"].size(), 1u);
  EXPECT_EQ(body["next_cursor"], 1);
  const auto back = published_from_json(body["entries"][0], params());
  EXPECT_EQ(back.entry.window_seed.size(), 16u);

  body = json::parse(reg.handle({"GET", "/alt/keys", {}, "", "x"}, kNow).body);
  EXPECT_EQ(body["groups"][0]["keys"][0], to_base64(keys.verification_keys[0]));
  EXPECT_EQ(reg.handle({"GET", "/entries", {{"cursor", "abc"}}, "", "x"}, kNow).status, 400);
}

TEST(Http, OverTheNetwork) {
  crypto::DeterministicRandom rng(13);
  auto c = config();
  c.delay = 0;
  Registry reg(c);
  net::HttpServer server([&](const net::Request& r) { return reg.handle(r, kNow); });
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen(); });

  net::HttpTransport client("http://127.0.0.1:" + std::to_string(port));
  const auto e = entry(rng);
  auto res = client.send({"POST", "/report", {}, json{{"entry", to_base64(core::encode_entry(e))}}.dump(), ""});
  EXPECT_EQ(res.status, 200);
  reg.release_tick(kNow);
  res = client.send({"GET", "/entries", {{"cursor", "0"}}, "", ""});
  const auto body = json::parse(res.body);
  ASSERT_EQ(body["entries"].size(), 1u);
  EXPECT_EQ(published_from_json(body["entries"][0], params()).entry, e);

  server.stop();
  th.join();
  net::HttpTransport dead("http://127.0.0.1:" + std::to_string(port), 1);
  EXPECT_THROW(dead.send({"GET", "/health", {}, "", ""}), net::TransportError);
}
