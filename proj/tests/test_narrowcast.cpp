#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "pact/narrowcast.hpp"

using namespace pact;
using namespace pact::narrowcast;
using nlohmann::json;

namespace {

constexpr Seconds kNow = 1591574400;

// Half-open cell membership checked in exact integers: x scaled by 2^bits
// against multiples of the unit cell (1e7 << top_bits).
bool in_cell(std::int64_t x_e7, std::int64_t l, int bits, int top_bits) {
  const __int128 x = static_cast<__int128>(x_e7) << bits;
  const __int128 w = static_cast<__int128>(10'000'000) << top_bits;
  if (l > 0) return l * w <= x && x < (l + 1) * w;
  if (l < 0) return (l - 1) * w <= x && x < l * w;
  return -w <= x && x < w;
}

struct Fixture {
  crypto::DeterministicRandom rng{42};
  crypto::KeyPair authority = crypto::ed25519_keypair(rng);
  registry::SignaturePolicy policy() const {
    registry::SignaturePolicy p;
    p.add("health-dept", authority.pub, registry::Tier::healthcare);
    return p;
  }
  NarrowcastEntry make(double lat, double lon, std::uint32_t radius, const std::string& msg, Seconds begin = kNow,
                       Seconds end = kNow + 3600) {
    return sign_announcement({Location::from_degrees(lat, lon), radius, begin, end}, to_bytes(msg), "health-dept",
                             authority.secret);
  }
};

}  // namespace

TEST(Labels, WholeDegreesAndNyc) {
  const auto nyc = Location::from_degrees(40.7128, -74.0060);
  const auto r = region_of(nyc, kIndexLatBits, kIndexLonBits);
  EXPECT_EQ(r.lat_prefix, 40);
  EXPECT_EQ(r.lon_prefix, -74);
  EXPECT_TRUE(contains(r, nyc));
  const auto b = bounds(r);
  EXPECT_DOUBLE_EQ(b.lat_lo, 40);
  EXPECT_DOUBLE_EQ(b.lat_hi, 41);
  EXPECT_DOUBLE_EQ(b.lon_lo, -75);
  EXPECT_DOUBLE_EQ(b.lon_hi, -74);

  EXPECT_EQ(lat_label(Location::from_degrees(0.5, 0).lat_e7, 8), 0);
  EXPECT_EQ(lat_label(Location::from_degrees(-0.5, 0).lat_e7, 8), 0);
  EXPECT_EQ(lat_label(Location::from_degrees(-1.0, 0).lat_e7, 8), 0);  // boundary goes up
  EXPECT_EQ(lat_label(Location::from_degrees(-1.5, 0).lat_e7, 8), -1);
  EXPECT_EQ(lat_label(Location::from_degrees(1.0, 0).lat_e7, 8), 1);
  EXPECT_EQ(lat_label(Location::from_degrees(90, 0).lat_e7, 0), 0);
  EXPECT_THROW(region_of(nyc, 33, 0), Error);
  EXPECT_THROW(region_of(Location::from_degrees(91, 0), 4, 4), Error);
}

TEST(Labels, CellMembershipProperty) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::int64_t> lat(-900'000'000, 900'000'000), lon(-1'800'000'000, 1'800'000'000);
  for (int i = 0; i < 20000; ++i) {
    const Location loc{lat(gen), lon(gen)};
    const int lb = static_cast<int>(gen() % (kMaxBits + 1)), ob = static_cast<int>(gen() % (kMaxBits + 1));
    const auto r = region_of(loc, lb, ob);
    ASSERT_TRUE(in_cell(loc.lat_e7, r.lat_prefix, lb, 8)) << loc.lat_e7 << " bits " << lb;
    ASSERT_TRUE(in_cell(loc.lon_e7, r.lon_prefix, ob, 9)) << loc.lon_e7 << " bits " << ob;
    ASSERT_NO_THROW(validate(r));
    // coarser regions contain finer ones
    if (lb > 0 && ob > 0) {
      const auto up = region_of(loc, lb - 1, ob - 1);
      const auto bf = bounds(r), bc = bounds(up);
      ASSERT_LE(bc.lat_lo, bf.lat_lo);
      ASSERT_GE(bc.lat_hi, bf.lat_hi);
      ASSERT_LE(bc.lon_lo, bf.lon_lo);
      ASSERT_GE(bc.lon_hi, bf.lon_hi);
    }
  }
  // exact boundaries at every precision
  for (int b = 0; b <= 16; ++b) {
    for (std::int64_t k = -3; k <= 3; ++k) {
      const std::int64_t x = (k * (std::int64_t{10'000'000} << 8)) >> b;
      if (x < -900'000'000 || x > 900'000'000) continue;
      ASSERT_TRUE(in_cell(x, lat_label(x, b), b, 8)) << "x=" << x << " b=" << b;
    }
  }
  EXPECT_THROW(validate(Region{5, 0, 0, 0}), Error);
}

TEST(Geometry, DistanceToBox) {
  const Box box{40, 41, -75, -74};
  EXPECT_EQ(distance_to_box(40.5, -74.5, box), 0);
  EXPECT_NEAR(distance_to_box(39, -74.5, box), haversine(39, -74.5, 40, -74.5), 1e-6);
  EXPECT_NEAR(distance_to_box(40.5, -73, box), haversine(40.5, -73, 40.5, -74), 5.0);
  EXPECT_NEAR(haversine(0, 0, 0, 1), kEarthRadius * std::numbers::pi / 180, 1e-6);
  Area a{Location::from_degrees(40.5, -73.99), 1000, 0, 1};
  EXPECT_TRUE(intersects(a, box));
  a.radius_m = 100;
  EXPECT_FALSE(intersects(a, box));
}

TEST(Server, AnnounceRejections) {
  Fixture f;
  Server server(f.policy());
  EXPECT_TRUE(server.announce(f.make(40.7, -74.0, 500, "ok"), kNow).accepted);

  auto forged = f.make(40.7, -74.0, 500, "ok");
  forged.message = to_bytes("changed");
  EXPECT_EQ(server.announce(forged, kNow).reason, RejectReason::bad_signature);

  auto stranger = f.make(40.7, -74.0, 500, "x");
  stranger.signer = "nobody";
  EXPECT_EQ(server.announce(stranger, kNow).reason, RejectReason::unauthorized);

  EXPECT_EQ(server.announce(f.make(40.7, -74.0, 5, "tiny"), kNow).reason, RejectReason::radius);
  EXPECT_EQ(server.announce(f.make(40.7, -74.0, 500, "t", kNow, kNow - 1), kNow).reason, RejectReason::area);
  EXPECT_EQ(server.announce(f.make(95, -74.0, 500, "t"), kNow).reason, RejectReason::area);
  EXPECT_EQ(server.announce(f.make(40.7, -74.0, 500, std::string(kMaxMessageBytes + 1, 'x')), kNow).reason,
            RejectReason::too_large);
  EXPECT_EQ(server.size(), 1u);
}

TEST(Server, IndexMatchesScanAndSizeIsExact) {
  Fixture f;
  Server server(f.policy());
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> lat(-89, 89), lon(-179.9, 179.9), near(-2, 2);
  std::uniform_int_distribution<std::uint32_t> radius(10, 300000);
  for (int i = 0; i < 300; ++i) {
    // half clustered around NYC, some straddling the antimeridian and poles
    const bool cluster = i % 2 == 0;
    const double la = cluster ? 40.7 + near(gen) : lat(gen);
    const double lo = cluster ? -74 + near(gen) : (i % 7 == 0 ? 179.95 : lon(gen));
    ASSERT_TRUE(server.announce(f.make(la, lo, radius(gen), "m" + std::to_string(i)), kNow + i).accepted);
  }
  EXPECT_GT(server.index_cells(), 0u);
  for (int q = 0; q < 200; ++q) {
    const bool cluster = q % 2 == 0;
    const auto here = Location::from_degrees(cluster ? 40.7 + near(gen) : lat(gen), cluster ? -74 + near(gen) : lon(gen));
    const int bits = static_cast<int>(gen() % 14);
    const auto region = region_of(here, bits, bits + (q % 2));
    const Seconds since = q % 3 == 0 ? kNow + 150 : 0;
    auto a = server.get_messages(region, since);
    auto b = server.scan(region, since);
    auto key = [](const NarrowcastEntry& e) { return e.message; };
    std::vector<Bytes> ka, kb;
    for (const auto& e : a) ka.push_back(key(e));
    for (const auto& e : b) kb.push_back(key(e));
    std::sort(ka.begin(), ka.end());
    std::sort(kb.begin(), kb.end());
    ASSERT_EQ(ka, kb) << "query " << q;
    ASSERT_EQ(server.how_big(region, since), messages_body(a).size());
  }
}

TEST(Query, OnlyRegionFieldsAccepted) {
  const Region r{40, -74, 8, 9};
  auto q = region_query(r, 123);
  EXPECT_EQ(q.size(), 5u);
  const auto [back, since] = parse_region_query(q);
  EXPECT_EQ(back, r);
  EXPECT_EQ(since, 123);
  q["lat"] = "40.7128";
  EXPECT_THROW(parse_region_query(q), DecodeError);
  q.erase("lat");
  q["lat_bits"] = "40";
  EXPECT_THROW(parse_region_query(q), DecodeError);
  q.erase("lat_bits");
  EXPECT_THROW(parse_region_query(q), DecodeError);
}

TEST(Client, NegotiatesAndMatchesLocally) {
  Fixture f;
  Server server(f.policy());
  for (int i = 0; i < 40; ++i) server.announce(f.make(40.70 + 0.001 * i, -74.0, 200, "nyc" + std::to_string(i)), kNow);
  server.announce(f.make(48.85, 2.35, 1000, "paris"), kNow);
  server.announce(f.make(40.7128, -74.0060, 50, "here", kNow, kNow + 600), kNow);

  net::LocalTransport lt("client");
  lt.mount("/", [&](const net::Request& r) { return server.handle(r, kNow); });
  net::SpyTransport spy(&lt);
  Client client(spy);

  const auto here = Location::from_degrees(40.7128, -74.0060);
  const auto region = negotiate_region(here, 4096, [&](const Region& r) { return client.how_big(r, 0); });
  EXPECT_TRUE(contains(region, here));
  EXPECT_LE(client.how_big(region, 0), 4096u);
  const auto msgs = client.get_messages(region, 0);
  for (const auto& m : msgs) EXPECT_NE(to_string(m.message), "paris");

  for (const auto& req : spy.requests()) {
    EXPECT_EQ(req.method, "GET");
    EXPECT_TRUE(req.body.empty());
    std::set<std::string> keys;
    for (const auto& kv : req.query) keys.insert(kv.first);
    EXPECT_EQ(keys, (std::set<std::string>{"lat_bits", "lat_prefix", "lon_bits", "lon_prefix", "since"}));
  }

  const std::vector<TracePoint> trace{{here, kNow + 60}};
  const auto hits = match_trace(trace, msgs);
  ASSERT_FALSE(hits.empty());
  EXPECT_NE(std::find(hits.begin(), hits.end(), to_bytes("here")), hits.end());
  const std::vector<TracePoint> late{{here, kNow + 700}};
  const auto later = match_trace(late, msgs);
  EXPECT_EQ(std::find(later.begin(), later.end(), to_bytes("here")), later.end());
}

TEST(Http, AnnounceAndQuery) {
  Fixture f;
  Server server(f.policy());
  net::HttpServer http([&](const net::Request& r) { return server.handle(r, kNow); });
  const int port = http.bind("127.0.0.1", 0);
  std::thread th([&] { http.listen(); });
  net::HttpTransport transport("http://127.0.0.1:" + std::to_string(port));
  Client client(transport);

  EXPECT_TRUE(client.announce(f.make(40.7, -74.0, 500, "hello")).accepted);
  auto bad = f.make(40.7, -74.0, 500, "x");
  bad.signer = "nobody";
  const auto r = client.announce(bad);
  EXPECT_FALSE(r.accepted);
  EXPECT_EQ(r.reason, RejectReason::unauthorized);

  const auto region = region_of(Location::from_degrees(40.7, -74.0), 8, 9);
  const auto msgs = client.get_messages(region, 0);
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].received_at, kNow);
  EXPECT_EQ(client.how_big(region, 0), messages_body(msgs).size());
  EXPECT_EQ(transport.send({"GET", "/narrowcast/messages", {{"lat", "1"}}, "", ""}).status, 400);

  http.stop();
  th.join();
}
