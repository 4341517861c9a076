#include "pact/narrowcast.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <numbers>

namespace pact::narrowcast {
namespace {

using nlohmann::json;

constexpr std::int64_t kE7 = 10'000'000;
constexpr double kIndexMargin = 1e-6;  // degrees added around index cells

std::int64_t floor_div(__int128 a, __int128 b) {
  __int128 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return static_cast<std::int64_t>(q);
}

void check_bits(int bits) {
  if (bits < 0 || bits > kMaxBits) throw Error("precision must be within [0, " + std::to_string(kMaxBits) + "]");
}

// top_bits is 8 for latitude and 9 for longitude: the exponent of the cell
// width at zero precision.
std::int64_t label(std::int64_t x_e7, int bits, int top_bits) {
  check_bits(bits);
  const __int128 num = static_cast<__int128>(x_e7) << bits;
  const __int128 den = static_cast<__int128>(kE7) << top_bits;
  const auto q = floor_div(num, den);
  return x_e7 < 0 ? q + 1 : q;
}

// Label at `bits - k` of the cell labelled `l` at `bits`.
std::int64_t coarsen(std::int64_t l, int k) {
  if (l > 0) return l >> k;
  if (l < 0) return floor_div(l - 1, std::int64_t{1} << k) + 1;
  return 0;
}

std::pair<double, double> cell_range(std::int64_t l, int bits, int top_bits) {
  const double w = std::ldexp(1.0, top_bits - bits);
  if (l > 0) return {static_cast<double>(l) * w, static_cast<double>(l + 1) * w};
  if (l < 0) return {static_cast<double>(l - 1) * w, static_cast<double>(l) * w};
  return {-w, w};
}

double rad(double deg) { return deg * std::numbers::pi / 180.0; }

std::int64_t to_e7(double deg) { return static_cast<std::int64_t>(std::llround(deg * 1e7)); }

// Index labels on one axis that a region of the given precision covers.
std::vector<std::int64_t> index_labels(std::int64_t prefix, int bits, int index_bits, std::int64_t lo_label,
                                       std::int64_t hi_label) {
  std::vector<std::int64_t> out;
  if (bits >= index_bits) {
    out.push_back(coarsen(prefix, bits - index_bits));
    return out;
  }
  for (std::int64_t l = lo_label; l <= hi_label; ++l) {
    if (coarsen(l, index_bits - bits) == prefix) out.push_back(l);
  }
  return out;
}

Box index_box(std::int64_t lat_l, std::int64_t lon_l) {
  return bounds(Region{lat_l, lon_l, kIndexLatBits, kIndexLonBits});
}

std::int64_t parse_int(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end()) throw DecodeError("missing query parameter " + key);
  std::int64_t v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DecodeError("bad integer for " + key);
  return v;
}

AnnounceResult reject(RejectReason r, std::string detail = {}) { return {false, r, std::move(detail)}; }

}  // namespace

Location Location::from_degrees(double lat, double lon) { return {to_e7(lat), to_e7(lon)}; }

bool Location::valid() const {
  return lat_e7 >= -90 * kE7 && lat_e7 <= 90 * kE7 && lon_e7 >= -180 * kE7 && lon_e7 <= 180 * kE7;
}

std::int64_t lat_label(std::int64_t lat_e7, int bits) { return label(lat_e7, bits, 8); }
std::int64_t lon_label(std::int64_t lon_e7, int bits) { return label(lon_e7, bits, 9); }

Region region_of(const Location& loc, int lat_bits, int lon_bits) {
  if (!loc.valid()) throw Error("coordinates out of range");
  check_bits(lat_bits);
  check_bits(lon_bits);
  return {lat_label(loc.lat_e7, lat_bits), lon_label(loc.lon_e7, lon_bits), lat_bits, lon_bits};
}

void validate(const Region& r) {
  check_bits(r.lat_bits);
  check_bits(r.lon_bits);
  if (r.lat_prefix < lat_label(-90 * kE7, r.lat_bits) || r.lat_prefix > lat_label(90 * kE7, r.lat_bits)) {
    throw Error("latitude prefix not representable at this precision");
  }
  if (r.lon_prefix < lon_label(-180 * kE7, r.lon_bits) || r.lon_prefix > lon_label(180 * kE7, r.lon_bits)) {
    throw Error("longitude prefix not representable at this precision");
  }
}

Box bounds(const Region& r) {
  auto [lat_lo, lat_hi] = cell_range(r.lat_prefix, r.lat_bits, 8);
  auto [lon_lo, lon_hi] = cell_range(r.lon_prefix, r.lon_bits, 9);
  return {std::max(lat_lo, -90.0), std::min(lat_hi, 90.0), std::max(lon_lo, -180.0), std::min(lon_hi, 180.0)};
}

bool contains(const Region& r, const Location& loc) {
  return lat_label(loc.lat_e7, r.lat_bits) == r.lat_prefix && lon_label(loc.lon_e7, r.lon_bits) == r.lon_prefix;
}

double haversine(double lat1, double lon1, double lat2, double lon2) {
  const double dlat = rad(lat2 - lat1);
  const double dlon = rad(lon2 - lon1);
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(rad(lat1)) * std::cos(rad(lat2)) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2 * kEarthRadius * std::asin(std::min(1.0, std::sqrt(a)));
}

double distance_to_box(double lat, double lon, const Box& box) {
  if (lon >= box.lon_lo && lon <= box.lon_hi) {
    if (lat < box.lat_lo) return kEarthRadius * rad(box.lat_lo - lat);
    if (lat > box.lat_hi) return kEarthRadius * rad(lat - box.lat_hi);
    return 0;
  }
  // nearest point on each bounding meridian, clamped to the latitude band
  double best = std::numeric_limits<double>::infinity();
  for (double edge : {box.lon_lo, box.lon_hi}) {
    const double dl = rad(lon - edge);
    const double phi = rad(lat);
    double closest = std::atan2(std::sin(phi), std::cos(phi) * std::cos(dl)) * 180.0 / std::numbers::pi;
    closest = std::clamp(closest, box.lat_lo, box.lat_hi);
    best = std::min(best, haversine(lat, lon, closest, edge));
  }
  return best;
}

bool intersects(const Area& area, const Box& box) {
  return distance_to_box(area.center.lat(), area.center.lon(), box) <= static_cast<double>(area.radius_m);
}

Bytes signing_bytes(const Area& area, ByteView message) {
  Bytes out;
  put_u64(out, static_cast<std::uint64_t>(area.center.lat_e7));
  put_u64(out, static_cast<std::uint64_t>(area.center.lon_e7));
  put_u32(out, area.radius_m);
  put_u64(out, static_cast<std::uint64_t>(area.t_begin));
  put_u64(out, static_cast<std::uint64_t>(area.t_end));
  put_bytes(out, message);
  return out;
}

NarrowcastEntry sign_announcement(const Area& area, Bytes message, const std::string& signer,
                                  const crypto::SecretKey& key) {
  NarrowcastEntry e;
  e.area = area;
  e.message = std::move(message);
  e.signer = signer;
  e.signature = crypto::sign(key, signing_bytes(e.area, e.message));
  return e;
}

json entry_to_json(const NarrowcastEntry& e) {
  return json{{"area",
               {{"lat_e7", e.area.center.lat_e7},
                {"lon_e7", e.area.center.lon_e7},
                {"radius_m", e.area.radius_m},
                {"t_begin", e.area.t_begin},
                {"t_end", e.area.t_end}}},
              {"message", to_base64(e.message)},
              {"received_at", e.received_at},
              {"signature", to_base64(e.signature)},
              {"signer", e.signer}};
}

NarrowcastEntry entry_from_json(const json& j) {
  try {
    NarrowcastEntry e;
    const auto& a = j.at("area");
    e.area.center.lat_e7 = a.at("lat_e7").get<std::int64_t>();
    e.area.center.lon_e7 = a.at("lon_e7").get<std::int64_t>();
    e.area.radius_m = a.at("radius_m").get<std::uint32_t>();
    e.area.t_begin = a.at("t_begin").get<Seconds>();
    e.area.t_end = a.at("t_end").get<Seconds>();
    e.message = from_base64(j.at("message").get<std::string>());
    e.signature = crypto::signature_from(from_base64(j.at("signature").get<std::string>()));
    e.signer = j.at("signer").get<std::string>();
    e.received_at = j.value("received_at", Seconds{0});
    return e;
  } catch (const json::exception& ex) {
    throw DecodeError(std::string("bad narrowcast entry: ") + ex.what());
  }
}

std::string messages_body(const std::vector<NarrowcastEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) arr.push_back(entry_to_json(e));
  return json{{"messages", arr}}.dump();
}

std::vector<NarrowcastEntry> parse_messages_body(const std::string& body) {
  std::vector<NarrowcastEntry> out;
  try {
    const auto doc = json::parse(body);
    for (const auto& j : doc.at("messages")) out.push_back(entry_from_json(j));
  } catch (const json::exception& ex) {
    throw DecodeError(std::string("bad messages body: ") + ex.what());
  }
  return out;
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::unauthorized: return "unauthorized";
    case RejectReason::bad_signature: return "bad-signature";
    case RejectReason::radius: return "radius";
    case RejectReason::area: return "area";
    case RejectReason::too_large: return "too-large";
    case RejectReason::malformed: return "malformed";
  }
  return "?";
}

Server::Server(registry::SignaturePolicy whitelist) : whitelist_(std::move(whitelist)) {}

AnnounceResult Server::announce(NarrowcastEntry entry, Seconds now) {
  const auto* signer = whitelist_.find(entry.signer);
  if (!signer) return reject(RejectReason::unauthorized, entry.signer);
  if (entry.area.radius_m < kMinRadius) return reject(RejectReason::radius);
  if (!entry.area.center.valid()) return reject(RejectReason::area, "coordinates out of range");
  if (entry.area.t_begin < 0 || entry.area.t_begin > entry.area.t_end) {
    return reject(RejectReason::area, "bad time window");
  }
  if (entry.message.size() > kMaxMessageBytes) return reject(RejectReason::too_large);
  if (!crypto::verify(signer->vk, entry.signature, signing_bytes(entry.area, entry.message))) {
    return reject(RejectReason::bad_signature);
  }
  entry.received_at = now;

  // candidate index cells from the circle's bounding box, then exact test
  const Area& a = entry.area;
  const double delta = static_cast<double>(a.radius_m) / kEarthRadius;
  const double delta_deg = delta * 180.0 / std::numbers::pi;
  const double lat = a.center.lat();
  const double lon = a.center.lon();
  const double lat_lo = std::max(-90.0, lat - delta_deg - kIndexMargin);
  const double lat_hi = std::min(90.0, lat + delta_deg + kIndexMargin);

  std::vector<std::pair<double, double>> lon_ranges;
  const double ratio = std::sin(delta) / std::cos(rad(lat));
  if (lat_hi >= 90.0 || lat_lo <= -90.0 || delta >= std::numbers::pi / 2 || ratio >= 1.0) {
    lon_ranges.emplace_back(-180.0, 180.0);
  } else {
    const double dl = std::asin(ratio) * 180.0 / std::numbers::pi + kIndexMargin;
    double lo = lon - dl, hi = lon + dl;
    if (lo < -180.0) {
      lon_ranges.emplace_back(lo + 360.0, 180.0);
      lo = -180.0;
    }
    if (hi > 180.0) {
      lon_ranges.emplace_back(-180.0, hi - 360.0);
      hi = 180.0;
    }
    lon_ranges.emplace_back(lo, hi);
  }

  std::unique_lock lock(mu_);
  const std::size_t idx = entries_.size();
  const auto la0 = lat_label(to_e7(lat_lo), kIndexLatBits);
  const auto la1 = lat_label(to_e7(lat_hi), kIndexLatBits);
  for (const auto& [lo, hi] : lon_ranges) {
    const auto lo0 = lon_label(to_e7(lo), kIndexLonBits);
    const auto lo1 = lon_label(to_e7(hi), kIndexLonBits);
    for (auto i = la0; i <= la1; ++i) {
      for (auto j = lo0; j <= lo1; ++j) {
        Box b = index_box(i, j);
        b.lat_lo -= kIndexMargin;
        b.lat_hi += kIndexMargin;
        b.lon_lo -= kIndexMargin;
        b.lon_hi += kIndexMargin;
        if (!intersects(a, b)) continue;
        auto& cell = index_[{i, j}];
        if (cell.empty() || cell.back() != idx) cell.push_back(idx);
      }
    }
  }
  entries_.push_back(std::move(entry));
  return {true, std::nullopt, {}};
}

std::vector<std::size_t> Server::candidates(const Region& region) const {
  const auto lats = index_labels(region.lat_prefix, region.lat_bits, kIndexLatBits,
                                 lat_label(-90 * kE7, kIndexLatBits), lat_label(90 * kE7, kIndexLatBits));
  const auto lons = index_labels(region.lon_prefix, region.lon_bits, kIndexLonBits,
                                 lon_label(-180 * kE7, kIndexLonBits), lon_label(180 * kE7, kIndexLonBits));
  std::vector<std::size_t> out;
  for (auto i : lats) {
    for (auto j : lons) {
      auto it = index_.find({i, j});
      if (it != index_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<NarrowcastEntry> Server::get_messages(const Region& region, Seconds since) const {
  validate(region);
  const Box box = bounds(region);
  std::shared_lock lock(mu_);
  std::vector<NarrowcastEntry> out;
  for (auto i : candidates(region)) {
    const auto& e = entries_[i];
    if (e.received_at > since && intersects(e.area, box)) out.push_back(e);
  }
  return out;
}

std::vector<NarrowcastEntry> Server::scan(const Region& region, Seconds since) const {
  validate(region);
  const Box box = bounds(region);
  std::shared_lock lock(mu_);
  std::vector<NarrowcastEntry> out;
  for (const auto& e : entries_) {
    if (e.received_at > since && intersects(e.area, box)) out.push_back(e);
  }
  return out;
}

std::size_t Server::how_big(const Region& region, Seconds since) const {
  return messages_body(get_messages(region, since)).size();
}

std::size_t Server::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::size_t Server::index_cells() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

std::map<std::string, std::string> region_query(const Region& r, Seconds since) {
  return {{"lat_prefix", std::to_string(r.lat_prefix)},
          {"lon_prefix", std::to_string(r.lon_prefix)},
          {"lat_bits", std::to_string(r.lat_bits)},
          {"lon_bits", std::to_string(r.lon_bits)},
          {"since", std::to_string(since)}};
}

std::pair<Region, Seconds> parse_region_query(const std::map<std::string, std::string>& q) {
  static const std::vector<std::string> allowed = {"lat_prefix", "lon_prefix", "lat_bits", "lon_bits", "since"};
  for (const auto& [k, v] : q) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw DecodeError("unexpected query parameter " + k);
    }
  }
  Region r;
  r.lat_prefix = parse_int(q, "lat_prefix");
  r.lon_prefix = parse_int(q, "lon_prefix");
  r.lat_bits = static_cast<int>(parse_int(q, "lat_bits"));
  r.lon_bits = static_cast<int>(parse_int(q, "lon_bits"));
  const Seconds since = q.count("since") ? parse_int(q, "since") : 0;
  try {
    validate(r);
  } catch (const Error& e) {
    throw DecodeError(e.what());
  }
  return {r, since};
}

net::Response Server::handle(const net::Request& req, Seconds now) {
  try {
    if (req.method == "GET" && req.path == "/narrowcast/messages") {
      auto [region, since] = parse_region_query(req.query);
      return net::json_response(200, messages_body(get_messages(region, since)));
    }
    if (req.method == "GET" && req.path == "/narrowcast/size") {
      auto [region, since] = parse_region_query(req.query);
      return net::json_response(200, json{{"bytes", how_big(region, since)}}.dump());
    }
    if (req.method == "GET" && req.path == "/health") {
      return net::json_response(200, json{{"status", "ok"}, {"messages", size()}}.dump());
    }
    if (req.method == "POST" && req.path == "/narrowcast/announce") {
      auto res = announce(entry_from_json(json::parse(req.body)), now);
      json body{{"accepted", res.accepted}};
      if (!res.accepted) {
        body["reason"] = to_string(*res.reason);
        if (!res.detail.empty()) body["detail"] = res.detail;
      }
      const int status = res.accepted ? 200 : (*res.reason == RejectReason::unauthorized ||
                                               *res.reason == RejectReason::bad_signature)
                                                  ? 403
                                                  : 422;
      return net::json_response(status, body.dump());
    }
  } catch (const json::exception& e) {
    return net::error_response(400, std::string("malformed request: ") + e.what());
  } catch (const DecodeError& e) {
    return net::error_response(400, std::string("malformed request: ") + e.what());
  }
  return net::error_response(404, "no such route: " + req.method + " " + req.path);
}

std::vector<Bytes> match_trace(std::span<const TracePoint> trace, std::span<const NarrowcastEntry> pairs) {
  std::vector<Bytes> out;
  for (const auto& e : pairs) {
    for (const auto& p : trace) {
      if (p.when < e.area.t_begin || p.when > e.area.t_end) continue;
      if (haversine(e.area.center.lat(), e.area.center.lon(), p.where.lat(), p.where.lon()) <=
          static_cast<double>(e.area.radius_m)) {
        out.push_back(e.message);
        break;
      }
    }
  }
  return out;
}

Region negotiate_region(const Location& here, std::size_t budget,
                        const std::function<std::size_t(const Region&)>& how_big) {
  int lat_bits = 0, lon_bits = 0;
  for (;;) {
    const Region r = region_of(here, lat_bits, lon_bits);
    if (how_big(r) <= budget) return r;
    if (lat_bits == kMaxBits && lon_bits == kMaxBits) return r;
    lat_bits = std::min(kMaxBits, lat_bits + 1);
    lon_bits = std::min(kMaxBits, lon_bits + 1);
  }
}

std::vector<NarrowcastEntry> Client::get_messages(const Region& region, Seconds since) {
  net::Request req{"GET", "/narrowcast/messages", region_query(region, since), {}, {}};
  auto resp = transport_.send(req);
  if (!resp.ok()) throw Error("narrowcast query failed: " + resp.body);
  return parse_messages_body(resp.body);
}

std::size_t Client::how_big(const Region& region, Seconds since) {
  net::Request req{"GET", "/narrowcast/size", region_query(region, since), {}, {}};
  auto resp = transport_.send(req);
  if (!resp.ok()) throw Error("narrowcast size query failed: " + resp.body);
  try {
    return json::parse(resp.body).at("bytes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DecodeError(e.what());
  }
}

AnnounceResult Client::announce(const NarrowcastEntry& entry) {
  net::Request req{"POST", "/narrowcast/announce", {}, entry_to_json(entry).dump(), {}};
  auto resp = transport_.send(req);
  AnnounceResult out;
  try {
    const auto body = json::parse(resp.body);
    out.accepted = body.value("accepted", false);
    if (!out.accepted) {
      out.detail = body.value("reason", body.value("error", std::string("rejected")));
      out.reason = RejectReason::malformed;
      for (auto r : {RejectReason::unauthorized, RejectReason::bad_signature, RejectReason::radius,
                     RejectReason::area, RejectReason::too_large}) {
        if (out.detail == to_string(r)) out.reason = r;
      }
    }
  } catch (const json::exception& e) {
    throw DecodeError(e.what());
  }
  return out;
}

}  // namespace pact::narrowcast
