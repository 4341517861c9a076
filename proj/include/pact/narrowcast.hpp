#pragma once

// Narrowcast: signed (area, message) announcements from whitelisted
// authorities, served by coarse region so that clients never reveal their
// position, and matched locally against the client's own trace.
//
// Regions are prefix codes of latitude/longitude. At precision b the latitude
// cell width is 2^(8-b) degrees and the longitude width 2^(9-b) degrees, so
// 8 and 9 bits give whole degrees. Labels truncate toward zero and cells are
// half-open [lo, hi): label L > 0 covers [L w, (L+1) w), L < 0 covers
// [(L-1) w, L w) and label 0 covers [-w, w). A point on a boundary belongs to
// the cell above it.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pact/bytes.hpp"
#include "pact/crypto.hpp"
#include "pact/registry.hpp"
#include "pact/transport.hpp"

namespace pact::narrowcast {

inline constexpr int kMaxBits = 32;
inline constexpr int kIndexLatBits = 8;
inline constexpr int kIndexLonBits = 9;
inline constexpr std::uint32_t kMinRadius = 10;
inline constexpr double kEarthRadius = 6371008.8;  // metres, mean radius
inline constexpr std::size_t kMaxMessageBytes = 64 * 1024;

/// Fixed point, 1e-7 degree units.
struct Location {
  std::int64_t lat_e7 = 0;
  std::int64_t lon_e7 = 0;

  static Location from_degrees(double lat, double lon);
  double lat() const { return static_cast<double>(lat_e7) / 1e7; }
  double lon() const { return static_cast<double>(lon_e7) / 1e7; }
  bool valid() const;
  friend bool operator==(const Location&, const Location&) = default;
};

struct Area {
  Location center;
  std::uint32_t radius_m = kMinRadius;
  Seconds t_begin = 0;
  Seconds t_end = 0;
  friend bool operator==(const Area&, const Area&) = default;
};

struct Region {
  std::int64_t lat_prefix = 0;
  std::int64_t lon_prefix = 0;
  int lat_bits = 0;
  int lon_bits = 0;
  friend auto operator<=>(const Region&, const Region&) = default;
};

/// Closed box in degrees.
struct Box {
  double lat_lo, lat_hi, lon_lo, lon_hi;
};

std::int64_t lat_label(std::int64_t lat_e7, int bits);
std::int64_t lon_label(std::int64_t lon_e7, int bits);
/// Throws Error when a precision is outside [0, kMaxBits] or the location is invalid.
Region region_of(const Location& loc, int lat_bits, int lon_bits);
/// Throws Error when the region cannot contain any valid coordinate.
void validate(const Region& r);
/// Cell bounds clamped to the valid coordinate range.
Box bounds(const Region& r);
bool contains(const Region& r, const Location& loc);

double haversine(double lat1, double lon1, double lat2, double lon2);
/// Smallest great-circle distance from (lat, lon) to any point of the box.
double distance_to_box(double lat, double lon, const Box& box);
bool intersects(const Area& area, const Box& box);

struct NarrowcastEntry {
  Area area;
  Bytes message;
  crypto::Signature signature{};
  std::string signer;
  Seconds received_at = 0;
  friend bool operator==(const NarrowcastEntry&, const NarrowcastEntry&) = default;
};

/// lat_e7 || lon_e7 (i64) || radius (u32) || t_begin || t_end (u64) || message.
Bytes signing_bytes(const Area& area, ByteView message);
NarrowcastEntry sign_announcement(const Area& area, Bytes message, const std::string& signer,
                                  const crypto::SecretKey& key);

nlohmann::json entry_to_json(const NarrowcastEntry& e);
NarrowcastEntry entry_from_json(const nlohmann::json& j);
/// {"messages": [...]}: the body get_messages is served as.
std::string messages_body(const std::vector<NarrowcastEntry>& entries);
std::vector<NarrowcastEntry> parse_messages_body(const std::string& body);

enum class RejectReason { unauthorized, bad_signature, radius, area, too_large, malformed };
std::string to_string(RejectReason r);

struct AnnounceResult {
  bool accepted = false;
  std::optional<RejectReason> reason;
  std::string detail;
};

class Server {
 public:
  explicit Server(registry::SignaturePolicy whitelist);

  /// Checks signer and area, stamps received_at = now and indexes the entry.
  AnnounceResult announce(NarrowcastEntry entry, Seconds now);
  /// Entries with received_at > since whose area meets the region's cell.
  std::vector<NarrowcastEntry> get_messages(const Region& region, Seconds since) const;
  /// Exact byte size of the get_messages response body.
  std::size_t how_big(const Region& region, Seconds since) const;
  /// Linear scan used as a reference for the index.
  std::vector<NarrowcastEntry> scan(const Region& region, Seconds since) const;

  std::size_t size() const;
  std::size_t index_cells() const;

  /// GET /narrowcast/messages, GET /narrowcast/size, POST /narrowcast/announce.
  net::Response handle(const net::Request& request, Seconds now);

 private:
  std::vector<std::size_t> candidates(const Region& region) const;

  registry::SignaturePolicy whitelist_;
  mutable std::shared_mutex mu_;
  std::vector<NarrowcastEntry> entries_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> index_;
};

/// Query parameters for a region; the only thing a client sends.
std::map<std::string, std::string> region_query(const Region& r, Seconds since);
/// Rejects any parameter other than the five region/since fields.
std::pair<Region, Seconds> parse_region_query(const std::map<std::string, std::string>& q);

struct TracePoint {
  Location where;
  Seconds when = 0;
};

/// Messages whose area holds some trace point within its time window.
std::vector<Bytes> match_trace(std::span<const TracePoint> trace, std::span<const NarrowcastEntry> pairs);

/// Starts from the global region and adds one bit of precision per axis until
/// the reported size fits the budget or precision runs out.
Region negotiate_region(const Location& here, std::size_t budget,
                        const std::function<std::size_t(const Region&)>& how_big);

/// Client over any transport. Locations never leave the client.
class Client {
 public:
  explicit Client(net::Transport& transport) : transport_(transport) {}
  std::vector<NarrowcastEntry> get_messages(const Region& region, Seconds since);
  std::size_t how_big(const Region& region, Seconds since);
  AnnounceResult announce(const NarrowcastEntry& entry);

 private:
  net::Transport& transport_;
};

}  // namespace pact::narrowcast
