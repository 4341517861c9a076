#include "pact/registry.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <mutex>

namespace pact::registry {
namespace {

using nlohmann::json;

constexpr char kSubmitCore = 'S';
constexpr char kSubmitAlt = 'A';
constexpr char kPublishCore = 'P';
constexpr char kPublishAlt = 'Q';
constexpr char kCountersign = 'C';

SubmitResult reject(RejectReason r, std::string detail = {}) {
  SubmitResult out;
  out.reason = r;
  out.detail = std::move(detail);
  return out;
}

std::uint64_t parse_u64(const std::map<std::string, std::string>& q, const std::string& key, std::uint64_t fallback) {
  auto it = q.find(key);
  if (it == q.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DecodeError("bad integer for " + key);
  return v;
}

json result_to_json(const SubmitResult& r) {
  json j{{"accepted", r.accepted}};
  if (r.accepted) {
    j["tier"] = to_string(r.tier);
    j["release_at"] = r.release_at;
  } else {
    j["reason"] = to_string(*r.reason);
    if (!r.detail.empty()) j["detail"] = r.detail;
  }
  return j;
}

net::Response result_response(const SubmitResult& r) {
  return net::json_response(r.accepted ? 200 : http_status(*r.reason), result_to_json(r).dump());
}

Bytes keys_bytes(const std::vector<crypto::PublicKey>& keys) { return alt::encode_report({keys}); }

}  // namespace

std::string to_string(Tier t) {
  switch (t) {
    case Tier::none: return "none";
    case Tier::self_report: return "self-report";
    case Tier::healthcare: return "healthcare";
  }
  return "?";
}

Tier tier_from_string(std::string_view s) {
  if (s == "none") return Tier::none;
  if (s == "self-report" || s == "self_report") return Tier::self_report;
  if (s == "healthcare" || s == "healthcare-validated") return Tier::healthcare;
  throw Error("unknown tier: " + std::string(s));
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::malformed: return "malformed";
    case RejectReason::stale: return "stale";
    case RejectReason::future: return "future";
    case RejectReason::span: return "span";
    case RejectReason::unknown_signer: return "unknown-signer";
    case RejectReason::bad_signature: return "bad-signature";
    case RejectReason::duplicate: return "duplicate";
    case RejectReason::rate_limited: return "rate-limited";
    case RejectReason::weak_integrity: return "weak-integrity";
    case RejectReason::not_found: return "not-found";
  }
  return "?";
}

int http_status(RejectReason r) {
  switch (r) {
    case RejectReason::malformed: return 400;
    case RejectReason::unknown_signer:
    case RejectReason::bad_signature:
    case RejectReason::weak_integrity: return 403;
    case RejectReason::not_found: return 404;
    case RejectReason::duplicate: return 409;
    case RejectReason::rate_limited: return 429;
    case RejectReason::stale:
    case RejectReason::future:
    case RejectReason::span: return 422;
  }
  return 400;
}

void SignaturePolicy::add(const std::string& cert, const crypto::PublicKey& vk, Tier tier) {
  if (cert.empty()) throw Error("certificate id must not be empty");
  if (tier == Tier::none) throw Error("whitelisted signers need a tier");
  if (!crypto::is_valid_public_key(vk)) throw Error("invalid verification key for " + cert);
  signers_[cert] = Signer{vk, tier};
}

const Signer* SignaturePolicy::find(const std::string& cert) const {
  auto it = signers_.find(cert);
  return it == signers_.end() ? nullptr : &it->second;
}

json SignaturePolicy::to_json() const {
  json arr = json::array();
  for (const auto& [cert, s] : signers_) {
    arr.push_back({{"cert", cert}, {"vk", to_base64(s.vk)}, {"tier", to_string(s.tier)}});
  }
  return json{{"signers", arr}};
}

SignaturePolicy SignaturePolicy::from_json(const json& j) {
  SignaturePolicy p;
  try {
    for (const auto& s : j.at("signers")) {
      p.add(s.at("cert").get<std::string>(), crypto::public_key_from(from_base64(s.at("vk").get<std::string>())),
            tier_from_string(s.at("tier").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw DecodeError(std::string("bad whitelist: ") + e.what());
  }
  return p;
}

SignaturePolicy SignaturePolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open whitelist " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DecodeError("whitelist " + path + ": " + e.what());
  }
}

void SignaturePolicy::save(const std::string& path) const {
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << to_json().dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Config Config::defaults_for(const core::Params& params) {
  Config c;
  c.params = params;
  c.delay = 2 * params.dt;
  c.max_report_age = params.delta * params.dt + kSecondsPerDay;
  c.alt_window_days = (params.delta * params.dt + kSecondsPerDay - 1) / kSecondsPerDay;
  return c;
}

Registry::Registry(Config config, SignaturePolicy policy) : config_(std::move(config)), policy_(std::move(policy)) {
  config_.params.validate();
  if (config_.delay < 0 || config_.max_report_age <= 0 || config_.clock_slack < 0) {
    throw Error("registry delays must be non-negative");
  }
  if (config_.shuffle_seed) {
    shuffle_rng_.seed(*config_.shuffle_seed);
  } else {
    shuffle_rng_.seed(crypto::system_random().u64());
  }
  if (config_.log_path) {
    replay_log();
    log_.open(*config_.log_path, std::ios::binary | std::ios::app);
    index_.open(*config_.log_path + ".idx", std::ios::binary | std::ios::app);
    if (!log_ || !index_) throw Error("cannot open registry log " + *config_.log_path);
  }
}

SubmitResult Registry::check_signatures(const core::Entry& entry) const {
  SubmitResult ok;
  ok.accepted = true;
  const Bytes message = core::signing_bytes(entry);
  std::set<std::string> certs;
  for (const auto& s : entry.signatures) {
    const Signer* signer = policy_.find(s.cert_id);
    if (!signer) return reject(RejectReason::unknown_signer, s.cert_id);
    if (!crypto::verify(signer->vk, s.sig, message)) return reject(RejectReason::bad_signature, s.cert_id);
    if (!certs.insert(s.cert_id).second) return reject(RejectReason::malformed, "repeated certificate");
    ok.tier = std::max(ok.tier, signer->tier);
  }
  return ok;
}

bool Registry::rate_limited(const std::string& source, Seconds now) {
  if (config_.rate_limit == 0) return false;
  auto& times = recent_by_source_[source];
  while (!times.empty() && now - times.front() >= config_.rate_window) times.pop_front();
  return times.size() >= config_.rate_limit;
}

SubmitResult Registry::submit(const core::Entry& entry, Seconds now, const std::string& source) {
  const auto& p = config_.params;
  if (entry.window_seed.size() != p.seed_bytes() || entry.t_start < 0 || entry.t_end < 0) {
    return reject(RejectReason::malformed, "bad seed length or timestamp");
  }
  if (entry.t_start > entry.t_end) return reject(RejectReason::malformed, "t_start after t_end");
  if (entry.vk.has_value() != entry.si_signature.has_value()) return reject(RejectReason::malformed, "vk without signature");
  if (entry.t_end > now + config_.clock_slack) return reject(RejectReason::future);
  if (now - entry.t_start > config_.max_report_age) return reject(RejectReason::stale);
  if (entry.t_end - entry.t_start > p.delta * p.dt + p.dt) return reject(RejectReason::span);
  if (entry.vk) {
    if (!core::verify_entry_si(entry, p)) return reject(RejectReason::bad_signature, "strong-integrity signature");
  } else if (config_.require_strong_integrity) {
    return reject(RejectReason::weak_integrity);
  }
  auto sig = check_signatures(entry);
  if (!sig.accepted) return sig;

  std::unique_lock lock(mu_);
  if (seen_seeds_.count(entry.window_seed)) return reject(RejectReason::duplicate);
  const bool counted = sig.tier < Tier::healthcare;
  if (counted && !replaying_ && rate_limited(source, now)) return reject(RejectReason::rate_limited, source);

  PendingCore pc{{entry, sig.tier, now, 0}, now + config_.delay};
  seen_seeds_.insert(entry.window_seed);
  if (counted && config_.rate_limit > 0) recent_by_source_[source].push_back(now);
  if (config_.log_path && !replaying_) {
    Bytes rec;
    put_u64(rec, static_cast<std::uint64_t>(now));
    put_u64(rec, static_cast<std::uint64_t>(pc.release_at));
    rec.push_back(static_cast<std::uint8_t>(sig.tier));
    put_bytes(rec, core::encode_entry(entry));
    log_record(kSubmitCore, rec);
  }
  SubmitResult out;
  out.accepted = true;
  out.tier = sig.tier;
  out.release_at = pc.release_at;
  pending_.emplace_back(std::move(pc));
  return out;
}

PublishedEntry* Registry::locate(ByteView window_seed) {
  const Bytes key(window_seed.begin(), window_seed.end());
  for (auto& e : published_) {
    if (e.entry.window_seed == key) return &e;
  }
  for (auto& pend : pending_) {
    if (auto* pc = std::get_if<PendingCore>(&pend); pc && pc->item.entry.window_seed == key) return &pc->item;
  }
  return nullptr;
}

SubmitResult Registry::countersign(ByteView window_seed, const std::string& cert, const crypto::Signature& sig,
                                   Seconds now) {
  (void)now;
  const Signer* signer = policy_.find(cert);
  if (!signer) return reject(RejectReason::unknown_signer, cert);

  std::unique_lock lock(mu_);
  PublishedEntry* target = locate(window_seed);
  if (!target) return reject(RejectReason::not_found);
  SubmitResult out;
  out.accepted = true;
  for (const auto& s : target->entry.signatures) {
    if (s.cert_id == cert) {
      out.tier = target->tier;
      return out;
    }
  }
  if (!crypto::verify(signer->vk, sig, core::signing_bytes(target->entry))) {
    return reject(RejectReason::bad_signature, cert);
  }
  target->entry.signatures.push_back({cert, sig});
  target->tier = std::max(target->tier, signer->tier);
  if (config_.log_path && !replaying_) {
    Bytes rec(window_seed.begin(), window_seed.end());
    put_u16(rec, static_cast<std::uint16_t>(cert.size()));
    put_bytes(rec, to_bytes(cert));
    put_bytes(rec, sig);
    log_record(kCountersign, rec);
  }
  out.tier = target->tier;
  return out;
}

void Registry::publish_locked(Seconds now) {
  std::deque<Pending> due;
  std::deque<Pending> keep;
  for (auto& p : pending_) {
    const Seconds release = std::visit([](const auto& x) { return x.release_at; }, p);
    (release <= now ? due : keep).push_back(std::move(p));
  }
  pending_ = std::move(keep);
  if (config_.shuffle) std::shuffle(due.begin(), due.end(), shuffle_rng_);

  for (auto& p : due) {
    if (auto* pc = std::get_if<PendingCore>(&p)) {
      pc->item.published_at = now;
      if (config_.log_path) {
        Bytes rec;
        put_u64(rec, static_cast<std::uint64_t>(now));
        put_bytes(rec, pc->item.entry.window_seed);
        log_record(kPublishCore, rec);
      }
      published_.push_back(std::move(pc->item));
    } else {
      auto& pa = std::get<PendingAlt>(p);
      pa.item.published_at = now;
      if (config_.log_path) {
        Bytes rec;
        put_u64(rec, static_cast<std::uint64_t>(now));
        put_bytes(rec, keys_bytes(pa.item.keys));
        log_record(kPublishAlt, rec);
      }
      published_alt_.push_back(std::move(pa.item));
    }
  }
}

std::size_t Registry::release_tick(Seconds now) {
  std::unique_lock lock(mu_);
  const auto before = published_.size() + published_alt_.size();
  publish_locked(now);
  return published_.size() + published_alt_.size() - before;
}

FetchResult Registry::fetch(std::uint64_t cursor, std::size_t limit) const {
  std::shared_lock lock(mu_);
  FetchResult out;
  out.next_cursor = cursor;
  if (cursor >= published_.size()) return out;
  const auto end = cursor + std::min<std::uint64_t>(limit, published_.size() - cursor);
  out.entries.assign(published_.begin() + static_cast<std::ptrdiff_t>(cursor),
                     published_.begin() + static_cast<std::ptrdiff_t>(end));
  out.next_cursor = end;
  return out;
}

SubmitResult Registry::submit_alt(const alt::AltReport& report, Seconds now, const std::string& source) {
  if (report.verification_keys.empty()) return reject(RejectReason::malformed, "no keys");
  if (static_cast<std::int64_t>(report.verification_keys.size()) > config_.alt_window_days) {
    return reject(RejectReason::span, "more keys than days in the infection window");
  }
  std::set<crypto::PublicKey> distinct;
  for (const auto& k : report.verification_keys) {
    if (!crypto::is_valid_public_key(k)) return reject(RejectReason::malformed, "invalid verification key");
    if (!distinct.insert(k).second) return reject(RejectReason::malformed, "repeated key");
  }

  std::unique_lock lock(mu_);
  for (const auto& k : report.verification_keys) {
    if (seen_keys_.count(k)) return reject(RejectReason::duplicate);
  }
  if (!replaying_ && rate_limited(source, now)) return reject(RejectReason::rate_limited, source);
  if (config_.rate_limit > 0) recent_by_source_[source].push_back(now);
  seen_keys_.insert(distinct.begin(), distinct.end());
  if (config_.log_path && !replaying_) {
    Bytes rec;
    put_u64(rec, static_cast<std::uint64_t>(now));
    put_bytes(rec, alt::encode_report(report));
    log_record(kSubmitAlt, rec);
  }
  const Seconds release = now + config_.delay;
  if (config_.alt_publication == AltPublication::grouped) {
    pending_.emplace_back(PendingAlt{{report.verification_keys, now, 0}, release});
  } else {
    for (const auto& k : report.verification_keys) pending_.emplace_back(PendingAlt{{{k}, now, 0}, release});
  }
  SubmitResult out;
  out.accepted = true;
  out.release_at = release;
  return out;
}

AltFetchResult Registry::fetch_alt(std::uint64_t cursor, std::size_t limit) const {
  std::shared_lock lock(mu_);
  AltFetchResult out;
  out.next_cursor = cursor;
  if (cursor >= published_alt_.size()) return out;
  const auto end = cursor + std::min<std::uint64_t>(limit, published_alt_.size() - cursor);
  out.groups.assign(published_alt_.begin() + static_cast<std::ptrdiff_t>(cursor),
                    published_alt_.begin() + static_cast<std::ptrdiff_t>(end));
  out.next_cursor = end;
  return out;
}

std::size_t Registry::published_count() const {
  std::shared_lock lock(mu_);
  return published_.size();
}

std::size_t Registry::pending_count() const {
  std::shared_lock lock(mu_);
  return pending_.size();
}

std::vector<AuditRecord> Registry::audit() const {
  std::shared_lock lock(mu_);
  std::vector<AuditRecord> out;
  for (const auto& e : published_) out.push_back({e.submitted_at, e.published_at});
  for (const auto& g : published_alt_) out.push_back({g.submitted_at, g.published_at});
  return out;
}

// Record file: kind (1 byte) || u32 length || payload. The .idx file holds
// the u64 offset of every record.
void Registry::log_record(char kind, const Bytes& payload) {
  Bytes rec{static_cast<std::uint8_t>(kind)};
  put_u32(rec, static_cast<std::uint32_t>(payload.size()));
  put_bytes(rec, payload);
  log_.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  log_.flush();
  Bytes idx;
  put_u64(idx, log_offset_);
  index_.write(reinterpret_cast<const char*>(idx.data()), static_cast<std::streamsize>(idx.size()));
  index_.flush();
  log_offset_ += rec.size();
  if (!log_ || !index_) throw Error("registry log write failed");
}

void Registry::replay_log() {
  const auto& path = *config_.log_path;
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path, std::ios::binary);
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  replaying_ = true;
  std::size_t pos = 0;
  std::size_t records = 0;
  while (data.size() - pos >= 5) {
    Reader head(ByteView(data).subspan(pos, 5));
    const char kind = static_cast<char>(head.u8());
    const auto len = head.u32();
    if (data.size() - pos - 5 < len) break;  // torn tail from a crash
    Reader r(ByteView(data).subspan(pos + 5, len));
    switch (kind) {
      case kSubmitCore: {
        const auto at = static_cast<Seconds>(r.u64());
        const auto release = static_cast<Seconds>(r.u64());
        const auto tier = static_cast<Tier>(r.u8());
        auto entry = core::decode_entry(r.view(r.remaining()), config_.params);
        seen_seeds_.insert(entry.window_seed);
        pending_.emplace_back(PendingCore{{std::move(entry), tier, at, 0}, release});
        break;
      }
      case kSubmitAlt: {
        const auto at = static_cast<Seconds>(r.u64());
        auto report = alt::decode_report(r.view(r.remaining()));
        seen_keys_.insert(report.verification_keys.begin(), report.verification_keys.end());
        const Seconds release = at + config_.delay;
        if (config_.alt_publication == AltPublication::grouped) {
          pending_.emplace_back(PendingAlt{{report.verification_keys, at, 0}, release});
        } else {
          for (const auto& k : report.verification_keys) pending_.emplace_back(PendingAlt{{{k}, at, 0}, release});
        }
        break;
      }
      case kPublishCore: {
        const auto at = static_cast<Seconds>(r.u64());
        const Bytes seed = r.bytes(r.remaining());
        auto it = std::find_if(pending_.begin(), pending_.end(), [&](const Pending& p) {
          auto* pc = std::get_if<PendingCore>(&p);
          return pc && pc->item.entry.window_seed == seed;
        });
        if (it == pending_.end()) throw DecodeError("registry log publishes an unknown entry");
        auto item = std::get<PendingCore>(*it).item;
        item.published_at = at;
        pending_.erase(it);
        published_.push_back(std::move(item));
        break;
      }
      case kPublishAlt: {
        const auto at = static_cast<Seconds>(r.u64());
        const auto keys = alt::decode_report(r.view(r.remaining())).verification_keys;
        auto it = std::find_if(pending_.begin(), pending_.end(), [&](const Pending& p) {
          auto* pa = std::get_if<PendingAlt>(&p);
          return pa && pa->item.keys == keys;
        });
        if (it == pending_.end()) throw DecodeError("registry log publishes unknown keys");
        auto item = std::get<PendingAlt>(*it).item;
        item.published_at = at;
        pending_.erase(it);
        published_alt_.push_back(std::move(item));
        break;
      }
      case kCountersign: {
        const Bytes seed = r.bytes(config_.params.seed_bytes());
        const auto cert = pact::to_string(r.view(r.u16()));
        const auto sig = crypto::signature_from(r.view(crypto::kSignatureSize));
        PublishedEntry* target = locate(seed);
        const Signer* signer = policy_.find(cert);
        if (!target) throw DecodeError("registry log countersigns an unknown entry");
        target->entry.signatures.push_back({cert, sig});
        if (signer) target->tier = std::max(target->tier, signer->tier);
        break;
      }
      default:
        throw DecodeError("unknown registry log record kind");
    }
    pos += 5 + len;
    ++records;
  }
  replaying_ = false;
  if (pos != data.size()) std::filesystem::resize_file(path, pos);
  log_offset_ = pos;
  // rebuild the index so it always matches the record file
  std::ofstream idx(path + ".idx", std::ios::binary | std::ios::trunc);
  std::size_t off = 0;
  for (std::size_t i = 0; i < records; ++i) {
    Bytes b;
    put_u64(b, off);
    idx.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    Reader head(ByteView(data).subspan(off + 1, 4));
    off += 5 + head.u32();
  }
}

json published_to_json(const PublishedEntry& p) {
  json j = core::entry_to_json(p.entry);
  j["tier"] = to_string(p.tier);
  j["published_at"] = p.published_at;
  return j;
}

PublishedEntry published_from_json(const json& j, const core::Params& params) {
  PublishedEntry p;
  p.entry = core::entry_from_json(j, params);
  try {
    p.tier = tier_from_string(j.value("tier", std::string("none")));
    p.published_at = static_cast<Seconds>(j.value("published_at", std::uint64_t{0}));
  } catch (const json::exception& e) {
    throw DecodeError(e.what());
  }
  return p;
}

net::Response Registry::handle(const net::Request& req, Seconds now) {
  try {
    if (req.method == "GET" && req.path == "/health") {
      std::shared_lock lock(mu_);
      return net::json_response(200, json{{"status", "ok"},
                                          {"published", published_.size()},
                                          {"published_alt", published_alt_.size()},
                                          {"pending", pending_.size()}}
                                          .dump());
    }
    if (req.method == "GET" && req.path == "/entries") {
      const auto cursor = parse_u64(req.query, "cursor", 0);
      const auto limit = parse_u64(req.query, "limit", 1000);
      auto res = fetch(cursor, static_cast<std::size_t>(std::min<std::uint64_t>(limit, 10000)));
      json arr = json::array();
      for (const auto& e : res.entries) arr.push_back(published_to_json(e));
      return net::json_response(200, json{{"entries", arr}, {"next_cursor", res.next_cursor}}.dump());
    }
    if (req.method == "GET" && req.path == "/alt/keys") {
      const auto cursor = parse_u64(req.query, "cursor", 0);
      const auto limit = parse_u64(req.query, "limit", 1000);
      auto res = fetch_alt(cursor, static_cast<std::size_t>(std::min<std::uint64_t>(limit, 10000)));
      json arr = json::array();
      for (const auto& g : res.groups) {
        json keys = json::array();
        for (const auto& k : g.keys) keys.push_back(to_base64(k));
        arr.push_back({{"keys", keys}, {"published_at", g.published_at}});
      }
      return net::json_response(200, json{{"groups", arr}, {"next_cursor", res.next_cursor}}.dump());
    }
    if (req.method == "POST" && req.path == "/report") {
      const auto body = json::parse(req.body);
      const auto& e = body.at("entry");
      const core::Entry entry = e.is_string() ? core::decode_entry(from_base64(e.get<std::string>()), config_.params)
                                              : core::entry_from_json(e, config_.params);
      return result_response(submit(entry, now, req.source));
    }
    if (req.method == "POST" && req.path == "/countersign") {
      const auto body = json::parse(req.body);
      const auto seed = from_base64(body.at("window_seed").get<std::string>());
      const auto sig = crypto::signature_from(from_base64(body.at("signature").get<std::string>()));
      return result_response(countersign(seed, body.at("cert").get<std::string>(), sig, now));
    }
    if (req.method == "POST" && req.path == "/alt/report") {
      const auto body = json::parse(req.body);
      const auto report = alt::decode_report(from_base64(body.at("report").get<std::string>()));
      return result_response(submit_alt(report, now, req.source));
    }
  } catch (const json::exception& e) {
    return net::error_response(400, std::string("malformed request: ") + e.what());
  } catch (const DecodeError& e) {
    return net::error_response(400, std::string("malformed request: ") + e.what());
  }
  return net::error_response(404, "no such route: " + req.method + " " + req.path);
}

}  // namespace pact::registry
