#include "pact/agent.hpp"

#include <sodium.h>

#include <algorithm>
#include <set>

namespace pact::agent {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'A', 'C', 'T', 'S', 'N', 'A', 'P'};
constexpr std::uint16_t kSnapshotVersion = 1;

void put_blob(Bytes& out, ByteView b) {
  if (b.size() > 0xffff) throw Error("snapshot field too long");
  put_u16(out, static_cast<std::uint16_t>(b.size()));
  put_bytes(out, b);
}

Bytes get_blob(Reader& r) { return r.bytes(r.u16()); }

void put_i64(Bytes& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }
std::int64_t get_i64(Reader& r) { return static_cast<std::int64_t>(r.u64()); }

void put_section(Bytes& out, char tag, const Bytes& body) {
  out.push_back(static_cast<std::uint8_t>(tag));
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  put_bytes(out, body);
}

json parse_json(const net::Response& resp) {
  try {
    return json::parse(resp.body);
  } catch (const json::exception& e) {
    throw net::TransportError(std::string("unparseable registry response: ") + e.what());
  }
}

}  // namespace

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::core: return "core";
    case Protocol::core_strong_integrity: return "core-strong-integrity";
    case Protocol::alt_sig: return "alt-sig";
  }
  return "?";
}

Protocol protocol_from_string(std::string_view s) {
  if (s == "core") return Protocol::core;
  if (s == "core-strong-integrity" || s == "core-si" || s == "strong-integrity") return Protocol::core_strong_integrity;
  if (s == "alt-sig" || s == "alt") return Protocol::alt_sig;
  throw Error("unknown protocol: " + std::string(s));
}

std::string to_string(ReportStatus s) {
  switch (s) {
    case ReportStatus::submitted: return "submitted";
    case ReportStatus::refused: return "refused";
    case ReportStatus::rejected: return "rejected";
    case ReportStatus::failed: return "failed";
  }
  return "?";
}

Seconds Config::effective_tolerance() const {
  if (time_tolerance >= 0) return time_tolerance;
  return protocol == Protocol::alt_sig ? alt.tolerance : core::default_time_tolerance(params);
}

std::int64_t Config::alt_window_days() const {
  return (params.infection_window() + kSecondsPerDay - 1) / kSecondsPerDay;
}

json Alert::to_json() const {
  json j{{"at_risk", at_risk}};
  if (!at_risk || redaction == Redaction::suppress_time) return j;
  j["matches"] = events.size();
  std::set<std::int64_t> days;
  std::set<Seconds> times;
  for (const auto& e : events) {
    if (e.day) days.insert(*e.day);
    if (e.heard_at) times.insert(*e.heard_at);
  }
  j["days"] = days;
  if (redaction == Redaction::none) j["times"] = times;
  return j;
}

Agent::Agent(Config config, crypto::RandomSource& rng, net::Transport* registry, Seconds now)
    : Agent(Restore{}, std::move(config), rng, registry) {
  if (config_.protocol == Protocol::alt_sig) {
    ring_.daily_keygen(day_of(now), *rng_);
  } else {
    fresh_chain(now);
  }
}

Agent::Agent(Restore, Config config, crypto::RandomSource& rng, net::Transport* registry)
    : config_(std::move(config)),
      rng_(&rng),
      registry_(registry),
      ring_(config_.alt_window_days()),
      store_(config_.params, config_.effective_retention(), config_.redaction) {
  config_.params.validate();
  if (config_.alt.n_bits != 128 && config_.alt.n_bits != 256) throw Error("alt identifiers must be 128 or 256 bits");
  if (config_.fetch_page == 0) throw Error("fetch page must be positive");
}

void Agent::fresh_chain(Seconds now) {
  const Bytes entropy = rng_->bytes(config_.params.seed_bytes());
  std::optional<crypto::PublicKey> vk;
  if (config_.protocol == Protocol::core_strong_integrity) {
    si_key_ = crypto::ed25519_keypair(*rng_);
    vk = si_key_->pub;
  }
  chain_ = core::init_chain(config_.params, entropy, config_.skip_to_delta, now, vk);
}

void Agent::set_risk_hook(RiskHook hook) {
  std::lock_guard lock(*mu_);
  hook_ = std::move(hook);
}

TickResult Agent::tick(Seconds now) {
  std::lock_guard lock(*mu_);
  TickResult out;
  if (config_.protocol == Protocol::alt_sig) {
    try {
      const auto& key = ring_.daily_keygen(day_of(now), *rng_);
      last_payload_ = alt::encode_broadcast(alt::make_broadcast(key, now, *rng_, config_.alt));
    } catch (const alt::WrongDay& e) {
      out.warning = std::string("clock regression: ") + e.what();
    }
  } else {
    try {
      auto adv = core::advance(chain_, now, config_.params);
      chain_ = std::move(adv.state);
    } catch (const core::ClockRegression& e) {
      out.warning = std::string("clock regression: ") + e.what();
    }
    last_payload_ = chain_.current_id.bytes;
  }
  if (out.warning) warnings_.push_back(*out.warning);
  out.payload = last_payload_;
  return out;
}

bool Agent::on_hear(ByteView payload, Seconds now) {
  std::lock_guard lock(*mu_);
  if (config_.protocol == Protocol::alt_sig) {
    alt::AltBroadcast b;
    try {
      b = alt::decode_broadcast(payload, config_.alt);
    } catch (const DecodeError&) {
      ++malformed_;
      return false;
    }
    if (!alt::validate_and_collect(store_, b, now, config_.effective_tolerance(), config_.alt)) {
      ++rejected_;
      return false;
    }
    return true;
  }
  if (payload.size() != config_.params.seed_bytes()) {
    ++malformed_;
    return false;
  }
  return store_.add(core::PseudonymId{Bytes(payload.begin(), payload.end())}, now);
}

std::size_t Agent::purge(Seconds now) {
  std::lock_guard lock(*mu_);
  if (config_.protocol == Protocol::alt_sig) ring_.purge(day_of(now));
  return store_.purge(now);
}

ReportOutcome Agent::make_report(Seconds now, bool consent) {
  std::lock_guard lock(*mu_);
  if (!consent) return {ReportStatus::refused, std::nullopt, std::nullopt, "no consent given"};
  if (!registry_) return {ReportStatus::failed, std::nullopt, std::nullopt, "no registry configured"};
  return config_.protocol == Protocol::alt_sig ? report_alt(now) : report_core(now);
}

ReportOutcome Agent::report_core(Seconds now) {
  auto adv = core::advance(chain_, std::max(now, chain_.current_time), config_.params);
  chain_ = std::move(adv.state);

  std::optional<crypto::KeyPair> next_key;
  std::optional<crypto::PublicKey> next_vk;
  if (config_.protocol == Protocol::core_strong_integrity) {
    next_key = crypto::ed25519_keypair(*rng_);
    next_vk = next_key->pub;
  }
  auto report = core::build_report(chain_, config_.params, rng_->bytes(config_.params.seed_bytes()),
                                   config_.skip_to_delta, next_vk);
  core::Entry entry = std::move(report.entry);
  if (si_key_) entry = core::sign_entry(std::move(entry), *si_key_);
  if (config_.signing) {
    entry.signatures.push_back(
        {config_.signing->cert, crypto::sign(config_.signing->key, core::signing_bytes(entry))});
  }

  ReportOutcome out;
  out.entry = entry;
  net::Request req{"POST", "/report", {}, json{{"entry", to_base64(core::encode_entry(entry))}}.dump(), {}};
  net::Response resp;
  try {
    resp = registry_->send(req);
  } catch (const net::TransportError& e) {
    out.status = ReportStatus::failed;
    out.detail = e.what();
    return out;
  }
  const auto body = parse_json(resp);
  if (!resp.ok() || !body.value("accepted", false)) {
    out.status = ReportStatus::rejected;
    out.detail = body.value("reason", body.value("error", std::string("rejected")));
    return out;
  }
  // erase and restart: nothing of the reported chain stays behind
  chain_ = std::move(report.fresh_state);
  si_key_ = std::move(next_key);
  last_payload_ = chain_.current_id.bytes;
  out.status = ReportStatus::submitted;
  return out;
}

ReportOutcome Agent::report_alt(Seconds now) {
  ReportOutcome out;
  alt::AltReport report{ring_.report_keys(day_of(now))};
  out.alt_report = report;
  if (report.verification_keys.empty()) {
    out.status = ReportStatus::rejected;
    out.detail = "no keys inside the infection window";
    return out;
  }
  net::Request req{"POST", "/alt/report", {}, json{{"report", to_base64(alt::encode_report(report))}}.dump(), {}};
  net::Response resp;
  try {
    resp = registry_->send(req);
  } catch (const net::TransportError& e) {
    out.status = ReportStatus::failed;
    out.detail = e.what();
    return out;
  }
  const auto body = parse_json(resp);
  if (!resp.ok() || !body.value("accepted", false)) {
    out.status = ReportStatus::rejected;
    out.detail = body.value("reason", body.value("error", std::string("rejected")));
    return out;
  }
  ring_.reset();
  ring_.daily_keygen(day_of(now), *rng_);
  last_payload_.clear();
  out.status = ReportStatus::submitted;
  return out;
}

Alert Agent::sync_and_check(Seconds now) {
  (void)now;
  std::lock_guard lock(*mu_);
  if (!registry_) throw net::TransportError("no registry configured");
  Alert alert = config_.protocol == Protocol::alt_sig ? check_alt() : check_core();
  alert.redaction = config_.redaction;
  alert.at_risk = !alert.events.empty();
  if (hook_ && alert.at_risk) hook_(alert.events);
  return alert;
}

Alert Agent::check_core() {
  std::uint64_t cursor = cursor_;
  std::vector<core::Entry> entries;
  for (;;) {
    net::Request req{"GET",
                     "/entries",
                     {{"cursor", std::to_string(cursor)}, {"limit", std::to_string(config_.fetch_page)}},
                     {},
                     {}};
    const auto resp = registry_->send(req);
    if (!resp.ok()) throw net::TransportError("registry returned status " + std::to_string(resp.status));
    const auto body = parse_json(resp);
    std::uint64_t next = 0;
    try {
      for (const auto& j : body.at("entries")) entries.push_back(core::entry_from_json(j, config_.params));
      next = body.at("next_cursor").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw net::TransportError(std::string("bad entries page: ") + e.what());
    }
    if (next <= cursor) break;
    cursor = next;
  }

  Alert alert;
  const Seconds tol = config_.effective_tolerance();
  for (const auto& e : entries) {
    if (e.vk && !core::verify_entry_si(e, config_.params)) {
      ++skipped_entries_;
      continue;
    }
    std::vector<core::TimedId> ids;
    try {
      ids = core::regenerate(e, config_.params);
    } catch (const core::MalformedEntry&) {
      ++skipped_entries_;
      continue;
    }
    auto events = core::match_exposure(store_, ids, tol);
    alert.events.insert(alert.events.end(), events.begin(), events.end());
  }
  cursor_ = cursor;
  return alert;
}

Alert Agent::check_alt() {
  std::uint64_t cursor = alt_cursor_;
  std::vector<Bytes> keys;
  for (;;) {
    net::Request req{"GET",
                     "/alt/keys",
                     {{"cursor", std::to_string(cursor)}, {"limit", std::to_string(config_.fetch_page)}},
                     {},
                     {}};
    const auto resp = registry_->send(req);
    if (!resp.ok()) throw net::TransportError("registry returned status " + std::to_string(resp.status));
    const auto body = parse_json(resp);
    std::uint64_t next = 0;
    try {
      for (const auto& g : body.at("groups")) {
        for (const auto& k : g.at("keys")) keys.push_back(from_base64(k.get<std::string>()));
      }
      next = body.at("next_cursor").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw net::TransportError(std::string("bad key page: ") + e.what());
    }
    if (next <= cursor) break;
    cursor = next;
  }
  Alert alert;
  auto result = alt::check_exposure_alt(store_, keys);
  skipped_entries_ += result.malformed_keys;
  alert.events = std::move(result.events);
  alt_cursor_ = cursor;
  return alert;
}

std::vector<Bytes> Agent::check_narrowcast(net::Transport& transport, std::span<const narrowcast::TracePoint> trace,
                                           Seconds since, std::size_t budget) {
  std::lock_guard lock(*mu_);
  if (trace.empty()) return {};
  narrowcast::Client client(transport);
  const auto newest = std::max_element(trace.begin(), trace.end(),
                                       [](const auto& a, const auto& b) { return a.when < b.when; });
  const auto region = narrowcast::negotiate_region(
      newest->where, budget, [&](const narrowcast::Region& r) { return client.how_big(r, since); });
  const auto pairs = client.get_messages(region, since);
  return narrowcast::match_trace(trace, pairs);
}

// Snapshot layout: "PACTSNAP" || u16 version || sections, each
// tag (1 byte) || u32 length || body.
Bytes Agent::snapshot() const {
  std::lock_guard lock(*mu_);
  Bytes out(std::begin(kMagic), std::end(kMagic));
  put_u16(out, kSnapshotVersion);

  Bytes h;
  h.push_back(static_cast<std::uint8_t>(config_.protocol));
  put_u16(h, static_cast<std::uint16_t>(config_.params.n_bits));
  put_i64(h, config_.params.dt);
  put_i64(h, config_.params.delta);
  put_i64(h, config_.params.origin);
  put_section(out, 'H', h);

  if (config_.protocol != Protocol::alt_sig) {
    Bytes c;
    put_blob(c, chain_.current_seed);
    put_i64(c, chain_.current_index);
    put_i64(c, chain_.current_epoch);
    put_i64(c, chain_.current_time);
    put_blob(c, chain_.current_id.bytes);
    put_blob(c, chain_.window_seed);
    put_i64(c, chain_.window_time);
    c.push_back(chain_.bound_vk ? 1 : 0);
    if (chain_.bound_vk) put_bytes(c, *chain_.bound_vk);
    c.push_back(si_key_ ? 1 : 0);
    if (si_key_) {
      put_bytes(c, si_key_->secret.raw());
      put_bytes(c, si_key_->pub);
    }
    put_section(out, 'C', c);
  }

  Bytes d;
  put_u32(d, static_cast<std::uint32_t>(ring_.keys().size()));
  for (const auto& [day, key] : ring_.keys()) {
    put_i64(d, day);
    d.push_back(key.signing_key.present() ? 1 : 0);
    if (key.signing_key.present()) put_bytes(d, key.signing_key.raw());
    put_bytes(d, key.verification_key);
  }
  put_section(out, 'D', d);

  Bytes o;
  const auto records = store_.core_records();
  put_u32(o, static_cast<std::uint32_t>(records.size()));
  for (const auto& [id, t] : records) {
    put_blob(o, id.bytes);
    put_i64(o, t);
  }
  put_u32(o, static_cast<std::uint32_t>(store_.alt_buckets().size()));
  for (const auto& [day, bucket] : store_.alt_buckets()) {
    put_i64(o, day);
    put_u32(o, static_cast<std::uint32_t>(bucket.size()));
    for (const auto& tr : bucket) {
      put_bytes(o, tr.sigma);
      put_blob(o, tr.big_r);
      put_blob(o, tr.h);
    }
  }
  put_section(out, 'O', o);

  Bytes r;
  put_u64(r, cursor_);
  put_u64(r, alt_cursor_);
  put_blob(r, last_payload_);
  put_section(out, 'R', r);
  return out;
}

Agent Agent::restore(ByteView snapshot, Config config, crypto::RandomSource& rng, net::Transport* registry) {
  Reader top(snapshot);
  if (!std::equal(std::begin(kMagic), std::end(kMagic), top.view(sizeof kMagic).begin())) {
    throw DecodeError("not an agent snapshot");
  }
  if (top.u16() != kSnapshotVersion) throw DecodeError("unsupported snapshot version");

  Agent a(Restore{}, std::move(config), rng, registry);
  bool saw_header = false;
  while (!top.done()) {
    const char tag = static_cast<char>(top.u8());
    Reader r(top.view(top.u32()));
    switch (tag) {
      case 'H': {
        const auto proto = static_cast<Protocol>(r.u8());
        core::Params p;
        p.n_bits = r.u16();
        p.dt = get_i64(r);
        p.delta = get_i64(r);
        p.origin = get_i64(r);
        const auto& q = a.config_.params;
        if (proto != a.config_.protocol || p.n_bits != q.n_bits || p.dt != q.dt || p.delta != q.delta ||
            p.origin != q.origin) {
          throw Error("snapshot was taken with a different protocol or parameters");
        }
        saw_header = true;
        break;
      }
      case 'C': {
        auto& c = a.chain_;
        c.current_seed = get_blob(r);
        c.current_index = get_i64(r);
        c.current_epoch = get_i64(r);
        c.current_time = get_i64(r);
        c.current_id.bytes = get_blob(r);
        c.window_seed = get_blob(r);
        c.window_time = get_i64(r);
        if (r.u8()) c.bound_vk = crypto::public_key_from(r.view(crypto::kPublicKeySize));
        if (r.u8()) {
          std::array<std::uint8_t, crypto::kSecretKeySize> raw{};
          const auto v = r.view(raw.size());
          std::copy(v.begin(), v.end(), raw.begin());
          a.si_key_ = crypto::KeyPair{crypto::SecretKey(raw), crypto::public_key_from(r.view(crypto::kPublicKeySize))};
          sodium_memzero(raw.data(), raw.size());
        }
        break;
      }
      case 'D': {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
          alt::DailyKey key;
          key.day = get_i64(r);
          if (r.u8()) {
            std::array<std::uint8_t, crypto::kSecretKeySize> raw{};
            const auto v = r.view(raw.size());
            std::copy(v.begin(), v.end(), raw.begin());
            key.signing_key = crypto::SecretKey(raw);
            sodium_memzero(raw.data(), raw.size());
          }
          key.verification_key = crypto::public_key_from(r.view(crypto::kPublicKeySize));
          a.ring_.restore(std::move(key));
        }
        break;
      }
      case 'O': {
        const auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
          core::PseudonymId id{get_blob(r)};
          a.store_.add(id, get_i64(r));
        }
        const auto buckets = r.u32();
        for (std::uint32_t i = 0; i < buckets; ++i) {
          const auto day = get_i64(r);
          const auto count = r.u32();
          for (std::uint32_t k = 0; k < count; ++k) {
            AltTriple t;
            t.sigma = crypto::signature_from(r.view(crypto::kSignatureSize));
            t.big_r = get_blob(r);
            t.h = get_blob(r);
            a.store_.add_alt(t, day);
          }
        }
        break;
      }
      case 'R':
        a.cursor_ = r.u64();
        a.alt_cursor_ = r.u64();
        a.last_payload_ = get_blob(r);
        break;
      default:
        break;  // sections from newer writers are skipped
    }
  }
  if (!saw_header) throw DecodeError("snapshot has no header");
  return a;
}

}  // namespace pact::agent
