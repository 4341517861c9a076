#include "pact/simnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <queue>
#include <sstream>

#include "pact/variants.hpp"

namespace pact::sim {
namespace {

using nlohmann::json;

enum Phase { kReport = 0, kDeliver = 1, kTick = 2 };

Seconds epoch_start(Seconds t, const core::Params& p) { return core::epoch_index(t, p).start; }

std::int64_t window_days_for(const core::Params& p) {
  return (p.infection_window() + kSecondsPerDay - 1) / kSecondsPerDay;
}

double unit(crypto::RandomSource& rng) { return static_cast<double>(rng.u64() >> 11) * 0x1.0p-53; }

Bytes agent_seed(std::uint64_t seed, int index) {
  Bytes in;
  put_u64(in, seed);
  put_u64(in, static_cast<std::uint64_t>(index));
  const auto h = crypto::sha256(in);
  return Bytes(h.begin(), h.end());
}

std::vector<int> int_list(const json& params, const char* key) {
  std::vector<int> out;
  if (params.contains(key)) out = params.at(key).get<std::vector<int>>();
  return out;
}

bool in_range(int i, const Scenario& s) { return i >= 0 && i < static_cast<int>(s.agents.size()); }

/// Start of the reporter's disclosed interval in true time; the interval
/// ends at the report itself.
Seconds window_start(const Scenario& s, const Positive& p) {
  const Seconds skew = s.agents[static_cast<std::size_t>(p.agent)].skew;
  const Seconds local_report = s.start + p.at + skew;
  Seconds local_start;
  if (s.protocol == agent::Protocol::alt_sig) {
    local_start = (day_of(local_report) - window_days_for(s.params) + 1) * kSecondsPerDay;
  } else {
    const Seconds chain_start = epoch_start(s.start + skew, s.params);
    local_start = std::max(chain_start, epoch_start(local_report, s.params) - (s.params.delta - 1) * s.params.dt);
  }
  return local_start - skew;
}

}  // namespace

Seconds Scenario::effective_retention() const {
  return retention > 0 ? retention : params.infection_window() + delay() + 2 * params.dt;
}

Seconds Scenario::effective_tolerance() const {
  if (tolerance >= 0) return tolerance;
  return protocol == agent::Protocol::alt_sig ? alt::AltParams{}.tolerance : core::default_time_tolerance(params);
}

void Scenario::validate() const {
  params.validate();
  if (duration <= 0) throw Error("duration must be positive");
  if (agents.empty()) throw Error("scenario needs at least one agent");
  if (drop_probability < 0 || drop_probability > 1) throw Error("drop_probability must be in [0, 1]");
  if (registry_delay < -1) throw Error("registry delay must be non-negative");
  const Seconds slack = registry::Config{}.clock_slack;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (std::llabs(agents[i].skew) > slack) {
      throw Error("agent " + std::to_string(i) + ": skew beyond the registry clock slack of " +
                  std::to_string(slack) + " s");
    }
  }
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const auto& c = contacts[i];
    const std::string where = "contact " + std::to_string(i) + ": ";
    if (!in_range(c.a, *this) || !in_range(c.b, *this)) throw Error(where + "unknown agent");
    if (c.a == c.b) throw Error(where + "agent cannot meet itself");
    if (c.start < 0 || c.start >= c.end || c.end > duration) throw Error(where + "interval must satisfy 0 <= start < end <= duration");
  }
  std::set<int> reporters;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto& p = positives[i];
    const std::string where = "positive " + std::to_string(i) + ": ";
    if (!in_range(p.agent, *this)) throw Error(where + "unknown agent");
    if (p.at < 0 || p.at > duration) throw Error(where + "report time outside the run");
    if (!reporters.insert(p.agent).second) throw Error(where + "agent already reports once");
  }
  for (std::size_t i = 0; i < adversaries.size(); ++i) {
    const auto& a = adversaries[i];
    const auto& q = a.params;
    const std::string where = "adversary " + std::to_string(i) + " (" + a.kind + "): ";
    auto agents_ok = [&](const std::vector<int>& v) {
      return std::all_of(v.begin(), v.end(), [&](int x) { return in_range(x, *this); });
    };
    try {
      if (a.kind == "replay") {
        const auto mode = q.value("mode", std::string("published"));
        if (mode != "published" && mode != "captured") throw Error("mode must be published or captured");
        if (mode == "published" && protocol == agent::Protocol::alt_sig) {
          throw Error("published-id replay needs a core protocol; use mode captured");
        }
        if (mode == "captured" && q.value("replay_delay", Seconds{0}) < 0) throw Error("replay_delay must be >= 0");
        if (q.value("epochs", 4) < 1) throw Error("epochs must be >= 1");
        if (!agents_ok(int_list(q, "victims"))) throw Error("unknown victim");
      } else if (a.kind == "relay") {
        if (!q.contains("target") || !in_range(q.at("target").get<int>(), *this)) throw Error("needs a valid target");
        if (q.value("latency", Seconds{0}) < 0) throw Error("latency must be >= 0");
        if (!agents_ok(int_list(q, "victims"))) throw Error("unknown victim");
      } else if (a.kind == "seed-sharing") {
        const auto c = int_list(q, "colluders");
        if (c.size() < 2 || !agents_ok(c)) throw Error("needs at least two valid colluders");
        for (int x : c) {
          if (agents[static_cast<std::size_t>(x)].skew != agents[static_cast<std::size_t>(c[0])].skew) {
            throw Error("colluders must share a clock");
          }
        }
      } else if (a.kind == "flood") {
        if (q.value("count", 0) < 1) throw Error("count must be >= 1");
        const auto at = q.value("at", Seconds{0});
        if (at < 0 || at > duration) throw Error("at outside the run");
      } else if (a.kind == "linkage") {
        const auto posts = int_list(q, "posts");
        if (posts.empty() || !agents_ok(posts)) throw Error("needs listening posts");
      } else if (a.kind == "derived-seed") {
        if (protocol == agent::Protocol::alt_sig) throw Error("needs a core protocol");
        if (q.value("attempts", 3) < 1) throw Error("attempts must be >= 1");
      } else if (a.kind == "dual-framing") {
        if (!q.contains("attacker") || !q.contains("victim")) throw Error("needs attacker and victim");
        const int at = q.at("attacker").get<int>(), vi = q.at("victim").get<int>();
        if (!in_range(at, *this) || !in_range(vi, *this) || at == vi) throw Error("bad attacker/victim");
        if (protocol == agent::Protocol::alt_sig) throw Error("counterpart run needs a core protocol");
        const auto t = q.value("at", duration / 2);
        if (t < 0 || t > duration) throw Error("at outside the run");
      } else if (a.kind == "dual-surveillance") {
        const auto posts = int_list(q, "posts");
        if (posts.empty() || !agents_ok(posts)) throw Error("needs sites");
        if (protocol == agent::Protocol::alt_sig) throw Error("counterpart run needs a core protocol");
      } else {
        throw Error("unknown attack kind");
      }
    } catch (const json::exception& e) {
      throw Error(where + e.what());
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
}

json Scenario::to_json() const {
  json j;
  j["schema"] = kScenarioSchema;
  j["seed"] = seed;
  j["protocol"] = agent::to_string(protocol);
  j["params"] = {{"dt", params.dt}, {"delta", params.delta}, {"n_bits", params.n_bits}, {"origin", params.origin}};
  j["start"] = start;
  j["duration"] = duration;
  j["agents"] = json::array();
  for (const auto& a : agents) j["agents"].push_back({{"skew", a.skew}, {"adopter", a.adopter}});
  j["contacts"] = json::array();
  for (const auto& c : contacts) j["contacts"].push_back({{"a", c.a}, {"b", c.b}, {"start", c.start}, {"end", c.end}});
  j["positives"] = json::array();
  for (const auto& p : positives) j["positives"].push_back({{"agent", p.agent}, {"at", p.at}, {"consent", p.consent}});
  j["registry"] = {{"delay", delay()},
                   {"shuffle", registry_shuffle},
                   {"rate_limit", registry_rate_limit},
                   {"require_strong_integrity", require_strong_integrity},
                   {"alt_publication", alt_publication == registry::AltPublication::grouped ? "grouped" : "ungrouped"}};
  j["drop_probability"] = drop_probability;
  j["tolerance"] = tolerance;
  j["retention"] = retention;
  j["redaction"] = pact::to_string(redaction);
  j["adversaries"] = json::array();
  for (const auto& a : adversaries) {
    json x = a.params;
    x["kind"] = a.kind;
    j["adversaries"].push_back(x);
  }
  return j;
}

Scenario Scenario::from_json(const json& j) {
  Scenario s;
  try {
    const auto schema = j.value("schema", std::string(kScenarioSchema));
    if (schema != kScenarioSchema) throw Error("unsupported scenario schema: " + schema);
    s.seed = j.value("seed", s.seed);
    s.protocol = agent::protocol_from_string(j.value("protocol", std::string("core")));
    if (j.contains("params")) {
      const auto& p = j.at("params");
      s.params.dt = p.value("dt", s.params.dt);
      s.params.delta = p.value("delta", s.params.delta);
      s.params.n_bits = p.value("n_bits", s.params.n_bits);
      s.params.origin = p.value("origin", s.params.origin);
    }
    s.start = j.value("start", s.start);
    s.duration = j.value("duration", s.duration);
    const auto& agents = j.at("agents");
    if (agents.is_number_integer()) {
      const auto n = agents.get<int>();
      if (n < 0) throw Error("agent count must be non-negative");
      s.agents.resize(static_cast<std::size_t>(n));
    } else {
      for (const auto& a : agents) s.agents.push_back({a.value("skew", Seconds{0}), a.value("adopter", true)});
    }
    for (const auto& c : j.value("contacts", json::array())) {
      s.contacts.push_back({c.at("a").get<int>(), c.at("b").get<int>(), c.at("start").get<Seconds>(),
                            c.at("end").get<Seconds>()});
    }
    for (const auto& p : j.value("positives", json::array())) {
      s.positives.push_back({p.at("agent").get<int>(), p.at("at").get<Seconds>(), p.value("consent", true)});
    }
    if (j.contains("registry")) {
      const auto& r = j.at("registry");
      s.registry_delay = r.value("delay", s.registry_delay);
      s.registry_shuffle = r.value("shuffle", s.registry_shuffle);
      s.registry_rate_limit = r.value("rate_limit", s.registry_rate_limit);
      s.require_strong_integrity = r.value("require_strong_integrity", s.require_strong_integrity);
      const auto pub = r.value("alt_publication", std::string("grouped"));
      if (pub != "grouped" && pub != "ungrouped") throw Error("alt_publication must be grouped or ungrouped");
      s.alt_publication = pub == "grouped" ? registry::AltPublication::grouped : registry::AltPublication::ungrouped;
    }
    s.drop_probability = j.value("drop_probability", s.drop_probability);
    s.tolerance = j.value("tolerance", s.tolerance);
    s.retention = j.value("retention", s.retention);
    s.redaction = redaction_from_string(j.value("redaction", std::string("none")));
    for (const auto& a : j.value("adversaries", json::array())) {
      AttackSpec spec;
      spec.kind = a.at("kind").get<std::string>();
      spec.params = a;
      spec.params.erase("kind");
      s.adversaries.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("bad scenario: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  return from_json(j);
}

ExposureSet oracle_exposures(const Scenario& s, bool respect_adoption) {
  ExposureSet out;
  const Seconds end = s.start + s.duration;
  auto adopts = [&](int i) { return !respect_adoption || s.agents[static_cast<std::size_t>(i)].adopter; };
  for (std::size_t k = 0; k < s.positives.size(); ++k) {
    const auto& p = s.positives[k];
    if (!p.consent || !adopts(p.agent)) continue;
    const Seconds report = s.start + p.at;
    if (report + s.delay() > end) continue;
    const Seconds from = window_start(s, p);
    for (const auto& c : s.contacts) {
      if (c.a != p.agent && c.b != p.agent) continue;
      const int other = c.a == p.agent ? c.b : c.a;
      if (!adopts(other)) continue;
      const Seconds lo = std::max(s.start + c.start, from);
      const Seconds hi = std::min(s.start + c.end, report);
      if (lo < hi) out.insert({other, static_cast<int>(k)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// World

namespace {

class World;

class Adversary {
 public:
  explicit Adversary(AttackSpec spec) : spec_(std::move(spec)) {}
  virtual ~Adversary() = default;
  virtual void setup(World&) {}
  virtual void on_broadcast(World&, int /*sender*/, int /*receiver*/, const Bytes& /*payload*/, Seconds) {}
  /// Called after the registry publishes something, before agents sync.
  virtual void on_release(World&, Seconds) {}
  virtual void on_time(World&, Seconds) {}
  virtual std::optional<Seconds> wake() const { return std::nullopt; }
  virtual void score(World& w, AttackOutcome& out);
  const AttackSpec& spec() const { return spec_; }

 protected:
  AttackSpec spec_;
};

struct Node {
  AgentSpec spec;
  std::unique_ptr<crypto::DeterministicRandom> rng;
  std::unique_ptr<net::LocalTransport> local;
  std::unique_ptr<net::SpyTransport> spy;
  std::unique_ptr<agent::Agent> agent;
  std::size_t broadcasts = 0;
  std::size_t heard = 0;
  std::set<int> exposed_to;
};

struct Event {
  Seconds t;
  int phase;
  std::uint64_t seq;
  std::function<void()> fn;
  bool operator>(const Event& o) const { return std::tie(t, phase, seq) > std::tie(o.t, o.phase, o.seq); }
};

std::unique_ptr<Adversary> make_adversary(const AttackSpec& spec);

class World {
 public:
  explicit World(const Scenario& scenario);

  void run();
  RunResult result();

  const Scenario& s;
  registry::Registry registry;
  std::vector<Node> nodes;
  std::vector<std::unique_ptr<Adversary>> adversaries;
  crypto::DeterministicRandom adv_rng;
  alt::AltParams alt_params;
  ExposureSet alerts;
  std::vector<std::optional<agent::ReportOutcome>> outcomes;

  bool is_alt() const { return s.protocol == agent::Protocol::alt_sig; }
  Seconds end() const { return s.start + s.duration; }
  void schedule(Seconds t, int phase, std::function<void()> fn) {
    queue_.push({t, phase, seq_++, std::move(fn)});
  }
  /// Injects a payload into receiver's radio at true time t.
  bool hear(int receiver, ByteView payload, Seconds t) {
    auto& n = nodes[static_cast<std::size_t>(receiver)];
    if (!n.agent) return false;
    const bool ok = n.agent->on_hear(payload, t + n.spec.skew);
    if (ok) ++n.heard;
    return ok;
  }
  /// Positive index that owns a matched id or R; -1 when none does.
  int owner_of(const Bytes& matched) const;
  std::vector<int> adopters() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].agent) out.push_back(static_cast<int>(i));
    }
    return out;
  }
  std::set<int> reporters() const {
    std::set<int> out;
    for (const auto& p : s.positives) out.insert(p.agent);
    return out;
  }

  std::map<Bytes, int> id_owner;
  std::map<Bytes, crypto::PublicKey> r_to_vk;
  std::map<crypto::PublicKey, int> vk_owner;
  std::size_t submitted = 0;
  std::size_t rejected = 0;
  std::size_t dropped = 0;
  std::size_t sync_failures = 0;

 private:
  void deliver(int sender, int receiver, Seconds t);
  void report(std::size_t k, Seconds t);
  void tick(Seconds t);

  Seconds now_ = 0;
  crypto::DeterministicRandom drop_rng_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
};

registry::Config registry_config(const Scenario& s) {
  auto c = registry::Config::defaults_for(s.params);
  c.delay = s.delay();
  c.shuffle = s.registry_shuffle;
  c.shuffle_seed = s.seed;
  c.rate_limit = s.registry_rate_limit;
  c.require_strong_integrity = s.require_strong_integrity;
  c.alt_publication = s.alt_publication;
  c.alt_window_days = window_days_for(s.params);
  return c;
}

World::World(const Scenario& scenario)
    : s(scenario),
      registry(registry_config(scenario)),
      adv_rng(agent_seed(scenario.seed, -1)),
      drop_rng_(agent_seed(scenario.seed, -2)) {
  s.validate();
  for (const auto& a : s.adversaries) adversaries.push_back(make_adversary(a));

  std::map<int, int> seed_of;  // seed-sharing colluders reuse the first colluder's seed
  for (const auto& a : s.adversaries) {
    if (a.kind != "seed-sharing") continue;
    const auto c = int_list(a.params, "colluders");
    for (int x : c) seed_of[x] = seed_of.count(c[0]) ? seed_of[c[0]] : c[0];
  }

  agent::Config cfg;
  cfg.params = s.params;
  cfg.protocol = s.protocol;
  cfg.retention = s.effective_retention();
  cfg.redaction = s.redaction;
  cfg.time_tolerance = s.tolerance;
  cfg.alt = alt_params;

  nodes.resize(s.agents.size());
  outcomes.resize(s.positives.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& n = nodes[i];
    n.spec = s.agents[i];
    if (!n.spec.adopter) continue;
    const int seed_index = seed_of.count(static_cast<int>(i)) ? seed_of[static_cast<int>(i)] : static_cast<int>(i);
    n.rng = std::make_unique<crypto::DeterministicRandom>(agent_seed(s.seed, seed_index));
    n.local = std::make_unique<net::LocalTransport>("agent-" + std::to_string(i));
    n.local->mount("/", [this](const net::Request& r) { return registry.handle(r, now_); });
    n.spy = std::make_unique<net::SpyTransport>(n.local.get());
    n.agent = std::make_unique<agent::Agent>(cfg, *n.rng, n.spy.get(), s.start + n.spec.skew);
  }
  for (auto& a : adversaries) a->setup(*this);
}

int World::owner_of(const Bytes& matched) const {
  if (is_alt()) {
    auto r = r_to_vk.find(matched);
    if (r == r_to_vk.end()) return -1;
    auto v = vk_owner.find(r->second);
    return v == vk_owner.end() ? -1 : v->second;
  }
  auto it = id_owner.find(matched);
  return it == id_owner.end() ? -1 : it->second;
}

void World::deliver(int sender, int receiver, Seconds t) {
  auto& from = nodes[static_cast<std::size_t>(sender)];
  auto& to = nodes[static_cast<std::size_t>(receiver)];
  if (!from.agent || !to.agent) return;
  if (s.drop_probability > 0 && unit(drop_rng_) < s.drop_probability) {
    ++dropped;
    return;
  }
  const Seconds local = t + from.spec.skew;
  const auto tick = from.agent->tick(local);
  ++from.broadcasts;
  if (is_alt() && !tick.payload.empty()) {
    const auto b = alt::decode_broadcast(tick.payload, alt_params);
    if (const auto* key = from.agent->keys().find(day_of(local))) r_to_vk[b.big_r] = key->verification_key;
  }
  for (auto& a : adversaries) a->on_broadcast(*this, sender, receiver, tick.payload, t);
  hear(receiver, tick.payload, t);
}

void World::report(std::size_t k, Seconds t) {
  const auto& p = s.positives[k];
  auto& n = nodes[static_cast<std::size_t>(p.agent)];
  if (!n.agent) return;  // no app, nothing to report from
  auto out = n.agent->make_report(t + n.spec.skew, p.consent);
  if (out.status == agent::ReportStatus::rejected || out.status == agent::ReportStatus::failed) ++rejected;
  if (out.status == agent::ReportStatus::submitted) {
    ++submitted;
    if (out.entry) {
      for (auto& id : core::regenerate(*out.entry, s.params)) id_owner[id.id.bytes] = static_cast<int>(k);
    }
    if (out.alt_report) {
      for (const auto& vk : out.alt_report->verification_keys) vk_owner[vk] = static_cast<int>(k);
    }
    // the fresh identity reaches peers that are still nearby
    const Seconds rel = t - s.start;
    for (const auto& c : s.contacts) {
      if ((c.a == p.agent || c.b == p.agent) && c.start < rel && rel < c.end) {
        const int other = c.a == p.agent ? c.b : c.a;
        schedule(t, kDeliver, [this, a = p.agent, other, t] { deliver(a, other, t); });
      }
    }
  }
  outcomes[k] = std::move(out);
}

void World::tick(Seconds t) {
  if (registry.release_tick(t) == 0) {
    for (auto& n : nodes) {
      if (n.agent) n.agent->purge(t + n.spec.skew);
    }
    return;
  }
  for (auto& a : adversaries) a->on_release(*this, t);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto& n = nodes[i];
    if (!n.agent) continue;
    try {
      const auto alert = n.agent->sync_and_check(t + n.spec.skew);
      for (const auto& e : alert.events) {
        const int k = owner_of(e.matched);
        alerts.insert({static_cast<int>(i), k});
        n.exposed_to.insert(k);
      }
    } catch (const net::TransportError&) {
      ++sync_failures;
    }
    n.agent->purge(t + n.spec.skew);
  }
}

void World::run() {
  for (std::size_t k = 0; k < s.positives.size(); ++k) {
    schedule(s.start + s.positives[k].at, kReport, [this, k] { report(k, now_); });
  }
  for (auto& a : adversaries) {
    if (auto w = a->wake()) schedule(s.start + *w, kReport, [this, adv = a.get()] { adv->on_time(*this, now_); });
  }
  for (const auto& c : s.contacts) {
    const Seconds cs = s.start + c.start, ce = s.start + c.end;
    for (auto [from, to] : {std::pair{c.a, c.b}, std::pair{c.b, c.a}}) {
      if (!nodes[static_cast<std::size_t>(from)].agent || !nodes[static_cast<std::size_t>(to)].agent) continue;
      const Seconds skew = nodes[static_cast<std::size_t>(from)].spec.skew;
      schedule(cs, kDeliver, [this, from, to, cs] { deliver(from, to, cs); });
      for (Seconds b = epoch_start(cs + skew, s.params) + s.params.dt - skew; b < ce; b += s.params.dt) {
        schedule(b, kDeliver, [this, from, to, b] { deliver(from, to, b); });
      }
    }
  }
  for (Seconds t = epoch_start(s.start, s.params) + s.params.dt; t < end(); t += s.params.dt) {
    schedule(t, kTick, [this, t] { tick(t); });
  }
  schedule(end(), kTick, [this] { tick(end()); });

  while (!queue_.empty()) {
    auto ev = queue_.top();
    queue_.pop();
    now_ = ev.t;
    ev.fn();
  }
}

RunResult World::result() {
  RunResult r;
  r.alerts = alerts;
  r.oracle = oracle_exposures(s, true);
  for (const auto& a : r.alerts) r.false_positives += r.oracle.count(a) ? 0 : 1;
  for (const auto& o : r.oracle) r.false_negatives += r.alerts.count(o) ? 0 : 1;
  r.reports_submitted = submitted;
  r.reports_rejected = rejected;
  for (const auto& n : nodes) {
    AgentResult ar;
    ar.alerted = !n.exposed_to.empty();
    ar.exposed_to.assign(n.exposed_to.begin(), n.exposed_to.end());
    ar.broadcasts = n.broadcasts;
    ar.heard = n.heard;
    if (n.agent) {
      ar.bytes_sent = n.spy->bytes_sent();
      ar.bytes_received = n.spy->bytes_received();
      ar.requests = n.spy->requests().size();
      ar.stored = n.agent->store().size();
    }
    r.agents.push_back(std::move(ar));
  }
  for (auto& a : adversaries) {
    AttackOutcome o;
    o.kind = a->spec().kind;
    o.protocol = agent::to_string(s.protocol);
    a->score(*this, o);
    r.attacks.push_back(o.to_json());
  }
  return r;
}

void Adversary::score(World& w, AttackOutcome& out) {
  const auto oracle = oracle_exposures(w.s, true);
  for (const auto& a : w.alerts) out.false_alerts += oracle.count(a) ? 0 : 1;
  out.succeeded = out.false_alerts > 0;
}

// Rebroadcasts published ids to every victim as soon as they appear.
class PublishedReplay final : public Adversary {
 public:
  using Adversary::Adversary;

  void setup(World& w) override {
    victims_ = int_list(spec_.params, "victims");
    if (victims_.empty()) {
      const auto rep = w.reporters();
      for (int i : w.adopters()) {
        if (!rep.count(i)) victims_.push_back(i);
      }
    }
    epochs_ = spec_.params.value("epochs", 4);
  }

  void on_release(World& w, Seconds t) override {
    const auto page = w.registry.fetch(cursor_);
    cursor_ = page.next_cursor;
    for (const auto& p : page.entries) {
      const auto ids = core::regenerate(p.entry, w.s.params);
      const auto from = ids.size() > static_cast<std::size_t>(epochs_) ? ids.size() - static_cast<std::size_t>(epochs_) : 0;
      for (std::size_t i = from; i < ids.size(); ++i) {
        for (int v : victims_) replayed_ += w.hear(v, ids[i].id.bytes, t) ? 1 : 0;
      }
    }
  }

  void score(World& w, AttackOutcome& out) override {
    Adversary::score(w, out);
    out.details["replayed"] = replayed_;
    out.details["victims"] = victims_.size();
    out.details["registry_delay"] = w.s.delay();
  }

 private:
  std::vector<int> victims_;
  int epochs_ = 4;
  std::uint64_t cursor_ = 0;
  std::size_t replayed_ = 0;
};

// Records broadcasts and plays them back elsewhere after a fixed latency.
// Covers both the relay and the captured-replay attacks.
class CaptureReplay final : public Adversary {
 public:
  using Adversary::Adversary;

  void setup(World& w) override {
    const auto& q = spec_.params;
    if (q.contains("target")) target_ = q.at("target").get<int>();
    latency_ = spec_.kind == "relay" ? q.value("latency", Seconds{0}) : q.value("replay_delay", w.s.params.dt * 2);
    victims_ = int_list(q, "victims");
    if (victims_.empty()) {
      for (int i : w.adopters()) {
        if (i != target_) victims_.push_back(i);
      }
    }
  }

  void on_broadcast(World& w, int sender, int, const Bytes& payload, Seconds t) override {
    if (target_ >= 0 && sender != target_) return;
    if (payload.empty() || !seen_.insert(payload).second) return;
    const Seconds at = t + latency_;
    if (at > w.end()) return;
    for (int v : victims_) {
      if (v == sender) continue;
      w.schedule(at, kDeliver, [&w, v, payload, at, this] { played_ += w.hear(v, payload, at) ? 1 : 0; });
    }
  }

  void score(World& w, AttackOutcome& out) override {
    Adversary::score(w, out);
    out.details["latency"] = latency_;
    out.details["captured"] = seen_.size();
    out.details["accepted_by_victims"] = played_;
  }

 private:
  int target_ = -1;
  Seconds latency_ = 0;
  std::vector<int> victims_;
  std::set<Bytes> seen_;
  std::size_t played_ = 0;
};

class SeedSharing final : public Adversary {
 public:
  using Adversary::Adversary;
  void score(World& w, AttackOutcome& out) override {
    Adversary::score(w, out);
    out.details["colluders"] = spec_.params.at("colluders");
  }
};

class Flood final : public Adversary {
 public:
  using Adversary::Adversary;

  std::optional<Seconds> wake() const override { return spec_.params.value("at", Seconds{0}); }

  void on_time(World& w, Seconds t) override {
    const auto count = spec_.params.value("count", 1);
    const auto source = spec_.params.value("source", std::string("flooder"));
    const auto& p = w.s.params;
    for (int i = 0; i < count; ++i) {
      registry::SubmitResult r;
      if (w.is_alt()) {
        r = w.registry.submit_alt({{crypto::ed25519_keypair(w.adv_rng).pub}}, t, source);
      } else {
        core::Entry e;
        e.window_seed = w.adv_rng.bytes(p.seed_bytes());
        e.t_end = epoch_start(t, p);
        e.t_start = e.t_end - (std::min<std::int64_t>(p.delta, 4) - 1) * p.dt;
        r = w.registry.submit(e, t, source);
      }
      if (r.accepted) {
        ++accepted_;
      } else {
        ++rejected_;
        ++reasons_[registry::to_string(*r.reason)];
      }
    }
  }

  void score(World& w, AttackOutcome& out) override {
    Adversary::score(w, out);
    out.accepted_submissions = accepted_;
    out.rejected_submissions = rejected_;
    out.succeeded = rejected_ == 0;
    out.details["rejections"] = reasons_;
  }

 private:
  std::size_t accepted_ = 0;
  std::size_t rejected_ = 0;
  std::map<std::string, std::size_t> reasons_;
};

// Listening posts record everything they hear; published reports then tell
// the adversary which recordings belong to the same person.
class Linkage final : public Adversary {
 public:
  using Adversary::Adversary;

  void setup(World&) override {
    for (int p : int_list(spec_.params, "posts")) heard_[p];
  }

  void on_broadcast(World&, int, int receiver, const Bytes& payload, Seconds) override {
    auto it = heard_.find(receiver);
    if (it != heard_.end() && !payload.empty()) it->second.insert(payload);
  }

  void score(World& w, AttackOutcome& out) override {
    Adversary::score(w, out);
    std::size_t best = 0;
    json groups = json::array();
    auto tally = [&](const std::map<int, std::size_t>& per_post) {
      std::size_t ids = 0;
      for (const auto& [post, n] : per_post) ids += n;
      best = std::max(best, per_post.size());
      if (per_post.size() >= 2) out.linkable_ids += ids;
      json g = json::object();
      for (const auto& [post, n] : per_post) g[std::to_string(post)] = n;
      groups.push_back(g);
    };
    if (w.is_alt()) {
      const auto page = w.registry.fetch_alt(0);
      for (const auto& group : page.groups) {
        std::vector<Bytes> keys;
        for (const auto& k : group.keys) keys.emplace_back(k.begin(), k.end());
        std::map<int, std::size_t> per_post;
        for (const auto& [post, payloads] : heard_) {
          ObservationStore store(w.s.params, w.s.effective_retention(), Redaction::none);
          for (const auto& pl : payloads) {
            const auto b = alt::decode_broadcast(pl, w.alt_params);
            store.add_alt({b.sigma, b.big_r, b.h}, 0);
          }
          const auto n = alt::check_exposure_alt(store, keys).events.size();
          if (n) per_post[post] = n;
        }
        tally(per_post);
      }
    } else {
      for (const auto& p : w.registry.fetch(0).entries) {
        std::set<Bytes> ids;
        for (auto& id : core::regenerate(p.entry, w.s.params)) ids.insert(std::move(id.id.bytes));
        std::map<int, std::size_t> per_post;
        for (const auto& [post, payloads] : heard_) {
          std::size_t n = 0;
          for (const auto& pl : payloads) n += ids.count(pl);
          if (n) per_post[post] = n;
        }
        tally(per_post);
      }
    }
    out.linked_sites = best;
    out.succeeded = best >= 2;
    out.details["reports"] = groups;
  }

 private:
  std::map<int, std::set<Bytes>> heard_;
};

// Takes a published seed, walks it forward and re-reports the tail under a
// new name. With strong integrity the copy cannot carry a valid signature.
class DerivedSeed final : public Adversary {
 public:
  using Adversary::Adversary;

  void on_release(World& w, Seconds t) override {
    if (done_) return;
    const auto page = w.registry.fetch(0);
    if (page.entries.empty()) return;
    done_ = true;
    const auto& original = page.entries.front().entry;
    const auto& p = w.s.params;
    std::set<Bytes> victim_ids;
    for (auto& id : core::regenerate(original, p)) victim_ids.insert(std::move(id.id.bytes));

    const int attempts = spec_.params.value("attempts", 3);
    for (int k = 1; k <= attempts; ++k) {
      if (original.t_start + k * p.dt > original.t_end) break;
      Bytes seed = original.window_seed;
      for (int i = 0; i < k; ++i) {
        seed = original.vk ? core::derive_next_bound(seed, *original.vk, p).next_seed
                           : core::derive_next(seed, p).next_seed;
      }
      core::Entry plain;
      plain.window_seed = seed;
      plain.t_start = original.t_start + k * p.dt;
      plain.t_end = original.t_end;
      std::vector<core::Entry> tries{plain};
      if (original.vk) {
        core::Entry copied = plain;
        copied.vk = original.vk;
        copied.si_signature = original.si_signature;
        tries.push_back(copied);
      }
      for (std::size_t v = 0; v < tries.size(); ++v) {
        const auto r = w.registry.submit(tries[v], t, "rereporter-" + std::to_string(k) + "-" + std::to_string(v));
        json a{{"steps", k}, {"form", v == 0 ? "plain" : "copied-signature"}, {"accepted", r.accepted}};
        if (r.accepted) {
          ++accepted_;
          std::size_t overlap = 0;
          for (const auto& id : core::regenerate(tries[v], p)) overlap += victim_ids.count(id.id.bytes);
          a["victim_ids_regenerated"] = overlap;
        } else {
          ++rejected_;
          a["reason"] = registry::to_string(*r.reason);
        }
        attempts_.push_back(a);
      }
    }

    // signing the derived seed under the attacker's own key is accepted but
    // names a different chain
    const auto kp = crypto::ed25519_keypair(w.adv_rng);
    core::Entry own;
    own.window_seed = core::derive_next(original.window_seed, p).next_seed;
    own.t_start = original.t_start + p.dt <= original.t_end ? original.t_start + p.dt : original.t_start;
    own.t_end = original.t_end;
    own = core::sign_entry(own, kp);
    const auto r = w.registry.submit(own, t, "rereporter-own-key");
    std::size_t matches = 0;
    for (const auto& id : core::regenerate(own, p)) matches += victim_ids.count(id.id.bytes);
    for (const auto& n : w.nodes) {
      if (!n.agent) continue;
      for (const auto& id : core::regenerate(own, p)) matches += n.agent->store().heard_times(id.id).size();
    }
    own_key_ = {{"accepted", r.accepted}, {"matches", matches}};
  }

  void score(World& w, AttackOutcome& out) override {
    Adversary::score(w, out);
    out.accepted_submissions = accepted_;
    out.rejected_submissions = rejected_;
    out.succeeded = accepted_ > 0;
    out.details["attempts"] = attempts_;
    out.details["own_key"] = own_key_;
    out.details["strong_integrity"] = w.s.require_strong_integrity;
  }

 private:
  bool done_ = false;
  std::size_t accepted_ = 0;
  std::size_t rejected_ = 0;
  json attempts_ = json::array();
  json own_key_ = json::object();
};

std::int64_t epochs_overlapping(Seconds lo, Seconds hi, const core::Params& p) {
  if (lo >= hi) return 0;
  return core::epoch_index(hi - 1, p).index - core::epoch_index(lo, p).index + 1;
}

// The dual scheme uploads collected ids, so an attacker can upload the ids it
// heard from a victim. Core counterpart: the attacker uploads those ids as if
// they were seeds.
class DualFraming final : public Adversary {
 public:
  using Adversary::Adversary;

  void setup(World& w) override {
    attacker_ = spec_.params.at("attacker").get<int>();
    victim_ = spec_.params.at("victim").get<int>();
    at_ = spec_.params.value("at", w.s.duration / 2);
  }
  std::optional<Seconds> wake() const override { return at_; }

  void on_broadcast(World&, int sender, int receiver, const Bytes& payload, Seconds) override {
    if (sender == victim_ && receiver == attacker_) collected_.insert(payload);
  }

  void on_time(World& w, Seconds t) override {
    for (const auto& id : collected_) {
      core::Entry e;
      e.window_seed = id;
      e.t_end = epoch_start(t, w.s.params);
      e.t_start = e.t_end;
      const auto r = w.registry.submit(e, t, "framer");
      r.accepted ? ++accepted_ : ++rejected_;
    }
  }

  void score(World& w, AttackOutcome& out) override {
    out.protocol = "dual";
    // dual world over the same contacts
    const variants::Ristretto255Group g;
    auto& rng = w.adv_rng;
    const auto victim_secret = variants::dual_keygen(g, rng);
    std::vector<variants::DualId<variants::Ristretto255Group>> heard;
    for (const auto& c : w.s.contacts) {
      const bool pair = (c.a == attacker_ && c.b == victim_) || (c.b == attacker_ && c.a == victim_);
      if (!pair) continue;
      const auto n = epochs_overlapping(c.start, std::min(c.end, at_), w.s.params);
      for (std::int64_t i = 0; i < n; ++i) heard.push_back(variants::dual_make_id(g, victim_secret, rng));
    }
    // the attacker reports everything it heard; the victim checks the list
    std::size_t framed = 0;
    for (const auto& id : heard) framed += variants::dual_is_mine(g, id, victim_secret) ? 1 : 0;
    out.false_alerts = framed;
    out.accepted_submissions = heard.size();
    out.succeeded = framed > 0;

    AttackOutcome core_side;
    std::size_t victim_alerts = 0;
    for (const auto& [who, k] : w.alerts) victim_alerts += (who == victim_ && k < 0) ? 1 : 0;
    core_side.false_alerts = victim_alerts;
    core_side.succeeded = victim_alerts > 0;
    core_side.accepted_submissions = accepted_;
    core_side.rejected_submissions = rejected_;
    core_side.kind = spec_.kind;
    core_side.protocol = agent::to_string(w.s.protocol);
    core_side.details["ids_uploaded"] = collected_.size();
    out.details["reported_ids"] = heard.size();
    out.details["counterpart"] = core_side.to_json();
  }

 private:
  int attacker_ = 0;
  int victim_ = 0;
  Seconds at_ = 0;
  std::set<Bytes> collected_;
  std::size_t accepted_ = 0;
  std::size_t rejected_ = 0;
};

// Site-specific exponents make every id broadcast at a site recognisable
// once a visitor uploads it. Core counterpart: the site broadcasts ordinary
// ids, but reports only ever contain the reporter's own chain.
class DualSurveillance final : public Adversary {
 public:
  using Adversary::Adversary;

  void setup(World&) override {
    for (int p : int_list(spec_.params, "posts")) site_ids_[p];
  }

  void on_broadcast(World&, int sender, int, const Bytes& payload, Seconds) override {
    auto it = site_ids_.find(sender);
    if (it != site_ids_.end()) it->second.insert(payload);
  }

  void score(World& w, AttackOutcome& out) override {
    out.protocol = "dual";
    const variants::Ristretto255Group g;
    auto& rng = w.adv_rng;
    std::map<int, variants::DualSecret<variants::Ristretto255Group>> site_secret;
    for (const auto& [site, ids] : site_ids_) site_secret.emplace(site, variants::dual_keygen(g, rng));
    std::map<int, variants::DualSecret<variants::Ristretto255Group>> user_secret;

    std::set<std::pair<int, int>> visited, traced;
    for (std::size_t k = 0; k < w.s.positives.size(); ++k) {
      const auto& pos = w.s.positives[k];
      if (!pos.consent || site_secret.count(pos.agent)) continue;
      std::vector<variants::DualId<variants::Ristretto255Group>> upload;
      for (const auto& c : w.s.contacts) {
        if (c.a != pos.agent && c.b != pos.agent) continue;
        const int other = c.a == pos.agent ? c.b : c.a;
        const auto n = epochs_overlapping(c.start, std::min(c.end, pos.at), w.s.params);
        if (n == 0) continue;
        auto it = site_secret.find(other);
        if (it != site_secret.end()) visited.insert({static_cast<int>(k), other});
        if (it == site_secret.end() && !user_secret.count(other)) user_secret.emplace(other, variants::dual_keygen(g, rng));
        const auto& secret = it != site_secret.end() ? it->second : user_secret.at(other);
        for (std::int64_t i = 0; i < n; ++i) upload.push_back(variants::dual_make_id(g, secret, rng));
      }
      for (const auto& id : upload) {
        for (const auto& [site, secret] : site_secret) {
          if (variants::dual_is_mine(g, id, secret)) traced.insert({static_cast<int>(k), site});
        }
      }
    }
    out.linked_sites = traced.size();
    out.linkable_ids = traced.size();
    out.succeeded = !visited.empty() && traced == visited;
    out.details["visited"] = visited.size();

    AttackOutcome core_side;
    core_side.kind = spec_.kind;
    core_side.protocol = agent::to_string(w.s.protocol);
    std::set<std::pair<int, int>> core_traced;
    for (const auto& p : w.registry.fetch(0).entries) {
      for (const auto& id : core::regenerate(p.entry, w.s.params)) {
        for (const auto& [site, ids] : site_ids_) {
          if (ids.count(id.id.bytes)) core_traced.insert({w.owner_of(id.id.bytes), site});
        }
      }
    }
    core_side.linked_sites = core_traced.size();
    core_side.succeeded = !core_traced.empty();
    out.details["counterpart"] = core_side.to_json();
  }

 private:
  std::map<int, std::set<Bytes>> site_ids_;
};

std::unique_ptr<Adversary> make_adversary(const AttackSpec& spec) {
  if (spec.kind == "replay") {
    if (spec.params.value("mode", std::string("published")) == "published") return std::make_unique<PublishedReplay>(spec);
    return std::make_unique<CaptureReplay>(spec);
  }
  if (spec.kind == "relay") return std::make_unique<CaptureReplay>(spec);
  if (spec.kind == "seed-sharing") return std::make_unique<SeedSharing>(spec);
  if (spec.kind == "flood") return std::make_unique<Flood>(spec);
  if (spec.kind == "linkage") return std::make_unique<Linkage>(spec);
  if (spec.kind == "derived-seed") return std::make_unique<DerivedSeed>(spec);
  if (spec.kind == "dual-framing") return std::make_unique<DualFraming>(spec);
  if (spec.kind == "dual-surveillance") return std::make_unique<DualSurveillance>(spec);
  throw Error("unknown attack kind: " + spec.kind);
}

}  // namespace

RunResult run_scenario(const Scenario& s) {
  World w(s);
  w.run();
  return w.result();
}

AttackOutcome run_attack(const Scenario& s) {
  if (s.adversaries.empty()) throw Error("scenario has no adversary");
  World w(s);
  w.run();
  AttackOutcome out;
  out.kind = s.adversaries.front().kind;
  out.protocol = agent::to_string(s.protocol);
  w.adversaries.front()->score(w, out);
  return out;
}

json RunResult::to_json() const {
  auto pairs = [](const ExposureSet& set) {
    json a = json::array();
    for (const auto& [agent, positive] : set) a.push_back({{"agent", agent}, {"positive", positive}});
    return a;
  };
  json j;
  j["alerts"] = pairs(alerts);
  j["oracle"] = pairs(oracle);
  j["false_positives"] = false_positives;
  j["false_negatives"] = false_negatives;
  j["reports_submitted"] = reports_submitted;
  j["reports_rejected"] = reports_rejected;
  j["agents"] = json::array();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    j["agents"].push_back({{"agent", i},
                           {"alerted", a.alerted},
                           {"exposed_to", a.exposed_to},
                           {"bytes_sent", a.bytes_sent},
                           {"bytes_received", a.bytes_received},
                           {"requests", a.requests},
                           {"broadcasts", a.broadcasts},
                           {"heard", a.heard},
                           {"stored", a.stored}});
  }
  j["attacks"] = attacks;
  return j;
}

std::string RunResult::summary() const {
  std::size_t alerted = 0;
  for (const auto& a : agents) alerted += a.alerted ? 1 : 0;
  std::ostringstream o;
  o << "agents " << agents.size() << ", reports " << reports_submitted << " (" << reports_rejected << " rejected)\n";
  o << "alerts " << alerts.size() << " (agents alerted " << alerted << "), oracle " << oracle.size()
    << ", false positives " << false_positives << ", false negatives " << false_negatives << "\n";
  o << std::left << std::setw(7) << "agent" << std::setw(9) << "alerted" << std::setw(12) << "broadcasts"
    << std::setw(8) << "heard" << std::setw(10) << "requests" << std::setw(8) << "sent" << "received\n";
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    o << std::setw(7) << i << std::setw(9) << (a.alerted ? "yes" : "no") << std::setw(12) << a.broadcasts
      << std::setw(8) << a.heard << std::setw(10) << a.requests << std::setw(8) << a.bytes_sent << a.bytes_received
      << "\n";
  }
  for (const auto& a : attacks) {
    o << "attack " << a.at("kind").get<std::string>() << " on " << a.at("protocol").get<std::string>() << ": "
      << (a.at("succeeded").get<bool>() ? "succeeded" : "failed") << ", false alerts "
      << a.at("false_alerts").get<std::size_t>() << "\n";
  }
  return o.str();
}

json AttackOutcome::to_json() const {
  return {{"kind", kind},
          {"protocol", protocol},
          {"succeeded", succeeded},
          {"false_alerts", false_alerts},
          {"linkable_ids", linkable_ids},
          {"linked_sites", linked_sites},
          {"accepted_submissions", accepted_submissions},
          {"rejected_submissions", rejected_submissions},
          {"details", details}};
}

Scenario random_scenario(const RandomScenarioOptions& opts, std::uint64_t seed) {
  if (opts.agents < 2 || opts.days < 1 || opts.contacts < 0 || opts.positives < 0) throw Error("bad scenario options");
  if (opts.min_contact <= 0 || opts.max_contact < opts.min_contact) throw Error("bad contact lengths");
  crypto::DeterministicRandom rng(agent_seed(seed, -3));
  Scenario s;
  s.seed = seed;
  s.protocol = opts.protocol;
  s.params = opts.params;
  s.duration = opts.days * kSecondsPerDay;
  s.agents.resize(static_cast<std::size_t>(opts.agents));
  for (auto& a : s.agents) {
    if (opts.max_skew > 0) {
      a.skew = static_cast<Seconds>(rng.uniform(static_cast<std::uint64_t>(2 * opts.max_skew + 1))) - opts.max_skew;
    }
    a.adopter = opts.adoption >= 1.0 || unit(rng) < opts.adoption;
  }
  const auto n = static_cast<std::uint64_t>(opts.agents);
  for (int i = 0; i < opts.contacts; ++i) {
    Contact c;
    c.a = static_cast<int>(rng.uniform(n));
    c.b = static_cast<int>(rng.uniform(n - 1));
    if (c.b >= c.a) ++c.b;
    const Seconds len = opts.min_contact +
                        static_cast<Seconds>(rng.uniform(static_cast<std::uint64_t>(opts.max_contact - opts.min_contact + 1)));
    c.start = static_cast<Seconds>(rng.uniform(static_cast<std::uint64_t>(s.duration - len)));
    c.end = c.start + len;
    s.contacts.push_back(c);
  }
  // reporters are distinct and report with enough time left for publication
  std::vector<int> order(static_cast<std::size_t>(opts.agents));
  for (int i = 0; i < opts.agents; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform(i)]);
  const Seconds latest = s.duration - s.delay() - s.params.dt;
  const Seconds earliest = std::min<Seconds>(kSecondsPerDay, latest / 2);
  for (int k = 0; k < std::min(opts.positives, opts.agents); ++k) {
    Positive p;
    p.agent = order[static_cast<std::size_t>(k)];
    p.at = earliest + static_cast<Seconds>(rng.uniform(static_cast<std::uint64_t>(latest - earliest + 1)));
    s.positives.push_back(p);
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Benchmarks

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < std::max(1, reps); ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

}  // namespace

BenchReport bench_check_cost(const BenchOptions& opts) {
  if (opts.L.empty() || opts.S.empty() || opts.protocols.empty()) throw Error("benchmark ranges must be nonempty");
  for (auto l : opts.L) {
    if (l < 0) throw Error("L must be non-negative");
  }
  for (auto s : opts.S) {
    if (s < 1) throw Error("S must be positive");
  }
  core::Params params;
  params.delta = opts.delta;
  params.validate();
  crypto::DeterministicRandom rng(opts.seed);
  BenchReport report;

  {
    Bytes seed = rng.bytes(params.seed_bytes());
    constexpr int kSteps = 20000;
    report.t_g = best_of(opts.repetitions, [&] {
                   for (int i = 0; i < kSteps; ++i) seed = core::derive_next(seed, params).next_seed;
                 }) /
                 kSteps;
    const auto kp = crypto::ed25519_keypair(rng);
    const Bytes msg = rng.bytes(32);
    const auto sig = crypto::sign(kp.secret, msg);
    constexpr int kVerifies = 2000;
    volatile bool sink = false;
    report.t_vrfy = best_of(opts.repetitions, [&] {
                      for (int i = 0; i < kVerifies; ++i) sink = crypto::verify(kp.pub, sig, msg);
                    }) /
                    kVerifies;
    (void)sink;
  }

  const std::int64_t max_l = *std::max_element(opts.L.begin(), opts.L.end());
  const Seconds now = 1590969600;
  for (const auto protocol : opts.protocols) {
    const bool alt_side = protocol == agent::Protocol::alt_sig;
    const auto name = agent::to_string(protocol);
    for (const auto S : opts.S) {
      ObservationStore store(params, params.infection_window(), Redaction::none);
      std::vector<core::Entry> entries;
      std::vector<Bytes> keys;
      if (alt_side) {
        const auto signer = crypto::ed25519_keypair(rng);
        for (std::int64_t i = 0; i < S; ++i) {
          AltTriple t;
          t.big_r = rng.bytes(16);
          t.h = rng.bytes(16);
          t.sigma = crypto::sign(signer.secret, concat({t.big_r, t.h}));
          store.add_alt(t, day_of(now));
        }
        for (std::int64_t i = 0; i < max_l; ++i) {
          const auto pk = crypto::ed25519_keypair(rng).pub;
          keys.emplace_back(pk.begin(), pk.end());
        }
      } else {
        for (std::int64_t i = 0; i < S; ++i) store.add({rng.bytes(params.seed_bytes())}, now - i);
        for (std::int64_t i = 0; i < max_l; ++i) {
          core::Entry e;
          e.window_seed = rng.bytes(params.seed_bytes());
          e.t_end = epoch_start(now, params);
          e.t_start = e.t_end - (params.delta - 1) * params.dt;
          entries.push_back(std::move(e));
        }
      }
      std::vector<double> xs, ys;
      for (const auto L : opts.L) {
        std::size_t sink = 0;
        const double secs = best_of(opts.repetitions, [&] {
          if (alt_side) {
            sink += alt::check_exposure_alt(store, std::span<const Bytes>(keys.data(), static_cast<std::size_t>(L)))
                        .events.size();
          } else {
            for (std::int64_t i = 0; i < L; ++i) {
              const auto ids = core::regenerate(entries[static_cast<std::size_t>(i)], params);
              sink += core::match_exposure(store, ids, core::default_time_tolerance(params)).size();
            }
          }
        });
        (void)sink;
        BenchRow row{name, L, S, params.delta, secs, 0};
        if (L > 0) {
          const auto model = alt::cost_model(static_cast<double>(L), static_cast<double>(S),
                                             static_cast<double>(params.delta), report.t_g, report.t_vrfy);
          row.model_seconds = alt_side ? model.alt : model.pact;
        }
        report.rows.push_back(row);
        xs.push_back(static_cast<double>(L));
        ys.push_back(secs);
      }
      if (xs.size() >= 2) report.fits[{name, S}] = fit_line(xs, ys);
    }
  }
  return report;
}

json BenchReport::to_json() const {
  json j;
  j["t_g"] = t_g;
  j["t_vrfy"] = t_vrfy;
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"protocol", r.protocol},
                         {"L", r.L},
                         {"S", r.S},
                         {"delta", r.delta},
                         {"seconds", r.seconds},
                         {"model_seconds", r.model_seconds}});
  }
  j["fits"] = json::array();
  for (const auto& [key, f] : fits) {
    j["fits"].push_back(
        {{"protocol", key.first}, {"S", key.second}, {"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}});
  }
  return j;
}

std::string BenchReport::table() const {
  std::ostringstream o;
  o << std::scientific << std::setprecision(3);
  o << "t_G " << t_g << " s, t_Vrfy " << t_vrfy << " s\n";
  o << std::left << std::setw(24) << "protocol" << std::setw(8) << "L" << std::setw(8) << "S" << std::setw(8)
    << "delta" << std::setw(14) << "measured_s" << "model_s\n";
  for (const auto& r : rows) {
    o << std::setw(24) << r.protocol << std::setw(8) << r.L << std::setw(8) << r.S << std::setw(8) << r.delta
      << std::setw(14) << r.seconds << r.model_seconds << "\n";
  }
  for (const auto& [key, f] : fits) {
    o << "fit " << key.first << " S=" << key.second << ": time = " << f.slope << " * L + " << f.intercept
      << "  R^2 = " << std::fixed << std::setprecision(4) << f.r2 << std::scientific << std::setprecision(3) << "\n";
  }
  return o.str();
}

AdoptionPoint adoption_experiment(double p, int scenarios, const RandomScenarioOptions& base, std::uint64_t seed) {
  if (p < 0 || p > 1) throw Error("adoption must be in [0, 1]");
  AdoptionPoint out;
  out.p = p;
  for (int i = 0; i < scenarios; ++i) {
    auto opts = base;
    opts.adoption = p;
    const auto s = random_scenario(opts, seed + static_cast<std::uint64_t>(i));
    const auto truth = oracle_exposures(s, false);
    const auto run = run_scenario(s);
    out.exposures += truth.size();
    for (const auto& a : run.alerts) out.detected += truth.count(a);
  }
  return out;
}

}  // namespace pact::sim
