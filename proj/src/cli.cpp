#include "pact/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "pact/agent.hpp"
#include "pact/core.hpp"
#include "pact/narrowcast.hpp"
#include "pact/registry.hpp"
#include "pact/simnet.hpp"
#include "pact/transport.hpp"

namespace pact::cli {
namespace {

using nlohmann::json;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

Seconds wall_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Failure with a chosen exit code.
struct Exit {
  int code;
  std::string message;
};

struct Globals {
  std::string format = "human";
  std::string config_path;
  std::string registry_url;
  std::string narrowcast_url;
  int timeout = 5;
};

struct Output {
  std::ostream& out;
  bool json_mode;
  void emit(const json& j, const std::string& human) const {
    if (json_mode) {
      out << j.dump() << "\n";
    } else {
      out << human;
      if (!human.empty() && human.back() != '\n') out << "\n";
    }
  }
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Exit{kExitFailure, "cannot open " + path};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Exit{kExitFailure, path + ": " + e.what()};
  }
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Exit{kExitFailure, "cannot write " + path};
  out << body;
}

/// flags > environment > config file.
std::string resolve(const std::string& flag, const char* env_name, const char* config_key, const Globals& g,
                    const EnvLookup& env) {
  if (!flag.empty()) return flag;
  if (auto v = env(env_name); v && !v->empty()) return *v;
  std::string path = g.config_path;
  if (path.empty()) {
    if (auto v = env("PACT_CONFIG")) path = *v;
  }
  if (!path.empty()) {
    const auto cfg = read_json_file(path);
    if (cfg.contains(config_key)) return cfg.at(config_key).get<std::string>();
  }
  return {};
}

std::string require_url(const std::string& url, const char* what) {
  if (url.empty()) throw Exit{kExitUsage, std::string("no ") + what + " endpoint; pass a flag or set the environment variable"};
  return url;
}

struct KeyFile {
  std::string cert;
  crypto::KeyPair pair;
};

KeyFile load_key(const std::string& path) {
  const auto j = read_json_file(path);
  try {
    KeyFile k;
    k.cert = j.value("cert", std::string());
    const auto sk = from_base64(j.at("sk").get<std::string>());
    if (sk.size() != crypto::kSecretKeySize) throw Error("secret key must be 64 bytes");
    std::array<std::uint8_t, crypto::kSecretKeySize> raw{};
    std::copy(sk.begin(), sk.end(), raw.begin());
    k.pair.secret = crypto::SecretKey(raw);
    k.pair.pub = crypto::public_key_from(from_base64(j.at("vk").get<std::string>()));
    return k;
  } catch (const std::exception& e) {
    throw Exit{kExitFailure, path + ": bad key file: " + e.what()};
  }
}

std::vector<std::int64_t> parse_int_list(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Exit{kExitUsage, "not an integer list: " + text};
    }
  }
  if (out.empty()) throw Exit{kExitUsage, "empty list: " + text};
  return out;
}

json parse_body(const net::Response& r) {
  try {
    return json::parse(r.body);
  } catch (const json::exception&) {
    return json{{"error", r.body}};
  }
}

void serve_until_stopped(net::HttpServer& server, const std::string& host, int port, const std::string& port_file,
                         double duration, const std::function<void()>& every_second, std::ostream& err) {
  const int bound = server.bind(host, port);
  if (!port_file.empty()) write_file(port_file, std::to_string(bound) + "\n");
  err << "listening on " << host << ":" << bound << std::endl;
  g_stop = false;
  auto old_int = std::signal(SIGINT, on_signal);
  auto old_term = std::signal(SIGTERM, on_signal);
  std::thread worker([&] { server.listen(); });
  const auto started = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    if (every_second) every_second();
    if (duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() >= duration) {
      break;
    }
  }
  server.stop();
  worker.join();
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);
}

core::Params params_from(Seconds dt, std::int64_t delta) {
  core::Params p;
  p.dt = dt;
  p.delta = delta;
  try {
    p.validate();
  } catch (const Error& e) {
    throw Exit{kExitUsage, e.what()};
  }
  return p;
}

// ---------------------------------------------------------------------------
// Subcommand bodies

int agent_demo(const std::string& protocol_name, std::uint64_t seed, const Output& o) {
  const auto protocol = agent::protocol_from_string(protocol_name);
  core::Params params;
  params.dt = 900;
  params.delta = 96;
  auto rc = registry::Config::defaults_for(params);
  rc.shuffle_seed = seed;
  rc.require_strong_integrity = protocol == agent::Protocol::core_strong_integrity;
  registry::Registry reg(rc);
  Seconds now = 1590969600;
  net::LocalTransport local("demo");
  local.mount("/", [&](const net::Request& r) { return reg.handle(r, now); });
  net::SpyTransport alice_net(&local), bob_net(&local), carol_net(&local);

  agent::Config cfg;
  cfg.params = params;
  cfg.protocol = protocol;
  cfg.redaction = Redaction::day;
  crypto::DeterministicRandom ra(seed), rb(seed + 1), rcarol(seed + 2);
  agent::Agent alice(cfg, ra, &alice_net, now), bob(cfg, rb, &bob_net, now), carol(cfg, rcarol, &carol_net, now);

  // alice and bob share a table for an hour; carol is elsewhere
  for (Seconds t = now + 3600; t < now + 7200; t += params.dt) {
    bob.on_hear(alice.tick(t).payload, t);
    alice.on_hear(bob.tick(t).payload, t);
    carol.tick(t);
  }
  // report later the same day so every protocol's window still covers the meeting
  now += 6 * 3600;
  const auto report = alice.make_report(now, true);
  now += rc.delay;
  reg.release_tick(now);
  const auto bob_alert = bob.sync_and_check(now);
  const auto carol_alert = carol.sync_and_check(now);

  json j{{"protocol", agent::to_string(protocol)},
         {"report", agent::to_string(report.status)},
         {"bob", bob_alert.to_json()},
         {"carol", carol_alert.to_json()},
         {"carol_bytes_sent", carol_net.bytes_sent()}};
  std::ostringstream h;
  h << "protocol " << agent::to_string(protocol) << "\n";
  h << "alice reports: " << agent::to_string(report.status) << "\n";
  h << "bob (met alice): " << (bob_alert.at_risk ? "at risk" : "not at risk") << "\n";
  h << "carol (never met alice): " << (carol_alert.at_risk ? "at risk" : "not at risk") << ", uploaded "
    << carol_net.bytes_sent() << " request bytes, all GET\n";
  o.emit(j, h.str());
  return report.status == agent::ReportStatus::submitted && bob_alert.at_risk && !carol_alert.at_risk ? kExitOk
                                                                                                        : kExitFailure;
}

json registry_get(net::Transport& t, const std::string& path, const std::map<std::string, std::string>& query) {
  net::Request req{"GET", path, query, {}, {}};
  const auto resp = t.send(req);
  auto body = parse_body(resp);
  if (!resp.ok()) throw Exit{kExitFailure, "registry answered " + std::to_string(resp.status) + ": " + body.dump()};
  return body;
}

}  // namespace

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  crypto::init();
  CLI::App app{"pact: privacy-preserving exposure notification tools", "pact"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"human", "json"}));
  app.add_flag_callback("--json", [&] { g.format = "json"; }, "shorthand for --format json");
  app.add_option("--config", g.config_path, "JSON config file with registry_url / narrowcast_url");
  app.add_option("--registry", g.registry_url, "registry base URL");
  app.add_option("--narrowcast", g.narrowcast_url, "narrowcast base URL");
  app.add_option("--timeout", g.timeout, "network timeout in seconds")->check(CLI::PositiveNumber);

  std::function<int()> action;

  // registry serve
  auto* reg_cmd = app.add_subcommand("registry", "registry service");
  reg_cmd->require_subcommand(1);
  auto* reg_serve = reg_cmd->add_subcommand("serve", "run the registry HTTP service");
  struct {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string whitelist, log, port_file;
    Seconds dt = 900, delay = -1;
    std::int64_t delta = 1344;
    bool no_shuffle = false, strong = false;
    std::size_t rate_limit = 10;
    double duration = 0;
  } rs;
  reg_serve->add_option("--host", rs.host);
  reg_serve->add_option("--port", rs.port)->check(CLI::Range(0, 65535));
  reg_serve->add_option("--whitelist", rs.whitelist, "signer whitelist JSON")->check(CLI::ExistingFile);
  reg_serve->add_option("--log", rs.log, "append-only record file");
  reg_serve->add_option("--port-file", rs.port_file, "write the bound port here");
  reg_serve->add_option("--dt", rs.dt);
  reg_serve->add_option("--delta", rs.delta);
  reg_serve->add_option("--delay", rs.delay, "publication delay in seconds (default 2*dt)");
  reg_serve->add_flag("--no-shuffle", rs.no_shuffle);
  reg_serve->add_flag("--require-strong-integrity", rs.strong);
  reg_serve->add_option("--rate-limit", rs.rate_limit);
  reg_serve->add_option("--duration", rs.duration, "stop after this many seconds");
  reg_serve->callback([&] {
    action = [&] {
      auto cfg = registry::Config::defaults_for(params_from(rs.dt, rs.delta));
      if (rs.delay >= 0) cfg.delay = rs.delay;
      cfg.shuffle = !rs.no_shuffle;
      cfg.require_strong_integrity = rs.strong;
      cfg.rate_limit = rs.rate_limit;
      if (!rs.log.empty()) cfg.log_path = rs.log;
      registry::SignaturePolicy policy;
      if (!rs.whitelist.empty()) policy = registry::SignaturePolicy::load(rs.whitelist);
      registry::Registry reg(cfg, policy);
      net::HttpServer server([&](const net::Request& r) { return reg.handle(r, wall_now()); });
      serve_until_stopped(server, rs.host, rs.port, rs.port_file, rs.duration, [&] { reg.release_tick(wall_now()); },
                          err);
      return kExitOk;
    };
  });

  // narrowcast serve | announce | query
  auto* nc_cmd = app.add_subcommand("narrowcast", "narrowcast service and client");
  nc_cmd->require_subcommand(1);
  auto* nc_serve = nc_cmd->add_subcommand("serve", "run the narrowcast HTTP service");
  struct {
    std::string host = "127.0.0.1";
    int port = 8081;
    std::string whitelist, port_file;
    double duration = 0;
  } ns;
  nc_serve->add_option("--host", ns.host);
  nc_serve->add_option("--port", ns.port)->check(CLI::Range(0, 65535));
  nc_serve->add_option("--whitelist", ns.whitelist, "authority whitelist JSON")->check(CLI::ExistingFile);
  nc_serve->add_option("--port-file", ns.port_file);
  nc_serve->add_option("--duration", ns.duration);
  nc_serve->callback([&] {
    action = [&] {
      registry::SignaturePolicy policy;
      if (!ns.whitelist.empty()) policy = registry::SignaturePolicy::load(ns.whitelist);
      narrowcast::Server nc(policy);
      net::HttpServer server([&](const net::Request& r) { return nc.handle(r, wall_now()); });
      serve_until_stopped(server, ns.host, ns.port, ns.port_file, ns.duration, {}, err);
      return kExitOk;
    };
  });

  struct {
    double lat = 0, lon = 0;
    std::uint32_t radius = 100;
    Seconds from = 0, to = 0, since = 0, at = 0;
    std::string message, key;
    std::size_t budget = 64 * 1024;
  } na;
  auto* nc_announce = nc_cmd->add_subcommand("announce", "sign and post a message for an area");
  nc_announce->add_option("--lat", na.lat)->required();
  nc_announce->add_option("--lon", na.lon)->required();
  nc_announce->add_option("--radius", na.radius, "metres");
  nc_announce->add_option("--from", na.from, "area start, unix seconds")->required();
  nc_announce->add_option("--to", na.to, "area end, unix seconds")->required();
  nc_announce->add_option("--message", na.message)->required();
  nc_announce->add_option("--key", na.key, "key file from keygen")->required()->check(CLI::ExistingFile);
  nc_announce->callback([&] {
    action = [&] {
      const auto url = require_url(resolve(g.narrowcast_url, "PACT_NARROWCAST_URL", "narrowcast_url", g, env), "narrowcast");
      const auto key = load_key(na.key);
      if (key.cert.empty()) throw Exit{kExitFailure, "key file has no cert id"};
      narrowcast::Area area{narrowcast::Location::from_degrees(na.lat, na.lon), na.radius, na.from, na.to};
      const auto entry = narrowcast::sign_announcement(area, to_bytes(na.message), key.cert, key.pair.secret);
      net::HttpTransport http(url, g.timeout);
      narrowcast::Client client(http);
      const auto r = client.announce(entry);
      Output o{out, g.format == "json"};
      json j{{"accepted", r.accepted}};
      if (r.reason) j["reason"] = narrowcast::to_string(*r.reason);
      if (!r.detail.empty()) j["detail"] = r.detail;
      o.emit(j, r.accepted ? "announced" : "rejected: " + j.value("reason", std::string("?")) + " " + r.detail);
      return r.accepted ? kExitOk : kExitFailure;
    };
  });

  auto* nc_query = nc_cmd->add_subcommand("query", "fetch messages for the surrounding region and match locally");
  nc_query->add_option("--lat", na.lat)->required();
  nc_query->add_option("--lon", na.lon)->required();
  nc_query->add_option("--at", na.at, "time of the trace point (default now)");
  nc_query->add_option("--since", na.since, "only messages received after this time");
  nc_query->add_option("--budget", na.budget, "largest response to accept, bytes");
  nc_query->callback([&] {
    action = [&] {
      const auto url = require_url(resolve(g.narrowcast_url, "PACT_NARROWCAST_URL", "narrowcast_url", g, env), "narrowcast");
      net::HttpTransport http(url, g.timeout);
      narrowcast::Client client(http);
      const auto here = narrowcast::Location::from_degrees(na.lat, na.lon);
      if (!here.valid()) throw Exit{kExitUsage, "location out of range"};
      const auto region = narrowcast::negotiate_region(
          here, na.budget, [&](const narrowcast::Region& r) { return client.how_big(r, na.since); });
      const auto entries = client.get_messages(region, na.since);
      const narrowcast::TracePoint point{here, na.at ? na.at : wall_now()};
      const auto matches = narrowcast::match_trace(std::span(&point, 1), entries);
      Output o{out, g.format == "json"};
      json j{{"region",
              {{"lat_prefix", region.lat_prefix},
               {"lon_prefix", region.lon_prefix},
               {"lat_bits", region.lat_bits},
               {"lon_bits", region.lon_bits}}},
             {"downloaded", entries.size()},
             {"matches", json::array()}};
      std::ostringstream h;
      h << "downloaded " << entries.size() << " messages for region " << region.lat_bits << "/" << region.lon_bits
        << " bits, " << matches.size() << " apply here\n";
      for (const auto& m : matches) {
        j["matches"].push_back(to_string(m));
        h << "  " << to_string(m) << "\n";
      }
      o.emit(j, h.str());
      return kExitOk;
    };
  });

  // agent demo
  auto* agent_cmd = app.add_subcommand("agent", "phone-side agent");
  agent_cmd->require_subcommand(1);
  auto* agent_demo_cmd = agent_cmd->add_subcommand("demo", "three agents and an in-process registry");
  std::string demo_protocol = "core";
  std::uint64_t demo_seed = 1;
  agent_demo_cmd->add_option("--protocol", demo_protocol)
      ->check(CLI::IsMember({"core", "core-strong-integrity", "alt-sig"}));
  agent_demo_cmd->add_option("--seed", demo_seed);
  agent_demo_cmd->callback([&] {
    action = [&] { return agent_demo(demo_protocol, demo_seed, Output{out, g.format == "json"}); };
  });

  // simulate / attack
  std::string scenario_path;
  auto* sim_cmd = app.add_subcommand("simulate", "run a scenario file");
  sim_cmd->add_option("scenario", scenario_path)->required()->check(CLI::ExistingFile);
  sim_cmd->callback([&] {
    action = [&] {
      const auto s = sim::Scenario::load(scenario_path);
      const auto r = sim::run_scenario(s);
      Output{out, g.format == "json"}.emit(r.to_json(), r.summary());
      return kExitOk;
    };
  });
  std::string attack_path;
  auto* attack_cmd = app.add_subcommand("attack", "run a scenario file with an adversary and score it");
  attack_cmd->add_option("spec", attack_path)->required()->check(CLI::ExistingFile);
  attack_cmd->callback([&] {
    action = [&] {
      const auto s = sim::Scenario::load(attack_path);
      const auto a = sim::run_attack(s);
      std::ostringstream h;
      h << "attack " << a.kind << " against " << a.protocol << ": " << (a.succeeded ? "succeeded" : "failed") << "\n"
        << "false alerts " << a.false_alerts << ", linkable ids " << a.linkable_ids << ", linked sites "
        << a.linked_sites << ", submissions accepted " << a.accepted_submissions << " / rejected "
        << a.rejected_submissions << "\n";
      if (a.details.contains("counterpart")) {
        const auto& c = a.details.at("counterpart");
        h << "same attack against " << c.at("protocol").get<std::string>() << ": "
          << (c.at("succeeded").get<bool>() ? "succeeded" : "failed") << "\n";
      }
      Output{out, g.format == "json"}.emit(a.to_json(), h.str());
      return kExitOk;
    };
  });

  // bench
  struct {
    std::string protocol = "core,alt-sig", L = "1,2,4,8,16,32,64", S = "2";
    std::int64_t delta = 1344;
    int repetitions = 3;
  } bo;
  auto* bench_cmd = app.add_subcommand("bench", "measure exposure-check cost against the analytic models");
  bench_cmd->add_option("--protocol", bo.protocol, "comma separated: core, alt-sig");
  bench_cmd->add_option("--L", bo.L, "comma separated report counts");
  bench_cmd->add_option("--S", bo.S, "comma separated store sizes");
  bench_cmd->add_option("--delta", bo.delta);
  bench_cmd->add_option("--repetitions", bo.repetitions)->check(CLI::PositiveNumber);
  bench_cmd->callback([&] {
    action = [&] {
      sim::BenchOptions opts;
      opts.L = parse_int_list(bo.L);
      opts.S = parse_int_list(bo.S);
      opts.delta = bo.delta;
      opts.repetitions = bo.repetitions;
      opts.protocols.clear();
      std::stringstream ss(bo.protocol);
      std::string p;
      while (std::getline(ss, p, ',')) {
        if (p.empty()) continue;
        try {
          opts.protocols.push_back(agent::protocol_from_string(p));
        } catch (const Error& e) {
          throw Exit{kExitUsage, e.what()};
        }
      }
      const auto report = sim::bench_check_cost(opts);
      Output{out, g.format == "json"}.emit(report.to_json(), report.table());
      return kExitOk;
    };
  });

  // keygen
  std::string key_out, key_cert;
  auto* keygen_cmd = app.add_subcommand("keygen", "create an Ed25519 signing key file");
  keygen_cmd->add_option("--out", key_out, "key file to write")->required();
  keygen_cmd->add_option("--cert", key_cert, "certificate id to record with the key");
  keygen_cmd->callback([&] {
    action = [&] {
      const auto kp = crypto::ed25519_keypair(crypto::system_random());
      json file{{"cert", key_cert}, {"vk", to_base64(kp.pub)}, {"sk", to_base64(kp.secret.raw())}};
      write_file(key_out, file.dump(2) + "\n");
      Output{out, g.format == "json"}.emit({{"cert", key_cert}, {"vk", to_base64(kp.pub)}, {"path", key_out}},
                                           "wrote " + key_out + "\nvk " + to_base64(kp.pub));
      return kExitOk;
    };
  });

  // whitelist add
  struct {
    std::string file, cert, vk, key, tier = "healthcare";
  } wl;
  auto* wl_cmd = app.add_subcommand("whitelist", "manage signer whitelists");
  wl_cmd->require_subcommand(1);
  auto* wl_add = wl_cmd->add_subcommand("add", "add or replace a signer");
  wl_add->add_option("--file", wl.file, "whitelist JSON (created if missing)")->required();
  wl_add->add_option("--cert", wl.cert, "certificate id (default: the key file's)");
  auto* vk_opt = wl_add->add_option("--vk", wl.vk, "base64 verification key");
  wl_add->add_option("--key", wl.key, "key file from keygen")->excludes(vk_opt)->check(CLI::ExistingFile);
  wl_add->add_option("--tier", wl.tier)->check(CLI::IsMember({"self_report", "healthcare"}));
  wl_add->callback([&] {
    action = [&] {
      crypto::PublicKey vk{};
      std::string cert = wl.cert;
      if (!wl.key.empty()) {
        const auto k = load_key(wl.key);
        vk = k.pair.pub;
        if (cert.empty()) cert = k.cert;
      } else if (!wl.vk.empty()) {
        try {
          vk = crypto::public_key_from(from_base64(wl.vk));
        } catch (const Error& e) {
          throw Exit{kExitUsage, std::string("bad --vk: ") + e.what()};
        }
      } else {
        throw Exit{kExitUsage, "whitelist add needs --vk or --key"};
      }
      if (cert.empty()) throw Exit{kExitUsage, "whitelist add needs a certificate id"};
      registry::SignaturePolicy policy;
      if (std::ifstream(wl.file)) policy = registry::SignaturePolicy::load(wl.file);
      policy.add(cert, vk, registry::tier_from_string(wl.tier));
      policy.save(wl.file);
      Output{out, g.format == "json"}.emit({{"file", wl.file}, {"cert", cert}, {"tier", wl.tier}, {"signers", policy.size()}},
                                           "added " + cert + " (" + wl.tier + ") to " + wl.file);
      return kExitOk;
    };
  });

  // report submit
  struct {
    std::string entry, key;
    bool random = false, strong = false;
    std::int64_t epochs = 96;
    Seconds dt = 900, now = 0;
    std::int64_t delta = 1344;
  } rep;
  auto* rep_cmd = app.add_subcommand("report", "upload reports");
  rep_cmd->require_subcommand(1);
  auto* rep_submit = rep_cmd->add_subcommand("submit", "upload one entry to the registry");
  auto* entry_opt = rep_submit->add_option("--entry", rep.entry, "entry JSON file")->check(CLI::ExistingFile);
  rep_submit->add_flag("--random", rep.random, "upload a fresh random chain's entry")->excludes(entry_opt);
  rep_submit->add_option("--epochs", rep.epochs, "epochs covered by --random");
  rep_submit->add_flag("--strong-integrity", rep.strong, "bind --random entries to a fresh key");
  rep_submit->add_option("--key", rep.key, "attach a signature with this key file")->check(CLI::ExistingFile);
  rep_submit->add_option("--dt", rep.dt);
  rep_submit->add_option("--delta", rep.delta);
  rep_submit->add_option("--now", rep.now, "clock for --random (default now)");
  rep_submit->callback([&] {
    action = [&] {
      const auto params = params_from(rep.dt, rep.delta);
      const auto url = require_url(resolve(g.registry_url, "PACT_REGISTRY_URL", "registry_url", g, env), "registry");
      core::Entry entry;
      if (rep.random) {
        if (rep.epochs < 1 || rep.epochs > params.delta) throw Exit{kExitUsage, "--epochs must be in [1, delta]"};
        const Seconds now = rep.now ? rep.now : wall_now();
        auto& rng = crypto::system_random();
        std::optional<crypto::KeyPair> si;
        if (rep.strong) si = crypto::ed25519_keypair(rng);
        auto state = core::init_chain(params, rng.bytes(params.seed_bytes()), false,
                                      now - (rep.epochs - 1) * params.dt, si ? std::optional(si->pub) : std::nullopt);
        state = core::advance(state, now, params).state;
        entry = core::build_report(state, params, rng.bytes(params.seed_bytes())).entry;
        if (si) entry = core::sign_entry(std::move(entry), *si);
      } else if (!rep.entry.empty()) {
        const auto j = read_json_file(rep.entry);
        try {
          entry = j.contains("entry") && j.at("entry").is_string()
                      ? core::decode_entry(from_base64(j.at("entry").get<std::string>()), params)
                      : core::entry_from_json(j.contains("entry") ? j.at("entry") : j, params);
        } catch (const Error& e) {
          throw Exit{kExitFailure, rep.entry + ": " + e.what()};
        }
      } else {
        throw Exit{kExitUsage, "report submit needs --entry or --random"};
      }
      if (!rep.key.empty()) {
        const auto k = load_key(rep.key);
        if (k.cert.empty()) throw Exit{kExitFailure, "key file has no cert id"};
        entry.signatures.push_back({k.cert, crypto::sign(k.pair.secret, core::signing_bytes(entry))});
      }
      net::HttpTransport http(url, g.timeout);
      const auto resp = http.send({"POST", "/report", {}, json{{"entry", to_base64(core::encode_entry(entry))}}.dump(), {}});
      auto body = parse_body(resp);
      const bool accepted = resp.ok() && body.value("accepted", false);
      body["status"] = resp.status;
      Output{out, g.format == "json"}.emit(
          body, accepted ? "accepted, tier " + body.value("tier", std::string("?")) + ", published after " +
                               std::to_string(body.value("release_at", Seconds{0}))
                         : "rejected (" + std::to_string(resp.status) + "): " +
                               body.value("reason", body.value("error", std::string("?"))) + " " +
                               body.value("detail", std::string()));
      return accepted ? kExitOk : kExitFailure;
    };
  });

  // entries fetch
  struct {
    std::uint64_t cursor = 0;
    std::size_t limit = 1000;
    bool all = false;
  } ef;
  auto* entries_cmd = app.add_subcommand("entries", "read the public registry");
  entries_cmd->require_subcommand(1);
  auto* entries_fetch = entries_cmd->add_subcommand("fetch", "download published entries");
  entries_fetch->add_option("--cursor", ef.cursor);
  entries_fetch->add_option("--limit", ef.limit)->check(CLI::Range(1, 10000));
  entries_fetch->add_flag("--all", ef.all, "follow the cursor to the end");
  entries_fetch->callback([&] {
    action = [&] {
      const auto url = require_url(resolve(g.registry_url, "PACT_REGISTRY_URL", "registry_url", g, env), "registry");
      net::HttpTransport http(url, g.timeout);
      json entries = json::array();
      std::uint64_t cursor = ef.cursor;
      for (;;) {
        const auto page = registry_get(http, "/entries",
                                       {{"cursor", std::to_string(cursor)}, {"limit", std::to_string(ef.limit)}});
        for (const auto& e : page.at("entries")) entries.push_back(e);
        const auto next = page.at("next_cursor").get<std::uint64_t>();
        const bool more = next > cursor;
        cursor = next;
        if (!ef.all || !more) break;
      }
      std::ostringstream h;
      h << entries.size() << " entries, next cursor " << cursor << "\n";
      for (const auto& e : entries) {
        h << "  " << e.at("window_seed").get<std::string>() << "  " << e.at("t_start") << ".." << e.at("t_end") << "  "
          << e.value("tier", std::string("none")) << "\n";
      }
      Output{out, g.format == "json"}.emit({{"entries", entries}, {"next_cursor", cursor}}, h.str());
      return kExitOk;
    };
  });

  auto usage = [&](int code, const std::string& why) {
    if (!why.empty()) err << "pact: " << why << "\n";
    err << app.help();
    if (g.format == "json") out << json{{"error", why.empty() ? "usage" : why}, {"exit", code}}.dump() << "\n";
    return code;
  };

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) return usage(kExitUsage, "");
    return usage(kExitUsage, e.what());
  }

  if (!action) return usage(kExitUsage, "no command given");
  try {
    return action();
  } catch (const Exit& e) {
    if (e.code == kExitUsage) return usage(e.code, e.message);
    err << "pact: " << e.message << "\n";
    if (g.format == "json") out << json{{"error", e.message}, {"exit", e.code}}.dump() << "\n";
    return e.code;
  } catch (const net::TransportError& e) {
    err << "pact: service unreachable: " << e.what() << "\n";
    if (g.format == "json") out << json{{"error", std::string("unreachable: ") + e.what()}, {"exit", kExitUnreachable}}.dump() << "\n";
    return kExitUnreachable;
  } catch (const std::exception& e) {
    err << "pact: " << e.what() << "\n";
    if (g.format == "json") out << json{{"error", e.what()}, {"exit", kExitFailure}}.dump() << "\n";
    return kExitFailure;
  }
}

}  // namespace pact::cli
