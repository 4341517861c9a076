#include "pact/core.hpp"

#include <algorithm>

namespace pact::core {
namespace {

Seconds floor_div(Seconds a, Seconds b) {
  Seconds q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void check_seed(ByteView seed, const Params& params) {
  if (seed.size() != params.seed_bytes()) {
    throw Error("seed must be exactly " + std::to_string(params.n_bits) + " bits, got " +
                std::to_string(seed.size() * 8));
  }
}

Step split(ByteView digest, std::size_t half) {
  Step s;
  s.next_seed.assign(digest.begin(), digest.begin() + static_cast<std::ptrdiff_t>(half));
  s.id.bytes.assign(digest.begin() + static_cast<std::ptrdiff_t>(half),
                    digest.begin() + static_cast<std::ptrdiff_t>(2 * half));
  return s;
}

Step hash_step(ByteView input, const Params& params) {
  if (params.n_bits == 128) return split(crypto::sha256(input), 16);
  return split(crypto::sha512(input), 32);
}

Step chain_step(ByteView seed, const std::optional<crypto::PublicKey>& vk, const Params& params) {
  return vk ? derive_next_bound(seed, *vk, params) : derive_next(seed, params);
}

std::uint64_t encode_time(Seconds t) {
  if (t < 0) throw Error("negative timestamps cannot be encoded");
  return static_cast<std::uint64_t>(t);
}

}  // namespace

void Params::validate() const {
  if (n_bits != 128 && n_bits != 256) throw Error("n must be 128 or 256 bits");
  if (dt <= 0) throw Error("dt must be positive");
  if (delta < 1) throw Error("delta must be at least 1");
}

std::size_t PseudonymIdHash::operator()(const PseudonymId& id) const noexcept {
  // ids are uniformly random; the leading bytes make a fine hash
  std::size_t h = 0;
  for (std::size_t i = 0; i < std::min<std::size_t>(sizeof(h), id.bytes.size()); ++i) {
    h = h << 8 | id.bytes[i];
  }
  return h;
}

Step derive_next(ByteView seed, const Params& params) {
  check_seed(seed, params);
  return hash_step(seed, params);
}

Step derive_next_bound(ByteView seed, const crypto::PublicKey& vk, const Params& params) {
  check_seed(seed, params);
  return hash_step(concat({seed, vk}), params);
}

EpochPos epoch_index(Seconds t, const Params& params) {
  const Seconds k = floor_div(t - params.origin, params.dt);
  return {k + 1, params.origin + k * params.dt};
}

ChainState init_chain(const Params& params, ByteView entropy, bool skip_to_delta, Seconds now,
                      std::optional<crypto::PublicKey> bound_vk) {
  params.validate();
  check_seed(entropy, params);
  ChainState s;
  s.bound_vk = bound_vk;
  s.window_seed.assign(entropy.begin(), entropy.end());

  const std::int64_t first = skip_to_delta ? params.delta : 1;
  Bytes seed = s.window_seed;
  Step step;
  for (std::int64_t i = 0; i < first; ++i) {
    step = chain_step(seed, bound_vk, params);
    seed = step.next_seed;
  }
  s.current_seed = std::move(seed);
  s.current_id = std::move(step.id);
  s.current_index = first;

  const auto pos = epoch_index(now, params);
  s.current_epoch = pos.index;
  s.current_time = pos.start;
  s.window_time = s.current_time - (std::min(s.current_index, params.delta) - 1) * params.dt;
  return s;
}

Advanced advance(const ChainState& state, Seconds now, const Params& params) {
  if (now < state.current_time) {
    throw ClockRegression("clock moved back to " + std::to_string(now) + ", current epoch starts at " +
                          std::to_string(state.current_time));
  }
  const auto pos = epoch_index(now, params);
  Advanced out{state, state.current_id, pos.index - state.current_epoch};
  if (out.steps == 0) return out;

  ChainState& s = out.state;
  for (std::int64_t k = 0; k < out.steps; ++k) {
    auto step = chain_step(s.current_seed, s.bound_vk, params);
    s.current_seed = std::move(step.next_seed);
    s.current_id = std::move(step.id);
  }
  const std::int64_t old_index = s.current_index;
  s.current_index += out.steps;

  // prune: S* moves to S_max(i - delta, 0)
  const std::int64_t window_steps =
      std::max<std::int64_t>(0, s.current_index - params.delta) - std::max<std::int64_t>(0, old_index - params.delta);
  for (std::int64_t k = 0; k < window_steps; ++k) {
    s.window_seed = chain_step(s.window_seed, s.bound_vk, params).next_seed;
  }
  s.current_epoch = pos.index;
  s.current_time = pos.start;
  s.window_time = s.current_time - (std::min(s.current_index, params.delta) - 1) * params.dt;
  out.id = s.current_id;
  return out;
}

Bytes signing_bytes(const Entry& entry) {
  Bytes out = entry.window_seed;
  put_u64(out, encode_time(entry.t_start));
  put_u64(out, encode_time(entry.t_end));
  if (entry.vk) put_bytes(out, *entry.vk);
  return out;
}

Bytes encode_entry(const Entry& entry) {
  Bytes out = entry.window_seed;
  put_u64(out, encode_time(entry.t_start));
  put_u64(out, encode_time(entry.t_end));
  const bool bound = entry.vk.has_value();
  if (bound != entry.si_signature.has_value()) throw Error("vk and strong-integrity signature go together");
  out.push_back(bound ? 1 : 0);
  if (bound) {
    put_bytes(out, *entry.vk);
    put_bytes(out, *entry.si_signature);
  }
  if (entry.signatures.size() > 0xffff) throw Error("too many signatures");
  put_u16(out, static_cast<std::uint16_t>(entry.signatures.size()));
  for (const auto& s : entry.signatures) {
    if (s.cert_id.size() > 0xffff) throw Error("certificate id too long");
    put_u16(out, static_cast<std::uint16_t>(s.cert_id.size()));
    put_bytes(out, to_bytes(s.cert_id));
    put_bytes(out, s.sig);
  }
  return out;
}

Entry decode_entry(ByteView data, const Params& params) {
  Reader r(data);
  Entry e;
  e.window_seed = r.bytes(params.seed_bytes());
  e.t_start = static_cast<Seconds>(r.u64());
  e.t_end = static_cast<Seconds>(r.u64());
  const auto flags = r.u8();
  if (flags > 1) throw DecodeError("unknown entry flags");
  if (flags == 1) {
    e.vk = crypto::public_key_from(r.view(crypto::kPublicKeySize));
    e.si_signature = crypto::signature_from(r.view(crypto::kSignatureSize));
  }
  const auto count = r.u16();
  for (std::uint16_t i = 0; i < count; ++i) {
    EntrySignature s;
    s.cert_id = to_string(r.view(r.u16()));
    s.sig = crypto::signature_from(r.view(crypto::kSignatureSize));
    e.signatures.push_back(std::move(s));
  }
  r.expect_done();
  if (e.t_start < 0 || e.t_end < 0) throw DecodeError("timestamp out of range");
  return e;
}

nlohmann::json entry_to_json(const Entry& entry) {
  nlohmann::json j;
  j["window_seed"] = to_base64(entry.window_seed);
  j["t_start"] = encode_time(entry.t_start);
  j["t_end"] = encode_time(entry.t_end);
  if (entry.vk) {
    j["vk"] = to_base64(*entry.vk);
    j["si_signature"] = to_base64(*entry.si_signature);
  }
  j["signatures"] = nlohmann::json::array();
  for (const auto& s : entry.signatures) {
    j["signatures"].push_back({{"cert", s.cert_id}, {"sig", to_base64(s.sig)}});
  }
  return j;
}

Entry entry_from_json(const nlohmann::json& j, const Params& params) {
  try {
    Entry e;
    e.window_seed = from_base64(j.at("window_seed").get<std::string>());
    if (e.window_seed.size() != params.seed_bytes()) throw DecodeError("window_seed has wrong length");
    e.t_start = static_cast<Seconds>(j.at("t_start").get<std::uint64_t>());
    e.t_end = static_cast<Seconds>(j.at("t_end").get<std::uint64_t>());
    if (j.contains("vk")) {
      e.vk = crypto::public_key_from(from_base64(j.at("vk").get<std::string>()));
      e.si_signature = crypto::signature_from(from_base64(j.at("si_signature").get<std::string>()));
    }
    if (j.contains("signatures")) {
      for (const auto& s : j.at("signatures")) {
        e.signatures.push_back(
            {s.at("cert").get<std::string>(), crypto::signature_from(from_base64(s.at("sig").get<std::string>()))});
      }
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DecodeError(std::string("bad entry json: ") + ex.what());
  }
}

Report build_report(const ChainState& state, const Params& params, ByteView fresh_entropy, bool skip_to_delta,
                    std::optional<crypto::PublicKey> fresh_vk) {
  Report r;
  r.entry.window_seed = state.window_seed;
  r.entry.t_start = state.window_time;
  r.entry.t_end = state.current_time;
  r.entry.vk = state.bound_vk;
  r.fresh_state = init_chain(params, fresh_entropy, skip_to_delta, state.current_time,
                             fresh_vk ? fresh_vk : std::nullopt);
  return r;
}

std::vector<TimedId> regenerate(const Entry& entry, const Params& params) {
  if (entry.t_start > entry.t_end) throw MalformedEntry("t_start is after t_end");
  if (entry.window_seed.size() != params.seed_bytes()) throw MalformedEntry("window seed has wrong length");
  const auto first = epoch_index(entry.t_start, params);
  const auto last = epoch_index(entry.t_end, params);
  const std::int64_t count = std::min(last.index - first.index + 1, params.delta);

  std::vector<TimedId> out;
  out.reserve(static_cast<std::size_t>(count));
  Bytes seed = entry.window_seed;
  for (std::int64_t k = 0; k < count; ++k) {
    auto step = chain_step(seed, entry.vk, params);
    seed = std::move(step.next_seed);
    out.push_back({std::move(step.id), first.start + k * params.dt});
  }
  return out;
}

Entry sign_entry(Entry entry, const crypto::KeyPair& keypair) {
  entry.vk = keypair.pub;
  entry.si_signature = crypto::sign(keypair.secret, signing_bytes(entry));
  return entry;
}

bool verify_entry_si(const Entry& entry, const Params& params) {
  if (!entry.vk || !entry.si_signature) return false;
  if (entry.t_start > entry.t_end || entry.t_start < 0) return false;
  if (entry.window_seed.size() != params.seed_bytes()) return false;
  return crypto::verify(*entry.vk, *entry.si_signature, signing_bytes(entry));
}

}  // namespace pact::core
