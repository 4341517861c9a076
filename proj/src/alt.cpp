#include "pact/alt.hpp"

#include <cmath>

namespace pact::alt {

const DailyKey& DailyKeyRing::daily_keygen(std::int64_t day, crypto::RandomSource& rng) {
  if (!keys_.empty()) {
    const auto newest = keys_.rbegin()->first;
    if (day < newest) throw WrongDay("key for day " + std::to_string(day) + " requested after day " +
                                     std::to_string(newest));
    if (day == newest) return keys_.rbegin()->second;
  }
  for (auto& [d, key] : keys_) key.signing_key.erase();
  auto kp = crypto::ed25519_keypair(rng);
  DailyKey key{day, std::move(kp.secret), kp.pub};
  return keys_[day] = std::move(key);
}

const DailyKey* DailyKeyRing::find(std::int64_t day) const {
  auto it = keys_.find(day);
  return it == keys_.end() ? nullptr : &it->second;
}

std::vector<crypto::PublicKey> DailyKeyRing::report_keys(std::int64_t current_day) const {
  std::vector<crypto::PublicKey> out;
  for (const auto& [day, key] : keys_) {
    if (day > current_day - window_days_ && day <= current_day) out.push_back(key.verification_key);
  }
  return out;
}

void DailyKeyRing::purge(std::int64_t current_day) {
  std::erase_if(keys_, [&](const auto& kv) { return kv.first <= current_day - window_days_; });
}

Bytes commit_time(ByteView r, Seconds t, const AltParams& params) {
  Bytes input(r.begin(), r.end());
  put_u64(input, static_cast<std::uint64_t>(t));
  auto digest = crypto::sha256(input);
  return Bytes(digest.begin(), digest.begin() + static_cast<std::ptrdiff_t>(params.n_bytes()));
}

AltBroadcast make_broadcast(const DailyKey& key, Seconds t, crypto::RandomSource& rng, const AltParams& params) {
  if (day_of(t) != key.day) {
    throw WrongDay("time " + std::to_string(t) + " is outside the key's day " + std::to_string(key.day));
  }
  AltBroadcast b;
  b.t = t;
  b.big_r = rng.bytes(params.n_bytes());
  b.r = rng.bytes(params.n_bytes());
  b.h = commit_time(b.r, t, params);
  b.sigma = crypto::sign(key.signing_key, concat({b.big_r, b.h}));
  return b;
}

Bytes encode_broadcast(const AltBroadcast& b) {
  Bytes out(b.sigma.begin(), b.sigma.end());
  put_bytes(out, b.big_r);
  put_bytes(out, b.h);
  put_bytes(out, b.r);
  put_u64(out, static_cast<std::uint64_t>(b.t));
  return out;
}

AltBroadcast decode_broadcast(ByteView data, const AltParams& params) {
  Reader rd(data);
  AltBroadcast b;
  b.sigma = crypto::signature_from(rd.view(crypto::kSignatureSize));
  b.big_r = rd.bytes(params.n_bytes());
  b.h = rd.bytes(params.n_bytes());
  b.r = rd.bytes(params.n_bytes());
  b.t = static_cast<Seconds>(rd.u64());
  rd.expect_done();
  return b;
}

bool validate_and_collect(ObservationStore& store, const AltBroadcast& b, Seconds now, Seconds tolerance,
                          const AltParams& params) {
  if (tolerance < 0) throw Error("tolerance must be non-negative");
  if (b.t < 0 || b.r.size() != params.n_bytes() || b.h.size() != params.n_bytes() ||
      b.big_r.size() != params.n_bytes()) {
    return false;
  }
  // |now - t| without overflow on hostile t
  const Seconds skew = now >= b.t ? now - b.t : b.t - now;
  if (skew < 0 || skew > tolerance) return false;
  if (commit_time(b.r, b.t, params) != b.h) return false;
  store.add_alt(AltTriple{b.sigma, b.big_r, b.h}, day_of(now));
  return true;
}

AltCheckResult check_exposure_alt(const ObservationStore& store, std::span<const Bytes> report_keys) {
  AltCheckResult result;
  std::vector<const Bytes*> keys;
  for (const auto& k : report_keys) {
    if (crypto::is_valid_public_key(k)) {
      keys.push_back(&k);
    } else {
      ++result.malformed_keys;
    }
  }
  if (keys.empty()) return result;
  for (const auto& [day, bucket] : store.alt_buckets()) {
    for (const auto& triple : bucket) {
      const Bytes message = concat({triple.big_r, triple.h});
      for (const auto* k : keys) {
        if (crypto::verify(*k, triple.sigma, message)) {
          result.events.push_back(store.make_event(triple.big_r, std::nullopt, day));
          break;
        }
      }
    }
  }
  return result;
}

Bytes encode_report(const AltReport& report) {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(report.verification_keys.size()));
  for (const auto& k : report.verification_keys) put_bytes(out, k);
  return out;
}

AltReport decode_report(ByteView data) {
  Reader r(data);
  const auto count = r.u32();
  if (r.remaining() != static_cast<std::size_t>(count) * crypto::kPublicKeySize) {
    throw DecodeError("report length does not match key count");
  }
  AltReport report;
  report.verification_keys.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    report.verification_keys.push_back(crypto::public_key_from(r.view(crypto::kPublicKeySize)));
  }
  return report;
}

CostEstimate cost_model(double num_keys, double store_size, double delta, double t_g, double t_vrfy) {
  if (num_keys <= 0 || store_size <= 0 || delta <= 0 || t_g <= 0 || t_vrfy <= 0) {
    throw Error("cost_model inputs must be positive");
  }
  return {num_keys * delta * std::log2(store_size) * t_g, num_keys * store_size * t_vrfy};
}

}  // namespace pact::alt
