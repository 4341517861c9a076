#include "pact/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <mutex>

namespace pact::crypto {

void init() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("libsodium initialisation failed");
  });
}

std::array<std::uint8_t, kSha256Size> sha256(ByteView data) {
  std::array<std::uint8_t, kSha256Size> out{};
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

std::array<std::uint8_t, kSha512Size> sha512(ByteView data) {
  std::array<std::uint8_t, kSha512Size> out{};
  crypto_hash_sha512(out.data(), data.data(), data.size());
  return out;
}

SecretKey::~SecretKey() { sodium_memzero(raw_.data(), raw_.size()); }

void SecretKey::erase() {
  sodium_memzero(raw_.data(), raw_.size());
  present_ = false;
}

std::uint64_t RandomSource::u64() {
  std::array<std::uint8_t, 8> b{};
  fill(b);
  std::uint64_t v = 0;
  for (auto c : b) v = v << 8 | c;
  return v;
}

std::uint64_t RandomSource::uniform(std::uint64_t bound) {
  if (bound == 0) throw Error("uniform: bound must be positive");
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    auto v = u64();
    if (v < limit) return v % bound;
  }
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
  init();
  randombytes_buf(out.data(), out.size());
}

DeterministicRandom::DeterministicRandom(std::uint64_t seed) {
  Bytes s;
  put_u64(s, seed);
  key_ = sha256(s);
}

DeterministicRandom::DeterministicRandom(ByteView seed32) {
  if (seed32.size() != key_.size()) throw Error("deterministic seed must be 32 bytes");
  std::copy(seed32.begin(), seed32.end(), key_.begin());
}

void DeterministicRandom::fill(std::span<std::uint8_t> out) {
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  for (int i = 0; i < 8; ++i) nonce[i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  ++counter_;
  crypto_stream_chacha20_ietf(out.data(), out.size(), nonce.data(), key_.data());
}

RandomSource& system_random() {
  static SystemRandom rng;
  return rng;
}

KeyPair ed25519_keypair_from_seed(ByteView seed32) {
  init();
  if (seed32.size() != crypto_sign_SEEDBYTES) throw Error("ed25519 seed must be 32 bytes");
  KeyPair kp;
  std::array<std::uint8_t, kSecretKeySize> sk{};
  crypto_sign_seed_keypair(kp.pub.data(), sk.data(), seed32.data());
  kp.secret = SecretKey(sk);
  sodium_memzero(sk.data(), sk.size());
  return kp;
}

KeyPair ed25519_keypair(RandomSource& rng) {
  std::array<std::uint8_t, crypto_sign_SEEDBYTES> seed{};
  rng.fill(seed);
  auto kp = ed25519_keypair_from_seed(seed);
  sodium_memzero(seed.data(), seed.size());
  return kp;
}

Signature sign(const SecretKey& sk, ByteView message) {
  if (!sk.present()) throw Error("signing key has been erased");
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), sk.raw().data());
  return sig;
}

bool verify(ByteView pub, ByteView signature, ByteView message) {
  if (pub.size() != kPublicKeySize || signature.size() != kSignatureSize) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), pub.data()) == 0;
}

bool is_valid_public_key(ByteView pub) {
  return pub.size() == kPublicKeySize && crypto_core_ed25519_is_valid_point(pub.data()) == 1;
}

PublicKey public_key_from(ByteView b) {
  if (b.size() != kPublicKeySize) throw DecodeError("public key must be 32 bytes");
  PublicKey k{};
  std::copy(b.begin(), b.end(), k.begin());
  return k;
}

Signature signature_from(ByteView b) {
  if (b.size() != kSignatureSize) throw DecodeError("signature must be 64 bytes");
  Signature s{};
  std::copy(b.begin(), b.end(), s.begin());
  return s;
}

}  // namespace pact::crypto
