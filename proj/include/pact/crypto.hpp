#pragma once

// Thin wrappers over libsodium: hashing, Ed25519 signatures and entropy.

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "pact/bytes.hpp"

namespace pact::crypto {

inline constexpr std::size_t kSha256Size = 32;
inline constexpr std::size_t kSha512Size = 64;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSecretKeySize = 64;
inline constexpr std::size_t kSignatureSize = 64;

/// Must be called once before any other function here; idempotent.
void init();

std::array<std::uint8_t, kSha256Size> sha256(ByteView data);
std::array<std::uint8_t, kSha512Size> sha512(ByteView data);

using PublicKey = std::array<std::uint8_t, kPublicKeySize>;
using Signature = std::array<std::uint8_t, kSignatureSize>;

/// Ed25519 secret key; wiped on destruction and on erase().
class SecretKey {
 public:
  SecretKey() = default;
  explicit SecretKey(const std::array<std::uint8_t, kSecretKeySize>& raw) : raw_(raw), present_(true) {}
  SecretKey(const SecretKey& other) = default;
  SecretKey& operator=(const SecretKey& other) = default;
  ~SecretKey();

  bool present() const { return present_; }
  const std::array<std::uint8_t, kSecretKeySize>& raw() const { return raw_; }
  void erase();

 private:
  std::array<std::uint8_t, kSecretKeySize> raw_{};
  bool present_ = false;
};

struct KeyPair {
  SecretKey secret;
  PublicKey pub{};
};

/// Source of random bytes. Implementations need not be thread safe.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  Bytes bytes(std::size_t n) {
    Bytes b(n);
    fill(b);
    return b;
  }
  std::uint64_t u64();
  /// Uniform in [0, bound); bound > 0.
  std::uint64_t uniform(std::uint64_t bound);
};

/// Operating-system CSPRNG.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible stream keyed by a 32-byte seed (ChaCha20 under the hood).
/// Used by the simulator and tests; never for deployed keys.
class DeterministicRandom final : public RandomSource {
 public:
  explicit DeterministicRandom(std::uint64_t seed);
  explicit DeterministicRandom(ByteView seed32);
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::array<std::uint8_t, 32> key_{};
  std::uint64_t counter_ = 0;
};

RandomSource& system_random();

KeyPair ed25519_keypair(RandomSource& rng);
KeyPair ed25519_keypair_from_seed(ByteView seed32);
Signature sign(const SecretKey& sk, ByteView message);
bool verify(ByteView pub, ByteView signature, ByteView message);
/// True if the bytes decode to a usable Ed25519 public key.
bool is_valid_public_key(ByteView pub);

PublicKey public_key_from(ByteView b);
Signature signature_from(ByteView b);

}  // namespace pact::crypto
