#pragma once

// Comparison schemes built on a prime-order (or, for exhaustive tests, small
// cyclic) group:
//   * the "dual" scheme: ids (g^r, g^{r s}) that a reporter re-randomises
//     before upload and the owner recognises with its secret s;
//   * the trusted-third-party scheme: ids are ElGamal encryptions of a
//     registration token under the TTP's key.
//
// A Group provides Element/Scalar types plus exp, mul, div, generator,
// random_scalar, is_valid, serialize and deserialize.

#include <sodium.h>

#include <array>
#include <charconv>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pact/bytes.hpp"
#include "pact/crypto.hpp"

namespace pact::variants {

class InvalidElement : public Error {
 public:
  using Error::Error;
};

template <class G>
concept Group = requires(const G& g, typename G::Element e, typename G::Scalar s, crypto::RandomSource& rng,
                         std::string_view text) {
  { g.generator() } -> std::same_as<typename G::Element>;
  { g.exp(e, s) } -> std::same_as<typename G::Element>;
  { g.mul(e, e) } -> std::same_as<typename G::Element>;
  { g.div(e, e) } -> std::same_as<typename G::Element>;
  { g.random_scalar(rng) } -> std::same_as<typename G::Scalar>;
  { g.is_valid(e) } -> std::convertible_to<bool>;
  { g.serialize(e) } -> std::same_as<std::string>;
  { g.deserialize(text) } -> std::same_as<typename G::Element>;
};

/// The cyclic group generated by g in Z*_q, for q a small prime. The group
/// order need not be prime (Z*_23 has order 22); elements whose order
/// divides the cofactor are treated as low-order and rejected.
class ToyGroup {
 public:
  using Element = std::uint64_t;
  using Scalar = std::uint64_t;

  ToyGroup(std::uint64_t modulus, std::uint64_t generator) : q_(modulus), g_(generator) {
    if (q_ < 3 || q_ > (1ull << 31) || !is_prime(q_)) throw Error("toy group modulus must be a small prime");
    if (g_ <= 1 || g_ >= q_) throw Error("toy group generator out of range");
    order_ = 1;
    for (Element x = g_; x != 1; x = x * g_ % q_) ++order_;
    if (order_ < 2) throw Error("generator has trivial order");
    std::uint64_t largest = 1;
    std::uint64_t rest = order_;
    for (std::uint64_t f = 2; f * f <= rest; ++f) {
      while (rest % f == 0) {
        largest = f;
        rest /= f;
      }
    }
    if (rest > 1) largest = std::max(largest, rest);
    cofactor_ = order_ / largest;
  }

  std::uint64_t modulus() const { return q_; }
  std::uint64_t order() const { return order_; }
  std::uint64_t cofactor() const { return cofactor_; }
  Element generator() const { return g_; }
  Element identity() const { return 1; }

  Element exp(Element base, Scalar e) const {
    e %= order_;
    Element result = 1;
    Element b = base % q_;
    while (e > 0) {
      if (e & 1) result = result * b % q_;
      b = b * b % q_;
      e >>= 1;
    }
    return result;
  }
  Element mul(Element a, Element b) const { return a * b % q_; }
  Element div(Element a, Element b) const { return mul(a, exp(b, order_ - 1)); }
  Scalar scalar_mul(Scalar a, Scalar b) const { return a % order_ * (b % order_) % order_; }

  /// Uniform in [1, order).
  Scalar random_scalar(crypto::RandomSource& rng) const { return 1 + rng.uniform(order_ - 1); }

  /// Z*_q is cyclic, so <g> is exactly the set of x with x^order = 1.
  bool contains(Element e) const { return e >= 1 && e < q_ && exp(e, order_) == 1; }
  bool is_valid(Element e) const { return contains(e) && e != 1 && exp(e, cofactor_) != 1; }

  std::string serialize(Element e) const { return std::to_string(e); }
  Element deserialize(std::string_view text) const {
    Element v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) throw DecodeError("bad toy group element");
    return v;
  }

 private:
  static bool is_prime(std::uint64_t n) {
    for (std::uint64_t f = 2; f * f <= n; ++f) {
      if (n % f == 0) return false;
    }
    return n >= 2;
  }

  std::uint64_t q_;
  std::uint64_t g_;
  std::uint64_t order_ = 0;
  std::uint64_t cofactor_ = 1;
};

/// ristretto255: prime-order group over Curve25519 (libsodium).
class Ristretto255Group {
 public:
  using Element = std::array<std::uint8_t, crypto_core_ristretto255_BYTES>;
  using Scalar = std::array<std::uint8_t, crypto_core_ristretto255_SCALARBYTES>;

  Ristretto255Group() { crypto::init(); }

  Element generator() const {
    Scalar one{};
    one[0] = 1;
    Element out{};
    if (crypto_scalarmult_ristretto255_base(out.data(), one.data()) != 0) throw Error("ristretto255 base failed");
    return out;
  }
  Element exp(const Element& base, const Scalar& e) const {
    Element out{};
    if (crypto_scalarmult_ristretto255(out.data(), e.data(), base.data()) != 0) {
      throw InvalidElement("ristretto255 exponentiation produced the identity");
    }
    return out;
  }
  Element mul(const Element& a, const Element& b) const {
    Element out{};
    if (crypto_core_ristretto255_add(out.data(), a.data(), b.data()) != 0) throw InvalidElement("invalid element");
    return out;
  }
  Element div(const Element& a, const Element& b) const {
    Element out{};
    if (crypto_core_ristretto255_sub(out.data(), a.data(), b.data()) != 0) throw InvalidElement("invalid element");
    return out;
  }
  Scalar scalar_mul(const Scalar& a, const Scalar& b) const {
    Scalar out{};
    crypto_core_ristretto255_scalar_mul(out.data(), a.data(), b.data());
    return out;
  }
  Scalar random_scalar(crypto::RandomSource& rng) const {
    // reduce 64 uniform bytes mod the group order; retry on zero
    for (;;) {
      std::array<std::uint8_t, crypto_core_ristretto255_NONREDUCEDSCALARBYTES> wide{};
      rng.fill(wide);
      Scalar s{};
      crypto_core_ristretto255_scalar_reduce(s.data(), wide.data());
      if (!sodium_is_zero(s.data(), s.size())) return s;
    }
  }
  bool is_valid(const Element& e) const {
    return !sodium_is_zero(e.data(), e.size()) && crypto_core_ristretto255_is_valid_point(e.data()) == 1;
  }
  std::string serialize(const Element& e) const { return to_hex(e); }
  Element deserialize(std::string_view text) const {
    auto b = from_hex(text);
    if (b.size() != Element{}.size()) throw DecodeError("ristretto255 element must be 32 bytes");
    Element e{};
    std::copy(b.begin(), b.end(), e.begin());
    return e;
  }
};

// ---------------------------------------------------------------------------
// Dual scheme

template <Group G>
struct DualSecret {
  typename G::Scalar s;
};

template <Group G>
struct DualId {
  typename G::Element x;
  typename G::Element y;
  friend bool operator==(const DualId&, const DualId&) = default;
};

template <Group G>
void check_id(const G& group, const DualId<G>& id) {
  if (!group.is_valid(id.x)) throw InvalidElement("dual id: x is the identity or a low-order element");
  if (!group.is_valid(id.y)) throw InvalidElement("dual id: y is the identity or a low-order element");
}

template <Group G>
DualSecret<G> dual_keygen(const G& group, crypto::RandomSource& rng) {
  return {group.random_scalar(rng)};
}

/// (g^r, g^{r s}) for an explicit r; throws InvalidElement if degenerate.
template <Group G>
DualId<G> dual_make_id_with(const G& group, const DualSecret<G>& secret, const typename G::Scalar& r) {
  DualId<G> id;
  id.x = group.exp(group.generator(), r);
  id.y = group.exp(id.x, secret.s);
  check_id(group, id);
  return id;
}

template <Group G>
DualId<G> dual_make_id(const G& group, const DualSecret<G>& secret, crypto::RandomSource& rng) {
  for (;;) {
    try {
      return dual_make_id_with(group, secret, group.random_scalar(rng));
    } catch (const InvalidElement&) {
      // degenerate randomiser (possible only in small composite-order groups)
    }
  }
}

template <Group G>
DualId<G> dual_rerandomize_with(const G& group, const DualId<G>& id, const typename G::Scalar& r) {
  check_id(group, id);
  DualId<G> out{group.exp(id.x, r), group.exp(id.y, r)};
  check_id(group, out);
  return out;
}

template <Group G>
DualId<G> dual_rerandomize(const G& group, const DualId<G>& id, crypto::RandomSource& rng) {
  check_id(group, id);
  for (;;) {
    try {
      return dual_rerandomize_with(group, id, group.random_scalar(rng));
    } catch (const InvalidElement&) {
    }
  }
}

/// y == x^s. Throws InvalidElement on identity or low-order input.
template <Group G>
bool dual_is_mine(const G& group, const DualId<G>& id, const DualSecret<G>& secret) {
  check_id(group, id);
  return group.exp(id.x, secret.s) == id.y;
}

// ---------------------------------------------------------------------------
// Trusted third party (ElGamal over the same groups)

template <Group G>
struct TtpId {
  typename G::Element c1;  // g^k
  typename G::Element c2;  // token * pk^k
  friend bool operator==(const TtpId&, const TtpId&) = default;
};

template <Group G>
class Ttp {
 public:
  using Element = typename G::Element;

  Ttp(G group, crypto::RandomSource& rng) : group_(std::move(group)), sk_(group_.random_scalar(rng)) {
    pk_ = group_.exp(group_.generator(), sk_);
  }

  const G& group() const { return group_; }
  Element public_key() const { return pk_; }

  /// Issues a fresh random token for user; the registry maps it back.
  Element register_user(const std::string& user, crypto::RandomSource& rng) {
    for (;;) {
      Element token = group_.exp(group_.generator(), group_.random_scalar(rng));
      if (!group_.is_valid(token) || tokens_.count(group_.serialize(token))) continue;
      tokens_.emplace(group_.serialize(token), user);
      return token;
    }
  }

  /// Decrypts id; nullopt when the token is not registered here.
  std::optional<std::string> identify(const TtpId<G>& id) const {
    if (!group_.is_valid(id.c1) || !group_.is_valid(id.c2)) throw InvalidElement("malformed TTP id");
    const Element token = group_.div(id.c2, group_.exp(id.c1, sk_));
    auto it = tokens_.find(group_.serialize(token));
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t registered() const { return tokens_.size(); }

 private:
  G group_;
  typename G::Scalar sk_;
  Element pk_{};
  std::map<std::string, std::string> tokens_;
};

/// Enc(pk, token) with fresh randomness per call.
template <Group G>
TtpId<G> ttp_make_id(const G& group, const typename G::Element& pk, const typename G::Element& token,
                     crypto::RandomSource& rng) {
  for (;;) {
    try {
      const auto k = group.random_scalar(rng);
      TtpId<G> id{group.exp(group.generator(), k), group.mul(token, group.exp(pk, k))};
      if (group.is_valid(id.c1) && group.is_valid(id.c2)) return id;
    } catch (const InvalidElement&) {
    }
  }
}

}  // namespace pact::variants
