#pragma once

// SHA-256 digests and simulated signatures.  Signatures are HMAC-SHA256 tags
// under per-miner keys issued by the simulator; there is no real PKI.

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <cstdint>
#include <string_view>
#include <vector>

#include "cordial/types.hpp"

namespace cordial {

using Digest = std::array<std::uint8_t, kDigestSize>;

inline Digest sha256(const std::uint8_t* data, std::size_t size) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data, size, out.data(), &len, EVP_sha256(), nullptr) != 1 || len != kDigestSize) {
        throw Error("sha256 failed");
    }
    return out;
}

inline Digest sha256(const Bytes& bytes) { return sha256(bytes.data(), bytes.size()); }

inline Digest hmac_sha256(const Digest& key, const Bytes& message) {
    Digest out{};
    unsigned int len = 0;
    if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), message.data(), message.size(),
             out.data(), &len) == nullptr ||
        len != kDigestSize) {
        throw Error("hmac failed");
    }
    return out;
}

/// Big-endian append helpers shared by the encoders.
inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

/// Deterministic pseudo-random function: first 8 bytes of SHA-256(tag || a || b).
inline std::uint64_t prf64(std::string_view tag, std::uint64_t a, std::uint64_t b) {
    Bytes msg(tag.begin(), tag.end());
    put_u64(msg, a);
    put_u64(msg, b);
    Digest d = sha256(msg);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
    return v;
}

/// Per-miner signing keys derived from a ring seed.
class KeyRing {
public:
    KeyRing() = default;
    KeyRing(std::uint32_t n, std::uint64_t seed) {
        keys_.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            Bytes msg{'c', 'o', 'r', 'd', 'i', 'a', 'l', '-', 'k', 'e', 'y'};
            put_u64(msg, seed);
            put_u32(msg, i);
            keys_.push_back(sha256(msg));
        }
    }

    std::uint32_t size() const { return static_cast<std::uint32_t>(keys_.size()); }

    Bytes sign(MinerId who, const Bytes& message) const {
        Digest tag = hmac_sha256(key(who), message);
        return Bytes(tag.begin(), tag.end());
    }

    bool verify(MinerId who, const Bytes& message, const Bytes& signature) const {
        if (who.value >= keys_.size() || signature.size() != kDigestSize) return false;
        Digest tag = hmac_sha256(key(who), message);
        return std::equal(tag.begin(), tag.end(), signature.begin());
    }

private:
    const Digest& key(MinerId who) const {
        if (who.value >= keys_.size()) throw Error("no key for miner " + std::to_string(who.value));
        return keys_[who.value];
    }

    std::vector<Digest> keys_;
};

}  // namespace cordial
