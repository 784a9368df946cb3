#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cordial {

using Bytes = std::vector<std::uint8_t>;
using Round = std::uint32_t;
using Tick = std::uint64_t;

/// Raised for malformed input, unknown ids, and violated preconditions.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MinerId {
    std::uint32_t value = 0;

    constexpr MinerId() = default;
    constexpr explicit MinerId(std::uint32_t v) : value(v) {}

    friend constexpr auto operator<=>(MinerId, MinerId) = default;
};

inline constexpr std::size_t kDigestSize = 32;

struct BlockId {
    std::array<std::uint8_t, kDigestSize> digest{};

    friend auto operator<=>(const BlockId&, const BlockId&) = default;

    std::string hex() const;
    std::string short_hex() const { return hex().substr(0, 12); }
    static BlockId from_hex(std::string_view text);
};

struct BlockIdHash {
    std::size_t operator()(const BlockId& id) const noexcept {
        std::size_t h;
        std::memcpy(&h, id.digest.data(), sizeof h);
        return h;
    }
};

inline std::string to_hex(const std::uint8_t* data, std::size_t size) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(size * 2);
    for (std::size_t i = 0; i < size; ++i) {
        out.push_back(kDigits[data[i] >> 4]);
        out.push_back(kDigits[data[i] & 0xf]);
    }
    return out;
}

inline std::string to_hex(const Bytes& bytes) { return to_hex(bytes.data(), bytes.size()); }

inline Bytes from_hex(std::string_view text) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (text.size() % 2 != 0) throw Error("hex string has odd length");
    Bytes out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(text[2 * i]);
        int lo = nibble(text[2 * i + 1]);
        if (hi < 0 || lo < 0) throw Error("invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

inline std::string BlockId::hex() const { return to_hex(digest.data(), digest.size()); }

inline BlockId BlockId::from_hex(std::string_view text) {
    Bytes raw = cordial::from_hex(text);
    if (raw.size() != kDigestSize) throw Error("block id must be 32 bytes");
    BlockId id;
    std::memcpy(id.digest.data(), raw.data(), kDigestSize);
    return id;
}

/// Leader of a round, if the round has one and it is known.
using LeaderFn = std::function<std::optional<MinerId>(Round)>;

}  // namespace cordial

template <>
struct std::hash<cordial::BlockId> : cordial::BlockIdHash {};
