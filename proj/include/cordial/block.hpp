#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cordial/crypto.hpp"
#include "cordial/types.hpp"

namespace cordial {

/// A signed blocklace vertex: creator, opaque payload, and hash pointers to
/// earlier blocks.  `share` is reserved for coin shares and is not interpreted.
struct Block {
    MinerId creator;
    Bytes payload;
    std::vector<BlockId> pointers;
    Bytes share;
    Bytes signature;

    friend bool operator==(const Block&, const Block&) = default;
};

/// Canonical, signature-free encoding:
///   [creator u32][payload len u32][payload][pointer count u16]
///   [pointer digests, sorted][share len u16][share]
/// All integers are big-endian.
inline Bytes canonical_encode(const Block& b) {
    if (b.pointers.size() > 0xffff) throw Error("too many pointers");
    if (b.share.size() > 0xffff) throw Error("share too large");
    std::vector<BlockId> sorted = b.pointers;
    std::sort(sorted.begin(), sorted.end());

    Bytes out;
    out.reserve(12 + b.payload.size() + sorted.size() * kDigestSize + b.share.size());
    put_u32(out, b.creator.value);
    put_u32(out, static_cast<std::uint32_t>(b.payload.size()));
    out.insert(out.end(), b.payload.begin(), b.payload.end());
    put_u16(out, static_cast<std::uint16_t>(sorted.size()));
    for (const BlockId& p : sorted) out.insert(out.end(), p.digest.begin(), p.digest.end());
    put_u16(out, static_cast<std::uint16_t>(b.share.size()));
    out.insert(out.end(), b.share.begin(), b.share.end());
    return out;
}

namespace detail {

class Reader {
public:
    Reader(const Bytes& data, std::size_t pos = 0) : data_(data), pos_(pos) {}

    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_++];
        return v;
    }

    Bytes take(std::size_t n) {
        need(n);
        Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw Error("truncated encoding");
    }

    const Bytes& data_;
    std::size_t pos_;
};

}  // namespace detail

/// Inverse of canonical_encode; the signature is left empty.
inline Block canonical_decode(const Bytes& bytes) {
    detail::Reader in(bytes);
    Block b;
    b.creator = MinerId(static_cast<std::uint32_t>(in.uint(4)));
    b.payload = in.take(in.uint(4));
    auto count = in.uint(2);
    b.pointers.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Bytes raw = in.take(kDigestSize);
        BlockId id;
        std::copy(raw.begin(), raw.end(), id.digest.begin());
        b.pointers.push_back(id);
    }
    b.share = in.take(in.uint(2));
    if (!in.done()) throw Error("trailing bytes after block encoding");
    return b;
}

inline BlockId block_id(const Block& b) {
    BlockId id;
    id.digest = sha256(canonical_encode(b));
    return id;
}

inline void sign_block(Block& b, const KeyRing& keys) { b.signature = keys.sign(b.creator, canonical_encode(b)); }

inline bool verify_block(const Block& b, const KeyRing& keys) {
    return keys.verify(b.creator, canonical_encode(b), b.signature);
}

/// Wire form of one block: [encoding len u32][encoding][sig len u16][sig].
inline void append_wire(Bytes& out, const Block& b) {
    Bytes enc = canonical_encode(b);
    put_u32(out, static_cast<std::uint32_t>(enc.size()));
    out.insert(out.end(), enc.begin(), enc.end());
    put_u16(out, static_cast<std::uint16_t>(b.signature.size()));
    out.insert(out.end(), b.signature.begin(), b.signature.end());
}

/// Size of append_wire's output without encoding.
inline std::size_t wire_size(const Block& b) {
    return 4 + 4 + 4 + b.payload.size() + 2 + b.pointers.size() * kDigestSize + 2 + b.share.size() + 2 +
           b.signature.size();
}

inline Bytes wire_encode(const Block& b) {
    Bytes out;
    append_wire(out, b);
    return out;
}

inline Block wire_decode(const Bytes& bytes) {
    detail::Reader in(bytes);
    Block b = canonical_decode(in.take(in.uint(4)));
    b.signature = in.take(in.uint(2));
    if (!in.done()) throw Error("trailing bytes after wire block");
    return b;
}

}  // namespace cordial
