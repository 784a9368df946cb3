#include <gtest/gtest.h>

#include <unordered_set>

#include "cordial/block.hpp"
#include "fixtures.hpp"

using namespace cordial;
using fixtures::text;

namespace {

Block sample_block() {
    Block b;
    b.creator = MinerId(2);
    b.payload = text("tx");
    BlockId p1, p2;
    p1.digest.fill(0x11);
    p2.digest.fill(0x02);
    b.pointers = {p1, p2};
    return b;
}

}  // namespace

TEST(Block, CanonicalEncodingLayout) {
    Block b = sample_block();
    Bytes enc = canonical_encode(b);
    ASSERT_EQ(enc.size(), 4u + 4 + 2 + 2 + 2 * 32 + 2);
    EXPECT_EQ(enc[3], 2);
    EXPECT_EQ(enc[7], 2);
    EXPECT_EQ(enc[8], 't');
    // pointers are sorted: 0x02.. before 0x11..
    EXPECT_EQ(enc[12], 0x02);
    EXPECT_EQ(enc[12 + 32], 0x11);
}

TEST(Block, IdIgnoresPointerOrderAndSignature) {
    Block a = sample_block();
    Block b = a;
    std::swap(b.pointers[0], b.pointers[1]);
    b.signature = text("whatever");
    EXPECT_EQ(block_id(a), block_id(b));
}

TEST(Block, GoldenId) {
    Block b;
    b.creator = MinerId(0);
    b.payload = text("genesis");
    // sha256(00000000 00000007 "genesis" 0000 0000), computed with hashlib
    EXPECT_EQ(block_id(b).hex(), "d9f118426e7a7b67dd28ca3f0f6a10067587cbccb69969c79b1a84f126e2e568");
}

TEST(Block, CanonicalRoundTrip) {
    Block b = sample_block();
    b.share = text("s");
    Block back = canonical_decode(canonical_encode(b));
    std::sort(b.pointers.begin(), b.pointers.end());
    EXPECT_EQ(back, b);
}

TEST(Block, WireRoundTripKeepsSignature) {
    KeyRing keys(4, 9);
    Block b = sample_block();
    sign_block(b, keys);
    EXPECT_EQ(wire_encode(b).size(), wire_size(b));
    Block back = wire_decode(wire_encode(b));
    EXPECT_EQ(back.signature, b.signature);
    EXPECT_TRUE(verify_block(back, keys));
}

TEST(Block, DecodeRejectsTruncationAndTrailingBytes) {
    Bytes enc = canonical_encode(sample_block());
    Bytes cut(enc.begin(), enc.end() - 1);
    EXPECT_THROW(canonical_decode(cut), Error);
    enc.push_back(0);
    EXPECT_THROW(canonical_decode(enc), Error);
}

TEST(Block, SignatureBindsCreatorAndContent) {
    KeyRing keys(4, 9);
    Block b = sample_block();
    sign_block(b, keys);
    EXPECT_TRUE(verify_block(b, keys));

    Block other = b;
    other.payload = text("ty");
    EXPECT_FALSE(verify_block(other, keys));

    other = b;
    other.creator = MinerId(1);
    EXPECT_FALSE(verify_block(other, keys));

    other = b;
    other.creator = MinerId(7);
    EXPECT_FALSE(verify_block(other, keys));
}

TEST(Block, NoIdCollisionsOverManyDistinctBlocks) {
    std::unordered_set<BlockId> seen;
    BlockId prev{};
    for (std::uint32_t i = 0; i < 100000; ++i) {
        Block b;
        b.creator = MinerId(i % 7);
        Bytes payload;
        put_u32(payload, i);
        b.payload = payload;
        if (i % 3 == 0) b.pointers = {prev};
        prev = block_id(b);
        ASSERT_TRUE(seen.insert(prev).second) << "collision at " << i;
    }
}

TEST(BlockId, HexRoundTrip) {
    BlockId id = block_id(sample_block());
    EXPECT_EQ(BlockId::from_hex(id.hex()), id);
    EXPECT_THROW(BlockId::from_hex("zz"), Error);
}
