#pragma once

#include <boost/dynamic_bitset.hpp>

#include <algorithm>
#include <bit>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cordial/block.hpp"
#include "cordial/crypto.hpp"
#include "cordial/types.hpp"

namespace cordial {

using BlockSet = std::set<BlockId>;
using Bitset = boost::dynamic_bitset<std::uint64_t>;
using Index = std::uint32_t;

inline bool test_bit(const Bitset& bits, std::size_t i) { return i < bits.size() && bits.test(i); }

inline void or_assign(Bitset& dst, const Bitset& src) {
    if (dst.size() < src.size()) dst.resize(src.size());
    if (src.size() == dst.size()) {
        dst |= src;
    } else {
        Bitset widened = src;
        widened.resize(dst.size());
        dst |= widened;
    }
}

/// dst := dst \ src
inline void minus_assign(Bitset& dst, const Bitset& src) {
    if (src.size() == dst.size()) {
        dst -= src;
    } else {
        Bitset resized = src;
        resized.resize(dst.size());
        dst -= resized;
    }
}

template <typename F>
void for_each_bit(const Bitset& bits, F&& f) {
    for (auto i = bits.find_first(); i != Bitset::npos; i = bits.find_next(i)) f(static_cast<Index>(i));
}

/// Set of miners as a bitmask; n is limited to 64.
using CreatorMask = std::uint64_t;
inline int count_creators(CreatorMask m) { return std::popcount(m); }
inline CreatorMask creator_bit(MinerId q) { return CreatorMask{1} << q.value; }

enum class RejectReason { BadSignature, UnknownCreator, DuplicatePointer, MultiplePointersPerCreator, NonCordial };

inline const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::BadSignature: return "bad-signature";
        case RejectReason::UnknownCreator: return "unknown-creator";
        case RejectReason::DuplicatePointer: return "duplicate-pointer";
        case RejectReason::MultiplePointersPerCreator: return "multiple-pointers-per-creator";
        case RejectReason::NonCordial: return "non-cordial";
    }
    return "?";
}

struct AcceptResult {
    enum class Status { Accepted, Buffered, Rejected };

    Status status = Status::Rejected;
    /// Newly accepted ids in acceptance order; the inserted block first when
    /// it was accepted directly, followed by any cascade.
    std::vector<BlockId> accepted;
    /// Blocks dropped from the buffer (or the inserted block) with reasons.
    std::vector<std::pair<BlockId, RejectReason>> rejected;

    bool ok() const { return status != Status::Rejected; }
};

struct StoreOptions {
    /// Reject blocks that are not cordial.  Analysis tools may disable this
    /// to hold arbitrary closed blocklaces.
    bool reject_non_cordial = true;
    bool verify_signatures = true;
};

/// A miner's local blocklace: a closed set of accepted blocks plus a buffer
/// of signed blocks still waiting for their pointed-to blocks.
///
/// Accepted blocks are numbered in acceptance order.  Since a block is only
/// accepted after everything it points to, the closure of block i only
/// contains indices <= i and is stored as a bitset of size i + 1.
class BlockStore {
public:
    BlockStore(std::uint32_t n, std::uint32_t f, KeyRing keys, StoreOptions options = {})
        : n_(n), f_(f), keys_(std::move(keys)), options_(options), by_creator_(n) {
        if (n == 0 || n > 64) throw Error("miner count must be in [1, 64]");
        if (keys_.size() < n) throw Error("key ring smaller than miner count");
    }

    std::uint32_t n() const { return n_; }
    std::uint32_t f() const { return f_; }
    std::uint32_t supermajority() const { return 2 * f_ + 1; }
    const KeyRing& keys() const { return keys_; }
    const StoreOptions& options() const { return options_; }

    // ---- insertion -------------------------------------------------------

    AcceptResult insert(const Block& b) {
        AcceptResult result;
        BlockId id = block_id(b);
        if (index_.contains(id)) {
            result.status = AcceptResult::Status::Accepted;
            return result;
        }
        if (buffer_.contains(id)) {
            result.status = AcceptResult::Status::Buffered;
            return result;
        }
        if (auto reason = check_static(b)) {
            result.rejected.emplace_back(id, *reason);
            return result;
        }

        std::vector<BlockId> missing;
        for (const BlockId& p : b.pointers)
            if (!index_.contains(p)) missing.push_back(p);
        if (!missing.empty()) {
            buffer_.emplace(id, b);
            for (const BlockId& p : missing) waiting_[p].push_back(id);
            result.status = AcceptResult::Status::Buffered;
            return result;
        }

        if (auto reason = check_resolved(b)) {
            result.rejected.emplace_back(id, *reason);
            return result;
        }
        accept(id, b);
        result.accepted.push_back(id);
        result.status = AcceptResult::Status::Accepted;
        cascade(id, result);
        return result;
    }

    // ---- lookup ----------------------------------------------------------

    std::size_t size() const { return blocks_.size(); }
    bool contains(const BlockId& id) const { return index_.contains(id); }
    bool is_buffered(const BlockId& id) const { return buffer_.contains(id); }
    std::size_t buffered_count() const { return buffer_.size(); }

    Index index_of(const BlockId& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error("unknown block " + id.short_hex());
        return it->second;
    }

    const Block& block(const BlockId& id) const { return blocks_[index_of(id)]; }
    const Block& block_at(Index i) const { return blocks_[i]; }
    const BlockId& id_at(Index i) const { return ids_[i]; }
    MinerId creator_at(Index i) const { return blocks_[i].creator; }
    Round depth_at(Index i) const { return depths_[i]; }
    const Bitset& closure_bits(Index i) const { return closures_[i]; }
    const std::vector<Index>& partners_at(Index i) const { return partners_[i]; }

    Round max_depth() const { return static_cast<Round>(by_depth_.size()); }

    /// Accepted blocks of exactly depth d, in acceptance order.
    const std::vector<Index>& at_depth(Round d) const {
        static const std::vector<Index> kEmpty;
        if (d == 0 || d > by_depth_.size()) return kEmpty;
        return by_depth_[d - 1];
    }

    const std::vector<Index>& by_creator(MinerId q) const { return by_creator_.at(q.value); }

    std::vector<BlockId> accepted_ids() const { return ids_; }

    /// Deepest accepted block of q (first accepted on ties), if any.
    std::optional<Index> latest_of(MinerId q) const {
        std::optional<Index> best;
        for (Index i : by_creator(q))
            if (!best || depths_[i] > depths_[*best]) best = i;
        return best;
    }

    Round depth(const BlockId& id) const { return depths_[index_of(id)]; }

    // ---- partial order ---------------------------------------------------

    /// Strict: a non-empty pointer path leads from `from` to `to`.
    bool acknowledges(const BlockId& from, const BlockId& to) const {
        Index a = index_of(from), b = index_of(to);
        return a != b && test_bit(closures_[a], b);
    }

    bool acknowledges_eq(const BlockId& from, const BlockId& to) const {
        return test_bit(closures_[index_of(from)], index_of(to));
    }

    bool acknowledges_idx(Index from, Index to) const { return from != to && test_bit(closures_[from], to); }

    Bitset closure_bits(const BlockSet& roots) const {
        Bitset out(blocks_.size());
        for (const BlockId& r : roots) or_assign(out, closures_[index_of(r)]);
        return out;
    }

    BlockSet closure(const BlockSet& roots) const { return to_set(closure_bits(roots)); }

    BlockSet tips(const BlockSet& blocks) const {
        Bitset members = to_bits(blocks);
        Bitset pointed(blocks_.size());
        for_each_bit(members, [&](Index i) {
            for (const BlockId& p : blocks_[i].pointers) {
                Index j = index_.at(p);
                if (test_bit(members, j)) pointed.set(j);
            }
        });
        members -= pointed;
        return to_set(members);
    }

    BlockSet blocks_prefix(Round d) const {
        BlockSet out;
        for (Round r = 1; r <= std::min(d, max_depth()); ++r)
            for (Index i : at_depth(r)) out.insert(ids_[i]);
        return out;
    }

    // ---- equivocation and approval ---------------------------------------

    bool is_equivocation(const BlockId& a, const BlockId& b) const {
        return is_equivocation_idx(index_of(a), index_of(b));
    }

    bool is_equivocation_idx(Index a, Index b) const {
        if (a == b || blocks_[a].creator != blocks_[b].creator) return false;
        return !test_bit(closures_[a], b) && !test_bit(closures_[b], a);
    }

    bool is_equivocator(MinerId q) const { return (equivocators_ & creator_bit(q)) != 0; }
    CreatorMask equivocators() const { return equivocators_; }

    /// `approver` acknowledges (or is) `target` and acknowledges no block
    /// forming an equivocation with it.
    bool approves(const BlockId& target, const BlockId& approver) const {
        return approves_idx(index_of(target), index_of(approver));
    }

    bool approves_idx(Index target, Index approver) const {
        const Bitset& cl = closures_[approver];
        if (!test_bit(cl, target)) return false;
        for (Index x : partners_[target])
            if (test_bit(cl, x)) return false;
        return true;
    }

    /// Blocks at depth(target) + alpha inside [witness] that approve target
    /// come from at least 2f+1 distinct creators.
    bool ratifies(const BlockId& target, const BlockId& witness, Round alpha) const {
        return ratifies_idx(index_of(target), index_of(witness), alpha);
    }

    bool ratifies_idx(Index target, Index witness, Round alpha) const {
        const Bitset& cl = closures_[witness];
        if (!test_bit(cl, target)) return false;
        CreatorMask creators = 0;
        for (Index y : at_depth(depths_[target] + alpha))
            if (test_bit(cl, y) && approves_idx(target, y)) creators |= creator_bit(blocks_[y].creator);
        return count_creators(creators) >= static_cast<int>(supermajority());
    }

    // ---- cordiality ------------------------------------------------------

    /// Distinct creators of depth-d blocks in the given closure.
    CreatorMask creators_at_depth_in(const Bitset& closure, Round d) const {
        CreatorMask m = 0;
        for (Index i : at_depth(d))
            if (test_bit(closure, i)) m |= creator_bit(blocks_[i].creator);
        return m;
    }

    /// Depth-1 blocks are cordial; otherwise the closure must hold blocks of
    /// the previous depth by a supermajority of creators.  All pointers of b
    /// must be accepted.
    bool is_cordial_block(const Block& b) const {
        if (b.pointers.empty()) return true;
        Bitset cl(blocks_.size());
        Round d = 0;
        for (const BlockId& p : b.pointers) {
            Index j = index_of(p);
            or_assign(cl, closures_[j]);
            d = std::max(d, depths_[j]);
        }
        return count_creators(creators_at_depth_in(cl, d)) >= static_cast<int>(supermajority());
    }

    /// The deepest round r whose blocks come from >= 2f+1 non-equivocating
    /// creators while p has no block deeper than r.  Returns 0 when p has no
    /// blocks yet and no round qualifies, which authorises p's initial block.
    std::optional<Round> cordial_round(MinerId p) const {
        Round own = 0;
        if (auto last = latest_of(p)) own = depths_[*last];
        for (Round r = max_depth(); r >= 1 && r >= own; --r) {
            CreatorMask m = 0;
            for (Index i : at_depth(r)) m |= creator_bit(blocks_[i].creator);
            m &= ~equivocators_;
            if (count_creators(m) >= static_cast<int>(supermajority())) return r;
        }
        if (own == 0) return Round{0};
        return std::nullopt;
    }

    bool is_faulty(MinerId q) const {
        if (is_equivocator(q)) return true;
        for (Index i : by_creator(q))
            if (!cordial_[i]) return true;
        return false;
    }

    // ---- block creation --------------------------------------------------

    /// Creates, signs and inserts p's next block over `prefix`, pointing to
    /// the prefix tips (one per creator) and to p's latest block if the tips
    /// do not already acknowledge it.
    Block create_block(MinerId p, Bytes payload, const BlockSet& prefix) {
        if (is_equivocator(p)) throw Error("creating a block would extend an equivocation");
        Block b = build_block(p, std::move(payload), prefix);
        sign_block(b, keys_);
        AcceptResult r = insert(b);
        if (r.status != AcceptResult::Status::Accepted) {
            std::string why = r.rejected.empty() ? "buffered" : to_string(r.rejected.front().second);
            throw Error("created block was not accepted: " + why);
        }
        return b;
    }

    /// The unsigned block create_block would make, without inserting it.
    Block build_block(MinerId p, Bytes payload, const BlockSet& prefix) const {
        if (p.value >= n_) throw Error("unknown creator");
        Round prefix_depth = 0;
        for (const BlockId& id : prefix) prefix_depth = std::max(prefix_depth, depth(id));
        auto own = latest_of(p);
        if (own && depths_[*own] > prefix_depth) throw Error("miner already has a block deeper than the prefix");

        Block b;
        b.creator = p;
        b.payload = std::move(payload);
        b.pointers = select_pointers(tips(prefix));
        if (own) {
            Bitset cl(blocks_.size());
            for (const BlockId& ptr : b.pointers) or_assign(cl, closures_[index_of(ptr)]);
            if (!test_bit(cl, *own)) {
                std::erase_if(b.pointers, [&](const BlockId& x) { return block(x).creator == p; });
                b.pointers.push_back(ids_[*own]);
            }
        }
        return b;
    }

    /// Keeps one tip per creator: the deepest, then the smallest id.
    std::vector<BlockId> select_pointers(const BlockSet& tip_set) const {
        std::map<std::uint32_t, Index> chosen;
        for (const BlockId& t : tip_set) {
            Index i = index_of(t);
            auto [it, fresh] = chosen.try_emplace(blocks_[i].creator.value, i);
            if (!fresh && depths_[i] > depths_[it->second]) it->second = i;
        }
        std::vector<BlockId> out;
        for (auto& [creator, i] : chosen) out.push_back(ids_[i]);
        return out;
    }

    Bitset to_bits(const BlockSet& ids) const {
        Bitset out(blocks_.size());
        for (const BlockId& id : ids) out.set(index_of(id));
        return out;
    }

    BlockSet to_set(const Bitset& bits) const {
        BlockSet out;
        for_each_bit(bits, [&](Index i) { out.insert(ids_[i]); });
        return out;
    }

private:
    std::optional<RejectReason> check_static(const Block& b) const {
        if (b.creator.value >= n_) return RejectReason::UnknownCreator;
        if (options_.verify_signatures && !verify_block(b, keys_)) return RejectReason::BadSignature;
        std::vector<BlockId> sorted = b.pointers;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return RejectReason::DuplicatePointer;
        return std::nullopt;
    }

    std::optional<RejectReason> check_resolved(const Block& b) const {
        CreatorMask seen = 0;
        for (const BlockId& p : b.pointers) {
            CreatorMask bit = creator_bit(blocks_[index_.at(p)].creator);
            if (seen & bit) return RejectReason::MultiplePointersPerCreator;
            seen |= bit;
        }
        if (options_.reject_non_cordial && !is_cordial_block(b)) return RejectReason::NonCordial;
        return std::nullopt;
    }

    void accept(const BlockId& id, const Block& b) {
        Index k = static_cast<Index>(blocks_.size());
        Bitset cl(k + 1);
        Round d = 0;
        for (const BlockId& p : b.pointers) {
            Index j = index_.at(p);
            or_assign(cl, closures_[j]);
            d = std::max(d, depths_[j]);
        }
        cl.set(k);
        ++d;
        bool cordial = is_cordial_block(b);

        std::vector<Index> partners;
        for (Index x : by_creator_[b.creator.value])
            if (!cl.test(x)) partners.push_back(x);

        blocks_.push_back(b);
        ids_.push_back(id);
        depths_.push_back(d);
        closures_.push_back(std::move(cl));
        cordial_.push_back(cordial);
        partners_.push_back(partners);
        for (Index x : partners) partners_[x].push_back(k);
        if (!partners.empty()) equivocators_ |= creator_bit(b.creator);
        index_.emplace(id, k);
        by_creator_[b.creator.value].push_back(k);
        if (by_depth_.size() < d) by_depth_.resize(d);
        by_depth_[d - 1].push_back(k);
    }

    void cascade(const BlockId& first, AcceptResult& result) {
        std::deque<BlockId> ready{first};
        while (!ready.empty()) {
            BlockId done = ready.front();
            ready.pop_front();
            auto w = waiting_.find(done);
            if (w == waiting_.end()) continue;
            std::vector<BlockId> dependents = std::move(w->second);
            waiting_.erase(w);
            std::sort(dependents.begin(), dependents.end());
            for (const BlockId& dep : dependents) {
                auto it = buffer_.find(dep);
                if (it == buffer_.end()) continue;
                bool resolved = std::all_of(it->second.pointers.begin(), it->second.pointers.end(),
                                            [&](const BlockId& p) { return index_.contains(p); });
                if (!resolved) continue;
                Block b = std::move(it->second);
                buffer_.erase(it);
                if (auto reason = check_resolved(b)) {
                    result.rejected.emplace_back(dep, *reason);
                    continue;
                }
                accept(dep, b);
                result.accepted.push_back(dep);
                ready.push_back(dep);
            }
        }
    }

    std::uint32_t n_;
    std::uint32_t f_;
    KeyRing keys_;
    StoreOptions options_;

    std::vector<Block> blocks_;
    std::vector<BlockId> ids_;
    std::vector<Round> depths_;
    std::vector<Bitset> closures_;
    std::vector<bool> cordial_;
    std::vector<std::vector<Index>> partners_;
    std::unordered_map<BlockId, Index> index_;
    std::vector<std::vector<Index>> by_creator_;
    std::vector<std::vector<Index>> by_depth_;
    CreatorMask equivocators_ = 0;

    std::map<BlockId, Block> buffer_;
    std::unordered_map<BlockId, std::vector<BlockId>> waiting_;
};

/// Builds and signs a block with explicit pointers (fixtures and Byzantine
/// behaviour; correct miners use BlockStore::create_block).
inline Block make_block(MinerId creator, Bytes payload, std::vector<BlockId> pointers, const KeyRing& keys) {
    Block b;
    b.creator = creator;
    b.payload = std::move(payload);
    b.pointers = std::move(pointers);
    sign_block(b, keys);
    return b;
}

}  // namespace cordial
