#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "cordial/blocklace.hpp"
#include "cordial/leader_election.hpp"

namespace cordial {

/// A miner's final output: delivered blocks in order, blocks permanently
/// excluded as equivocations, and the leaders whose fragments are final.
struct DeliveryLog {
    std::vector<BlockId> delivered;
    /// Leader round of the fragment that delivered each entry.
    std::vector<Round> finalized_by;
    BlockSet delivered_set;
    BlockSet suppressed;
    BlockSet final_leaders;
    std::optional<BlockId> current_leader;
};

/// Leader blocks of depth d: accepted d-blocks by leader(d).
inline std::vector<Index> leader_blocks_at(const BlockStore& store, Round d, const LeaderFn& leader) {
    std::vector<Index> out;
    auto who = leader(d);
    if (!who) return out;
    for (Index i : store.at_depth(d))
        if (store.creator_at(i) == *who) out.push_back(i);
    return out;
}

inline BlockSet leaders(const BlockStore& store, const LeaderFn& leader) {
    BlockSet out;
    for (Round d = 1; d <= store.max_depth(); ++d)
        for (Index i : leader_blocks_at(store, d, leader)) out.insert(store.id_at(i));
    return out;
}

namespace detail {

/// Searches for 2f+1 distinct-creator blocks among `candidates` whose
/// approval masks intersect in blocks by 2f+1 creators.  When `required` is
/// set, one chosen block must be by that creator.
class QuorumSearch {
public:
    QuorumSearch(const BlockStore& store, const std::vector<Index>& approvers,
                 const std::vector<Index>& candidates)
        : store_(store), approvers_(approvers), need_(static_cast<int>(store.supermajority())) {
        for (Index c : candidates) {
            Bitset mask(approvers.size());
            for (std::size_t j = 0; j < approvers.size(); ++j)
                if (test_bit(store.closure_bits(c), approvers[j])) mask.set(j);
            by_creator_[store.creator_at(c).value].push_back(std::move(mask));
        }
        for (auto& [creator, masks] : by_creator_) creators_.push_back(creator);
    }

    bool find(std::optional<MinerId> required) {
        Bitset all(approvers_.size());
        all.set();
        if (!required) return dfs(0, 0, all, std::nullopt);
        auto it = by_creator_.find(required->value);
        if (it == by_creator_.end()) return false;
        for (const Bitset& m : it->second)
            if (dfs(0, 1, all & m, required->value)) return true;
        return false;
    }

private:
    int creators_of(const Bitset& mask) const {
        CreatorMask m = 0;
        for_each_bit(mask, [&](Index j) { m |= creator_bit(store_.creator_at(approvers_[j])); });
        return count_creators(m);
    }

    bool dfs(std::size_t k, int chosen, const Bitset& inter, std::optional<std::uint32_t> skip) {
        if (creators_of(inter) < need_) return false;
        if (chosen == need_) return true;
        int remaining = 0;
        for (std::size_t i = k; i < creators_.size(); ++i)
            if (!skip || creators_[i] != *skip) ++remaining;
        if (chosen + remaining < need_) return false;
        for (std::size_t i = k; i < creators_.size(); ++i) {
            if (skip && creators_[i] == *skip) continue;
            for (const Bitset& m : by_creator_.at(creators_[i]))
                if (dfs(i + 1, chosen + 1, inter & m, skip)) return true;
        }
        return false;
    }

    const BlockStore& store_;
    const std::vector<Index>& approvers_;
    int need_;
    std::map<std::uint32_t, std::vector<Bitset>> by_creator_;
    std::vector<std::uint32_t> creators_;
};

}  // namespace detail

/// True iff the leader block at index `lead` is super-ratified: blocks of
/// depth+beta by 2f+1 distinct creators each ratify it.  Under eventual
/// synchrony one of them must be a leader block of depth+beta.
inline bool is_super_ratified_idx(const BlockStore& store, Index lead, const WaveParams& params,
                                  const LeaderFn& leader) {
    const Round r = store.depth_at(lead);
    std::optional<MinerId> required;
    if (params.model == Model::EventualSynchrony) {
        required = leader(r + params.beta);
        if (!required) return false;
    }
    CreatorMask ratifying = 0;
    bool has_required = !required;
    for (Index z : store.at_depth(r + params.beta)) {
        if (!store.ratifies_idx(lead, z, params.alpha)) continue;
        ratifying |= creator_bit(store.creator_at(z));
        if (required && store.creator_at(z) == *required) has_required = true;
    }
    return has_required && count_creators(ratifying) >= static_cast<int>(store.supermajority());
}

/// The deepest super-ratified leader block deeper than `floor`, if any.
inline std::optional<BlockId> super_ratified_leader(const BlockStore& store, const WaveParams& params,
                                                    const LeaderFn& leader, Round floor = 0) {
    if (store.max_depth() <= params.beta) return std::nullopt;
    for (Round d = store.max_depth() - params.beta; d > floor; --d) {
        if (!params.is_leader_round(d)) continue;
        std::optional<BlockId> found;
        for (Index i : leader_blocks_at(store, d, leader)) {
            if (!is_super_ratified_idx(store, i, params, leader)) continue;
            if (found) throw std::logic_error("two super-ratified leader blocks at one depth");
            found = store.id_at(i);
        }
        if (found) return found;
    }
    return std::nullopt;
}

/// Orders by (depth, creator, id); respects the pointer order since a block
/// is always deeper than everything it acknowledges.
inline std::vector<BlockId> topo_sort(const BlockStore& store, const BlockSet& blocks) {
    std::vector<BlockId> out(blocks.begin(), blocks.end());
    std::sort(out.begin(), out.end(), [&](const BlockId& a, const BlockId& b) {
        Index ia = store.index_of(a), ib = store.index_of(b);
        auto ka = std::tuple(store.depth_at(ia), store.creator_at(ia).value, std::cref(a));
        auto kb = std::tuple(store.depth_at(ib), store.creator_at(ib).value, std::cref(b));
        return ka < kb;
    });
    return out;
}

/// The deepest leader block ratified by `witness`, if any.
inline std::optional<Index> previous_ratified_leader(const BlockStore& store, Index witness,
                                                     const WaveParams& params, const LeaderFn& leader) {
    Round top = store.depth_at(witness);
    if (top <= params.alpha) return std::nullopt;
    for (Round d = top - params.alpha; d >= 1; --d) {
        if (!params.is_leader_round(d)) continue;
        std::optional<Index> found;
        for (Index i : leader_blocks_at(store, d, leader)) {
            if (!store.ratifies_idx(i, witness, params.alpha)) continue;
            if (found) throw std::logic_error("two ratified leader blocks at one depth");
            found = i;
        }
        if (found) return found;
    }
    return std::nullopt;
}

/// Appends the fragments finalized by the current super-ratified leader,
/// walking back through ratified leaders to the last final one.  Returns the
/// newly delivered ids; leaders made final are appended to `finalized`
/// oldest first.
inline std::vector<BlockId> tau_deliver(const BlockStore& store, DeliveryLog& log, const WaveParams& params,
                                        const LeaderFn& leader, std::vector<BlockId>* finalized = nullptr) {
    Round floor = log.current_leader ? store.depth(*log.current_leader) : 0;
    auto top = super_ratified_leader(store, params, leader, floor);
    if (!top || top == log.current_leader) return {};

    std::vector<Index> chain{store.index_of(*top)};
    std::optional<Index> base;
    while (true) {
        auto prev = previous_ratified_leader(store, chain.back(), params, leader);
        if (!prev) break;
        if (log.final_leaders.contains(store.id_at(*prev))) {
            base = prev;
            break;
        }
        chain.push_back(*prev);
    }

    std::vector<BlockId> fresh;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        Index lead = *it;
        Bitset span = store.closure_bits(lead);
        if (base) minus_assign(span, store.closure_bits(*base));

        BlockSet approved;
        for_each_bit(span, [&](Index x) {
            if (store.approves_idx(x, lead))
                approved.insert(store.id_at(x));
            else
                log.suppressed.insert(store.id_at(x));
        });
        Round round = store.depth_at(lead);
        for (const BlockId& id : topo_sort(store, approved)) {
            if (!log.delivered_set.insert(id).second) throw std::logic_error("block delivered twice");
            log.delivered.push_back(id);
            log.finalized_by.push_back(round);
            fresh.push_back(id);
        }
        log.final_leaders.insert(store.id_at(lead));
        if (finalized) finalized->push_back(store.id_at(lead));
        base = lead;
    }
    log.current_leader = top;
    return fresh;
}

namespace reference {

/// Recomputes the output sequence from scratch using only block pointers:
/// explicit-set closures, longest-path depths and exhaustive quorum search.
/// Shares nothing with the indexed predicates above.
class Oracle {
public:
    Oracle(const BlockStore& store, const WaveParams& params, LeaderFn leader)
        : store_(store), params_(params), leader_(std::move(leader)) {
        for (const BlockId& id : store.accepted_ids()) all_.push_back(id);
    }

    const BlockSet& closure(const BlockId& b) {
        if (auto it = closures_.find(b); it != closures_.end()) return it->second;
        BlockSet out{b};
        std::vector<BlockId> stack{b};
        while (!stack.empty()) {
            BlockId cur = stack.back();
            stack.pop_back();
            for (const BlockId& p : store_.block(cur).pointers)
                if (out.insert(p).second) stack.push_back(p);
        }
        return closures_.emplace(b, std::move(out)).first->second;
    }

    Round depth(const BlockId& b) {
        if (auto it = depths_.find(b); it != depths_.end()) return it->second;
        Round d = 1;
        for (const BlockId& p : store_.block(b).pointers) d = std::max<Round>(d, depth(p) + 1);
        depths_.emplace(b, d);
        return d;
    }

    MinerId creator(const BlockId& b) const { return store_.block(b).creator; }

    bool equivocation(const BlockId& a, const BlockId& b) {
        return a != b && creator(a) == creator(b) && !closure(a).contains(b) && !closure(b).contains(a);
    }

    bool approves(const BlockId& target, const BlockId& approver) {
        const BlockSet& cl = closure(approver);
        if (!cl.contains(target)) return false;
        for (const BlockId& x : cl)
            if (equivocation(target, x)) return false;
        return true;
    }

    std::vector<BlockId> at_depth(Round d) {
        std::vector<BlockId> out;
        for (const BlockId& b : all_)
            if (depth(b) == d) out.push_back(b);
        return out;
    }

    bool is_leader(const BlockId& b) {
        auto who = leader_(depth(b));
        return who && *who == creator(b);
    }

    bool ratifies(const BlockId& target, const BlockId& witness) {
        std::set<std::uint32_t> creators;
        Round d = depth(target) + params_.alpha;
        for (const BlockId& y : closure(witness))
            if (depth(y) == d && approves(target, y)) creators.insert(creator(y).value);
        return creators.size() >= store_.supermajority();
    }

    bool super_ratified(const BlockId& lead) {
        Round r = depth(lead);
        std::optional<MinerId> must;
        if (params_.model == Model::EventualSynchrony) {
            must = leader_(r + params_.beta);
            if (!must) return false;
        }
        std::vector<BlockId> ratifying;
        for (const BlockId& z : at_depth(r + params_.beta))
            if (ratifies(lead, z)) ratifying.push_back(z);
        if (must && std::none_of(ratifying.begin(), ratifying.end(),
                                 [&](const BlockId& z) { return creator(z) == *must; }))
            return false;
        return distinct_creators(ratifying) >= store_.supermajority();
    }

    std::optional<BlockId> last_super_ratified() {
        std::optional<BlockId> best;
        for (const BlockId& b : all_) {
            if (!is_leader(b) || !super_ratified(b)) continue;
            if (!best || depth(b) > depth(*best)) {
                best = b;
            } else if (depth(b) == depth(*best)) {
                throw std::logic_error("reference: two super-ratified leaders at one depth");
            }
        }
        return best;
    }

    std::vector<BlockId> topo(std::vector<BlockId> blocks) {
        std::sort(blocks.begin(), blocks.end(), [&](const BlockId& a, const BlockId& b) {
            return std::tuple(depth(a), creator(a).value, a) < std::tuple(depth(b), creator(b).value, b);
        });
        return blocks;
    }

    /// Output of the recursive ordering function rooted at leader block b.
    std::vector<BlockId> tau_prime(const BlockId& b) {
        std::optional<BlockId> prev;
        for (const BlockId& x : closure(b)) {
            if (x == b || !is_leader(x) || !ratifies(x, b)) continue;
            if (!prev || depth(x) > depth(*prev)) {
                prev = x;
            } else if (depth(x) == depth(*prev)) {
                throw std::logic_error("reference: two ratified leaders at one depth");
            }
        }
        std::vector<BlockId> out;
        if (prev) out = tau_prime(*prev);
        std::vector<BlockId> fragment;
        for (const BlockId& x : closure(b)) {
            if (prev && closure(*prev).contains(x)) continue;
            if (approves(x, b)) fragment.push_back(x);
        }
        for (const BlockId& x : topo(std::move(fragment))) out.push_back(x);
        return out;
    }

    std::vector<BlockId> tau() {
        auto last = last_super_ratified();
        if (!last) return {};
        return tau_prime(*last);
    }

private:
    std::size_t distinct_creators(const std::vector<BlockId>& blocks) const {
        std::set<std::uint32_t> s;
        for (const BlockId& b : blocks) s.insert(creator(b).value);
        return s.size();
    }

    const BlockStore& store_;
    WaveParams params_;
    LeaderFn leader_;
    std::vector<BlockId> all_;
    std::map<BlockId, BlockSet> closures_;
    std::map<BlockId, Round> depths_;
};

}  // namespace reference

/// Full output sequence of the store, recomputed from scratch.
inline std::vector<BlockId> tau_oracle(const BlockStore& store, const WaveParams& params, const LeaderFn& leader) {
    reference::Oracle oracle(store, params, leader);
    return oracle.tau();
}

}  // namespace cordial
