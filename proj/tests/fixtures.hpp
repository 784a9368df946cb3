#pragma once

// Hand-built and randomly generated blocklaces shared by the test binaries.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cordial/blocklace.hpp"
#include "cordial/leader_election.hpp"

namespace fixtures {

using namespace cordial;

inline Bytes text(const std::string& s) { return Bytes(s.begin(), s.end()); }

/// Full rounds: every miner creates one block per depth, pointing to all n
/// blocks of the previous depth.  blocks[d-1][q] is q's depth-d block.
struct FullRounds {
    KeyRing keys;
    std::vector<std::vector<Block>> blocks;
    std::vector<std::vector<BlockId>> ids;

    FullRounds(std::uint32_t n, Round rounds, std::uint64_t seed = 1) : keys(n, seed) {
        for (Round d = 1; d <= rounds; ++d) {
            std::vector<Block> row;
            std::vector<BlockId> row_ids;
            for (std::uint32_t q = 0; q < n; ++q) {
                std::vector<BlockId> ptrs = d == 1 ? std::vector<BlockId>{} : ids.back();
                Block b = make_block(MinerId(q), text("m" + std::to_string(q) + "r" + std::to_string(d)), ptrs, keys);
                row_ids.push_back(block_id(b));
                row.push_back(std::move(b));
            }
            blocks.push_back(std::move(row));
            ids.push_back(std::move(row_ids));
        }
    }

    const BlockId& id(Round d, std::uint32_t q) const { return ids[d - 1][q]; }

    BlockStore store(std::uint32_t f, Round up_to) const {
        BlockStore s(static_cast<std::uint32_t>(keys.size()), f, keys);
        for (Round d = 1; d <= up_to; ++d)
            for (const Block& b : blocks[d - 1]) s.insert(b);
        return s;
    }
};

struct GenOptions {
    std::uint32_t n = 4;
    std::uint32_t f = 1;
    Round rounds = 8;
    /// Number of miners (< n) that equivocate; at most f keeps the no-double-approval property.
    std::uint32_t equivocators = 0;
    /// Probability an equivocator forks at a given round.
    double fork_rate = 0.3;
    /// Probability a correct miner skips creating a block in a round.
    double skip_rate = 0.0;
};

/// A random cordial blocklace in creation (topological) order.  Each block
/// points to a random subset of 2f+1 or more distinct-creator blocks of the
/// previous depth, including its creator's own latest block.
struct RandomLace {
    KeyRing keys;
    GenOptions opt;
    std::vector<Block> blocks;
    std::vector<BlockId> ids;
    std::vector<std::uint32_t> byzantine;

    RandomLace(const GenOptions& o, std::uint64_t seed) : keys(o.n, seed), opt(o) {
        std::mt19937_64 rng(seed);
        std::vector<std::uint32_t> miners(o.n);
        for (std::uint32_t i = 0; i < o.n; ++i) miners[i] = i;
        std::shuffle(miners.begin(), miners.end(), rng);
        byzantine.assign(miners.begin(), miners.begin() + o.equivocators);

        // prev[q]: q's blocks of the previous depth (two on a fork).
        std::map<std::uint32_t, std::vector<BlockId>> prev;
        std::map<std::uint32_t, BlockId> own_latest;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (Round d = 1; d <= o.rounds; ++d) {
            std::map<std::uint32_t, std::vector<BlockId>> next;
            for (std::uint32_t q = 0; q < o.n; ++q) {
                bool byz = is_byzantine(q);
                if (d > 1 && !byz && unit(rng) < o.skip_rate && prev.size() > 2 * o.f + 1) continue;
                int copies = byz && unit(rng) < o.fork_rate ? 2 : 1;
                const auto latest_before = own_latest;
                for (int c = 0; c < copies; ++c) {
                    std::vector<BlockId> ptrs;
                    if (d > 1) {
                        ptrs = choose_pointers(q, prev, latest_before, rng);
                        if (ptrs.empty()) continue;
                    }
                    std::string tag = "g" + std::to_string(q) + "d" + std::to_string(d) + "c" + std::to_string(c);
                    Block b = make_block(MinerId(q), text(tag), ptrs, keys);
                    BlockId id = block_id(b);
                    blocks.push_back(std::move(b));
                    ids.push_back(id);
                    next[q].push_back(id);
                    if (c == 0) own_latest[q] = id;
                }
            }
            prev = std::move(next);
        }
    }

    bool is_byzantine(std::uint32_t q) const {
        return std::find(byzantine.begin(), byzantine.end(), q) != byzantine.end();
    }

    /// Block ids in a random order that still lists pointed-to blocks first.
    std::vector<std::size_t> random_topological_order(std::mt19937_64& rng) const {
        std::map<BlockId, std::size_t> pos;
        for (std::size_t i = 0; i < ids.size(); ++i) pos[ids[i]] = i;
        std::vector<int> missing(blocks.size());
        std::vector<std::vector<std::size_t>> dependents(blocks.size());
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            for (const BlockId& p : blocks[i].pointers) {
                dependents[pos.at(p)].push_back(i);
                ++missing[i];
            }
        }
        std::vector<std::size_t> ready, out;
        for (std::size_t i = 0; i < blocks.size(); ++i)
            if (missing[i] == 0) ready.push_back(i);
        while (!ready.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, ready.size() - 1);
            std::size_t k = pick(rng);
            std::size_t i = ready[k];
            ready[k] = ready.back();
            ready.pop_back();
            out.push_back(i);
            for (std::size_t j : dependents[i])
                if (--missing[j] == 0) ready.push_back(j);
        }
        return out;
    }

    BlockStore empty_store() const { return BlockStore(opt.n, opt.f, keys); }

    BlockStore full_store() const {
        BlockStore s = empty_store();
        for (const Block& b : blocks) s.insert(b);
        return s;
    }

private:
    std::vector<BlockId> choose_pointers(std::uint32_t q, const std::map<std::uint32_t, std::vector<BlockId>>& prev,
                                         const std::map<std::uint32_t, BlockId>& own_latest,
                                         std::mt19937_64& rng) const {
        std::vector<std::uint32_t> others;
        for (const auto& [creator, list] : prev)
            if (creator != q) others.push_back(creator);
        std::shuffle(others.begin(), others.end(), rng);

        std::vector<BlockId> ptrs;
        std::uint32_t have = 0;
        auto own = own_latest.find(q);
        bool own_prev = prev.contains(q) && own != own_latest.end();
        if (own_prev) {
            ptrs.push_back(own->second);
            ++have;
        }
        std::uint32_t need = 2 * opt.f + 1;
        std::uint32_t max_extra = static_cast<std::uint32_t>(others.size());
        std::uint32_t min_extra = need > have ? need - have : 0;
        if (min_extra > max_extra) return {};
        std::uniform_int_distribution<std::uint32_t> count(min_extra, max_extra);
        std::uint32_t take = count(rng);
        for (std::uint32_t i = 0; i < take; ++i) {
            const auto& options = prev.at(others[i]);
            std::uniform_int_distribution<std::size_t> which(0, options.size() - 1);
            ptrs.push_back(options[which(rng)]);
        }
        if (!own_prev && own != own_latest.end()) ptrs.push_back(own->second);
        return ptrs;
    }
};

}  // namespace fixtures
