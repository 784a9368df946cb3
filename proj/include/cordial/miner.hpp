#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "cordial/blocklace.hpp"
#include "cordial/leader_election.hpp"
#include "cordial/ordering.hpp"

namespace cordial {

struct ProtocolConfig {
    std::uint32_t n = 4;
    std::uint32_t f = 1;
    WaveParams params = WaveParams::eventual_synchrony();
    /// Eventual-synchrony timeout in ticks.
    Tick delta = 10;
    /// Payload items per block and bytes per item.
    std::uint32_t batch = 4;
    std::uint32_t payload_size = 32;
};

/// Blocks sent in one message, parents first.
struct Package {
    MinerId sender;
    std::vector<Block> blocks;
};

/// [sender u32][count u32] followed by each block's wire form.
inline Bytes encode_package(const Package& p) {
    Bytes out;
    put_u32(out, p.sender.value);
    put_u32(out, static_cast<std::uint32_t>(p.blocks.size()));
    for (const Block& b : p.blocks) append_wire(out, b);
    return out;
}

inline Package decode_package(const Bytes& bytes) {
    detail::Reader in(bytes);
    Package p;
    p.sender = MinerId(static_cast<std::uint32_t>(in.uint(4)));
    auto count = in.uint(4);
    for (std::uint64_t i = 0; i < count; ++i) {
        Block b = canonical_decode(in.take(in.uint(4)));
        b.signature = in.take(in.uint(2));
        p.blocks.push_back(std::move(b));
    }
    if (!in.done()) throw Error("trailing bytes after package");
    return p;
}

struct Outgoing {
    MinerId to;
    Package package;
};

struct Delivery {
    BlockId id;
    Round leader_round;
};

/// A leader whose fragment became final.  Direct decisions are the
/// super-ratified leader itself; the others were reached by recursion.
struct Decision {
    Round leader_round;
    BlockId leader;
    Round trigger_depth;
    bool direct;
};

struct CoinRequest {
    Round round;
    bool revealed;
};

/// Everything one call into a miner did, for the transcript.
struct MinerEvents {
    std::vector<BlockId> accepted;
    std::vector<std::pair<BlockId, RejectReason>> rejected;
    std::vector<Delivery> delivered;
    std::vector<Decision> decisions;
    std::vector<CoinRequest> coin_requests;
    std::vector<Block> created;
    std::vector<Outgoing> sends;

    void append(MinerEvents&& o) {
        auto move_all = [](auto& dst, auto& src) { dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end())); };
        move_all(accepted, o.accepted);
        move_all(rejected, o.rejected);
        move_all(delivered, o.delivered);
        move_all(decisions, o.decisions);
        move_all(coin_requests, o.coin_requests);
        move_all(created, o.created);
        move_all(sends, o.sends);
    }
};

enum class Behavior { Correct, Silent, Crash, Equivocate };

inline const char* to_string(Behavior b) {
    switch (b) {
        case Behavior::Correct: return "correct";
        case Behavior::Silent: return "silent";
        case Behavior::Crash: return "crash";
        case Behavior::Equivocate: return "equivocate";
    }
    return "?";
}

inline Behavior parse_behavior(const std::string& s) {
    if (s == "correct") return Behavior::Correct;
    if (s == "silent") return Behavior::Silent;
    if (s == "crash") return Behavior::Crash;
    if (s == "equivocate") return Behavior::Equivocate;
    throw Error("unknown behavior '" + s + "'");
}

struct ByzantineProfile {
    Behavior behavior = Behavior::Correct;
    /// Crash: stops once its own depth reaches this round.
    Round round = 0;
    /// Equivocate: probability of forking each block.
    double rate = 0.5;
    std::uint64_t seed = 0;
};

/// One miner running the generic cordial protocol: accept blocks, deliver
/// through tau, create a block when allowed, and send each peer what it is
/// missing.  Not copyable; the leader function refers back to the miner.
class Miner {
public:
    Miner(MinerId id, const ProtocolConfig& cfg, const KeyRing& keys, CoinOracle* coin = nullptr,
          ByzantineProfile profile = {})
        : id_(id),
          cfg_(cfg),
          store_(cfg.n, cfg.f, keys),
          coin_(coin),
          profile_(profile),
          rng_(profile.seed),
          hist_(cfg.n),
          bare_(cfg.n),
          known_by_(cfg.n),
          last_sent_own_(cfg.n),
          heard_(cfg.n, false),
          owed_(cfg.n, false) {
        if (cfg.params.model == Model::EventualSynchrony) {
            leader_ = deterministic_leader_fn(cfg.n, cfg.params.leader_stride);
        } else {
            if (!coin_) throw Error("asynchrony needs a coin oracle");
            leader_ = [this](Round d) -> std::optional<MinerId> {
                auto it = known_coins_.find(d);
                if (it == known_coins_.end()) return std::nullopt;
                return it->second;
            };
        }
    }

    Miner(const Miner&) = delete;
    Miner& operator=(const Miner&) = delete;

    MinerId id() const { return id_; }
    const ProtocolConfig& config() const { return cfg_; }
    const BlockStore& store() const { return store_; }
    const DeliveryLog& log() const { return log_; }
    const LeaderFn& leader_fn() const { return leader_; }
    const ByzantineProfile& profile() const { return profile_; }
    bool is_correct() const { return profile_.behavior == Behavior::Correct; }
    const std::set<Round>& waiting_coins() const { return waiting_coins_; }
    Tick last_send() const { return last_send_; }

    /// Crashed miners and silent ones take no further part.
    bool halted() const {
        if (profile_.behavior == Behavior::Silent) return true;
        if (profile_.behavior != Behavior::Crash) return false;
        auto own = store_.latest_of(id_);
        return own && store_.depth_at(*own) >= profile_.round;
    }

    void set_payload_enabled(bool on) { payload_enabled_ = on; }

    MinerEvents on_receive(const Package& pkg) {
        MinerEvents ev;
        if (halted()) return ev;
        for (const Block& b : pkg.blocks) {
            AcceptResult r = store_.insert(b);
            for (auto& rej : r.rejected) ev.rejected.push_back(rej);
            for (const BlockId& id : r.accepted) after_accept(store_.index_of(id), ev);
        }
        if (pkg.sender.value < cfg_.n && pkg.sender != id_) {
            heard_[pkg.sender.value] = true;
            send_backlog(pkg.sender, ev);
        }
        return ev;
    }

    /// q responded to the last block p sent it: a later q-block acknowledges
    /// it, or some package from q arrived after it was sent.
    bool responsive(MinerId q) const {
        const auto& last = last_sent_own_[q.value];
        return !last || heard_[q.value] || test_bit(known_by_[q.value], *last);
    }

    std::optional<Round> can_proceed(Tick now) const {
        if (halted()) return std::nullopt;
        auto r = store_.cordial_round(id_);
        if (!r || cfg_.params.model == Model::Asynchrony) return r;
        if (now - last_send_ >= cfg_.delta) return r;
        if (leader_(*r + 1) == id_) return r;
        return std::nullopt;
    }

    /// Time at which a pending eventual-synchrony timeout would let the
    /// miner proceed, if it is currently waiting on one.
    std::optional<Tick> wake_time(Tick now) const {
        if (halted() || cfg_.params.model != Model::EventualSynchrony) return std::nullopt;
        if (!store_.cordial_round(id_) || can_proceed(now)) return std::nullopt;
        return last_send_ + cfg_.delta;
    }

    MinerEvents step(Tick now) {
        MinerEvents ev;
        auto r = can_proceed(now);
        if (!r) return ev;
        BlockSet prefix = *r == 0 ? BlockSet{} : store_.blocks_prefix(*r);
        if (profile_.behavior == Behavior::Equivocate) {
            step_forking(prefix, now, ev);
            return ev;
        }
        Block b = store_.create_block(id_, next_payload(), prefix);
        Index bi = store_.index_of(block_id(b));
        ev.created.push_back(b);
        after_accept(bi, ev);
        for (std::uint32_t q = 0; q < cfg_.n; ++q) {
            if (q == id_.value || store_.is_faulty(MinerId(q))) continue;
            send_block(bi, MinerId(q), responsive(MinerId(q)), ev);
        }
        if (!ev.sends.empty()) last_send_ = now;
        return ev;
    }

    /// Learns a coin value revealed by other miners' requests.
    MinerEvents learn_coin(Round r, MinerId v) {
        MinerEvents ev;
        if (!waiting_coins_.erase(r)) return ev;
        known_coins_.emplace(r, v);
        deliver(ev);
        return ev;
    }

    /// Sends every non-faulty peer all accepted blocks it is not known to
    /// have, ignoring responsiveness.
    std::vector<Outgoing> flush() {
        std::vector<Outgoing> out;
        if (halted()) return out;
        Bitset all(store_.size());
        all.set();
        for (std::uint32_t q = 0; q < cfg_.n; ++q) {
            if (q == id_.value || store_.is_faulty(MinerId(q))) continue;
            Bitset missing = all;
            minus_assign(missing, hist_[q]);
            minus_assign(missing, bare_[q]);
            if (missing.none()) continue;
            or_assign(hist_[q], missing);
            out.push_back({MinerId(q), package_of(missing)});
        }
        return out;
    }

private:
    void after_accept(Index i, MinerEvents& ev) {
        ev.accepted.push_back(store_.id_at(i));
        std::uint32_t c = store_.creator_at(i).value;
        or_assign(known_by_[c], store_.closure_bits(i));
        or_assign(hist_[c], store_.closure_bits(i));
        request_coins(ev);
        deliver(ev);
    }

    /// Decisions are stamped with the deepest round the miner holds.
    void deliver(MinerEvents& ev) {
        const Round trigger = store_.max_depth();
        std::vector<BlockId> finalized;
        auto fresh = tau_deliver(store_, log_, cfg_.params, leader_, &finalized);
        std::size_t base = log_.delivered.size() - fresh.size();
        for (std::size_t k = 0; k < fresh.size(); ++k) ev.delivered.push_back({fresh[k], log_.finalized_by[base + k]});
        for (const BlockId& l : finalized)
            ev.decisions.push_back({store_.depth(l), l, trigger, l == log_.current_leader});
    }

    /// Asks for the coin of every leader round r whose round r+beta already
    /// holds blocks of 2f+1 distinct creators.
    void request_coins(MinerEvents& ev) {
        if (!coin_) return;
        Round complete = 0;
        for (Round d = store_.max_depth(); d > next_coin_; --d) {
            CreatorMask m = 0;
            for (Index i : store_.at_depth(d)) m |= creator_bit(store_.creator_at(i));
            if (count_creators(m) >= static_cast<int>(store_.supermajority())) {
                complete = d;
                break;
            }
        }
        const Round stride = cfg_.params.leader_stride, beta = cfg_.params.beta;
        while (next_coin_ + stride + beta <= complete) {
            next_coin_ += stride;
            auto v = coin_->request(id_, next_coin_);
            ev.coin_requests.push_back({next_coin_, v.has_value()});
            if (v)
                known_coins_.emplace(next_coin_, *v);
            else
                waiting_coins_.insert(next_coin_);
        }
    }

    Package package_of(const Bitset& bits) const {
        Package p{id_, {}};
        for_each_bit(bits, [&](Index i) { p.blocks.push_back(store_.block_at(i)); });
        return p;
    }

    void send_block(Index bi, MinerId q, bool full, MinerEvents& ev) {
        Bitset bits;
        if (full) {
            bits = store_.closure_bits(bi);
            minus_assign(bits, hist_[q.value]);
            minus_assign(bits, bare_[q.value]);
            or_assign(hist_[q.value], store_.closure_bits(bi));
        } else {
            bits = Bitset(bi + 1);
            bits.set(bi);
            or_assign(bare_[q.value], bits);
            owed_[q.value] = true;
        }
        last_sent_own_[q.value] = bi;
        heard_[q.value] = false;
        ev.sends.push_back({q, package_of(bits)});
    }

    /// Once q responds after blocks went to it bare, sends what those blocks
    /// depend on and q is not known to hold.
    void send_backlog(MinerId q, MinerEvents& ev) {
        if (!owed_[q.value] || !responsive(q) || store_.is_faulty(q)) return;
        owed_[q.value] = false;
        auto own = store_.latest_of(id_);
        if (!own) return;
        Bitset bits = store_.closure_bits(*own);
        minus_assign(bits, hist_[q.value]);
        minus_assign(bits, bare_[q.value]);
        or_assign(hist_[q.value], store_.closure_bits(*own));
        if (bits.none()) return;
        ev.sends.push_back({q, package_of(bits)});
    }

    /// Byzantine step: sometimes creates two blocks over the same prefix and
    /// sends each to a different half of the peers.
    void step_forking(const BlockSet& prefix, Tick now, MinerEvents& ev) {
        std::bernoulli_distribution fork(profile_.rate);
        bool split = fork(rng_);
        std::vector<Block> copies;
        for (int copy = 0; copy < (split ? 2 : 1); ++copy) {
            Bytes payload = next_payload();
            payload.push_back(static_cast<std::uint8_t>(copy));
            copies.push_back(store_.build_block(id_, std::move(payload), prefix));
            sign_block(copies.back(), store_.keys());
        }
        std::vector<Index> made;
        for (const Block& b : copies) {
            store_.insert(b);
            Index bi = store_.index_of(block_id(b));
            ev.created.push_back(b);
            after_accept(bi, ev);
            made.push_back(bi);
        }
        std::vector<std::uint32_t> peers;
        for (std::uint32_t q = 0; q < cfg_.n; ++q)
            if (q != id_.value) peers.push_back(q);
        std::shuffle(peers.begin(), peers.end(), rng_);
        for (std::size_t k = 0; k < peers.size(); ++k) {
            Index bi = made[split && k >= peers.size() / 2 ? 1 : 0];
            send_block(bi, MinerId(peers[k]), true, ev);
        }
        last_send_ = now;
    }

    Bytes next_payload() {
        Bytes out;
        if (!payload_enabled_) return out;
        std::uint32_t item = std::max<std::uint32_t>(cfg_.payload_size, 12);
        for (std::uint32_t k = 0; k < cfg_.batch; ++k) {
            std::size_t start = out.size();
            put_u32(out, id_.value);
            put_u64(out, payload_seq_++);
            out.resize(start + item, 0);
        }
        return out;
    }

    MinerId id_;
    ProtocolConfig cfg_;
    BlockStore store_;
    DeliveryLog log_;
    CoinOracle* coin_;
    ByzantineProfile profile_;
    std::mt19937_64 rng_;
    LeaderFn leader_;

    /// Blocks q is known to hold: closures of q's blocks and of full packages sent to q.
    std::vector<Bitset> hist_;
    /// Blocks sent to q on their own, without their closure.
    std::vector<Bitset> bare_;
    /// Union of closures of accepted q-blocks.
    std::vector<Bitset> known_by_;
    std::vector<std::optional<Index>> last_sent_own_;
    /// A package from q arrived after p's last send to q.
    std::vector<bool> heard_;
    /// Blocks went to q bare and their backlog is still unsent.
    std::vector<bool> owed_;

    std::map<Round, MinerId> known_coins_;
    std::set<Round> waiting_coins_;
    Round next_coin_ = 0;

    Tick last_send_ = 0;
    bool payload_enabled_ = true;
    std::uint64_t payload_seq_ = 0;
};

}  // namespace cordial
