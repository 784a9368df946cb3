#pragma once

// Deterministic discrete-event network: integer ticks, a priority queue of
// message arrivals and timer wake-ups, a delay adversary and Byzantine
// miners.  Every run is a function of its scenario.

#include <fstream>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "cordial/miner.hpp"
#include "json.hpp"

namespace cordial {

using Json = nlohmann::ordered_json;

enum class AdversaryKind { None, RandomDelay, PreGst, WorstCaseReorder };

inline const char* to_string(AdversaryKind k) {
    switch (k) {
        case AdversaryKind::None: return "none";
        case AdversaryKind::RandomDelay: return "random-delay";
        case AdversaryKind::PreGst: return "pre-gst-arbitrary";
        case AdversaryKind::WorstCaseReorder: return "worst-case-reorder";
    }
    return "?";
}

inline AdversaryKind parse_adversary(const std::string& s) {
    if (s == "none") return AdversaryKind::None;
    if (s == "random-delay") return AdversaryKind::RandomDelay;
    if (s == "pre-gst-arbitrary") return AdversaryKind::PreGst;
    if (s == "worst-case-reorder") return AdversaryKind::WorstCaseReorder;
    throw Error("unknown adversary '" + s + "'");
}

struct AdversaryPolicy {
    AdversaryKind kind = AdversaryKind::None;
    Tick min_delay = 1;
    Tick max_delay = 10;
    /// Delay of held-back messages: before GST, or from a wave's victims.
    Tick slow_delay = 200;
};

struct ByzantineSpec {
    /// Absent: picked at random from the seed.
    std::optional<std::uint32_t> miner;
    Behavior behavior = Behavior::Silent;
    Round round = 0;
    double rate = 0.5;
};

struct Scenario {
    std::uint32_t n = 4;
    std::uint32_t f = 1;
    Model model = Model::EventualSynchrony;
    std::uint64_t seed = 1;
    /// Blocks carrying payload are created up to this depth.
    Round rounds = 20;
    Tick delta = 10;
    Tick gst = 0;
    std::uint32_t batch = 4;
    std::uint32_t payload_size = 32;
    AdversaryPolicy adversary;
    std::vector<ByzantineSpec> byzantine;
    /// Keep the JSON-lines transcript (metrics are always computed).
    bool record = true;

    void validate() const {
        if (n < 1 || n > 64) throw Error("n must be in [1, 64]");
        if (n < 3 * f + 1) throw Error("n must be at least 3f+1");
        if (rounds == 0) throw Error("rounds must be positive");
        if (batch == 0) throw Error("batch must be positive");
        if (adversary.min_delay > adversary.max_delay) throw Error("minDelay exceeds maxDelay");
        if (byzantine.size() > f) throw Error("more Byzantine miners than f");
        std::set<std::uint32_t> seen;
        for (const auto& b : byzantine) {
            if (b.behavior == Behavior::Correct) throw Error("Byzantine entry with behavior 'correct'");
            if (b.rate < 0 || b.rate > 1) throw Error("rate must be in [0, 1]");
            if (b.miner) {
                if (*b.miner >= n) throw Error("Byzantine miner id out of range");
                if (!seen.insert(*b.miner).second) throw Error("miner listed twice as Byzantine");
            }
        }
    }
};

inline Json to_json(const Scenario& s) {
    Json byz = Json::array();
    for (const auto& b : s.byzantine) {
        Json e;
        if (b.miner)
            e["miner"] = *b.miner;
        else
            e["miner"] = "random";
        e["behavior"] = to_string(b.behavior);
        e["round"] = b.round;
        e["rate"] = b.rate;
        byz.push_back(e);
    }
    return Json{{"n", s.n},
                {"f", s.f},
                {"model", to_string(s.model)},
                {"seed", s.seed},
                {"rounds", s.rounds},
                {"delta", s.delta},
                {"gst", s.gst},
                {"batch", s.batch},
                {"payloadSize", s.payload_size},
                {"adversary",
                 {{"kind", to_string(s.adversary.kind)},
                  {"minDelay", s.adversary.min_delay},
                  {"maxDelay", s.adversary.max_delay},
                  {"slowDelay", s.adversary.slow_delay}}},
                {"byzantine", byz}};
}

/// Inverse of to_json.  Missing keys keep their defaults, except that f
/// defaults to (n-1)/3 and batch to n.  Unknown keys are errors.
inline Scenario scenario_from_json(const Json& j) {
    if (!j.is_object()) throw Error("scenario must be an object");
    static const std::set<std::string> known{"n",   "f",     "model",       "seed",      "rounds",    "delta",
                                             "gst", "batch", "payloadSize", "adversary", "byzantine", "record"};
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw Error("unknown key '" + key + "'");
    auto get = [&](const Json& obj, const char* key, auto fallback) {
        using T = decltype(fallback);
        if (!obj.contains(key)) return fallback;
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
            if (!obj.at(key).is_number_integer() || obj.at(key).template get<std::int64_t>() < 0) throw Error(std::string("'") + key + "' must be a non-negative integer");
        try {
            return obj.at(key).template get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(std::string("bad value for '") + key + "'");
        }
    };
    Scenario s;
    s.n = get(j, "n", s.n);
    s.f = get(j, "f", (s.n - 1) / 3);
    if (j.contains("model")) s.model = parse_model(get(j, "model", std::string{}));
    s.seed = get(j, "seed", s.seed);
    s.rounds = get(j, "rounds", s.rounds);
    s.delta = get(j, "delta", s.delta);
    s.gst = get(j, "gst", s.gst);
    s.batch = get(j, "batch", s.n);
    s.payload_size = get(j, "payloadSize", s.payload_size);
    s.record = get(j, "record", s.record);
    if (j.contains("adversary")) {
        const Json& a = j.at("adversary");
        if (!a.is_object()) throw Error("adversary must be an object");
        for (const auto& [key, value] : a.items())
            if (key != "kind" && key != "minDelay" && key != "maxDelay" && key != "slowDelay")
                throw Error("unknown adversary key '" + key + "'");
        s.adversary.kind = parse_adversary(get(a, "kind", std::string("none")));
        s.adversary.min_delay = get(a, "minDelay", s.adversary.min_delay);
        s.adversary.max_delay = get(a, "maxDelay", s.adversary.max_delay);
        s.adversary.slow_delay = get(a, "slowDelay", s.adversary.slow_delay);
    }
    if (j.contains("byzantine")) {
        if (!j.at("byzantine").is_array()) throw Error("byzantine must be a list");
        for (const Json& e : j.at("byzantine")) {
            if (!e.is_object()) throw Error("byzantine entries must be objects");
            ByzantineSpec b;
            if (e.contains("miner") && !(e.at("miner").is_string() && e.at("miner") == "random"))
                b.miner = get(e, "miner", std::uint32_t{0});
            b.behavior = parse_behavior(get(e, "behavior", std::string("silent")));
            b.round = get(e, "round", b.round);
            b.rate = get(e, "rate", b.rate);
            s.byzantine.push_back(b);
        }
    }
    s.validate();
    return s;
}

/// JSON-lines event log.  The first line is a header holding the scenario.
class Transcript {
public:
    explicit Transcript(bool enabled = true) : enabled_(enabled) {}

    bool enabled() const { return enabled_; }
    void add(const Json& j) {
        if (enabled_) lines_.push_back(j.dump());
    }
    const std::vector<std::string>& lines() const { return lines_; }

    std::string str() const {
        std::string out;
        for (const auto& l : lines_) {
            out += l;
            out += '\n';
        }
        return out;
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write " + path);
        f << str();
    }

private:
    bool enabled_;
    std::vector<std::string> lines_;
};

/// Chooses message delays.  The worst-case adversary slows the blocks that f
/// victims create in each leader round; it picks victims before the round's
/// coin exists and may only consult the coin through adversary_peek_guard.
class Adversary {
public:
    Adversary(const Scenario& s, const CoinOracle* coin, std::uint64_t seed)
        : policy_(s.adversary), n_(s.n), f_(s.f), gst_(s.gst),
          stride_(WaveParams::for_model(s.model).leader_stride), coin_(coin), rng_(seed) {}

    Tick delay(MinerId from, const std::vector<Round>& own_depths, Tick now, Transcript& log) {
        switch (policy_.kind) {
            case AdversaryKind::None: return 0;
            case AdversaryKind::RandomDelay: return uniform(policy_.min_delay, policy_.max_delay);
            case AdversaryKind::PreGst:
                if (now < gst_) return uniform(policy_.min_delay, std::max(policy_.slow_delay, policy_.max_delay));
                return uniform(policy_.min_delay, policy_.max_delay);
            case AdversaryKind::WorstCaseReorder:
                for (Round d : own_depths) {
                    if (d % stride_ != 0) continue;
                    if (victims(d, now, log).contains(from.value)) return policy_.slow_delay;
                }
                return uniform(policy_.min_delay, policy_.max_delay);
        }
        return 0;
    }

    const std::map<Round, std::set<std::uint32_t>>& victim_log() const { return victims_; }

private:
    Tick uniform(Tick lo, Tick hi) { return std::uniform_int_distribution<Tick>(lo, hi)(rng_); }

    const std::set<std::uint32_t>& victims(Round r, Tick now, Transcript& log) {
        auto it = victims_.find(r);
        if (it != victims_.end()) return it->second;
        bool peeked = coin_ && adversary_peek_guard(*coin_, r);
        log.add(Json{{"t", now}, {"ev", "adv-peek"}, {"round", r}, {"revealed", peeked}});
        std::vector<std::uint32_t> all(n_);
        for (std::uint32_t i = 0; i < n_; ++i) all[i] = i;
        std::shuffle(all.begin(), all.end(), rng_);
        std::set<std::uint32_t> chosen(all.begin(), all.begin() + f_);
        log.add(Json{{"t", now}, {"ev", "adversary"}, {"round", r}, {"victims", chosen}});
        return victims_.emplace(r, std::move(chosen)).first->second;
    }

    AdversaryPolicy policy_;
    std::uint32_t n_, f_;
    Tick gst_;
    Round stride_;
    const CoinOracle* coin_;
    std::mt19937_64 rng_;
    std::map<Round, std::set<std::uint32_t>> victims_;
};

struct Metrics {
    static constexpr int kSchema = 1;

    std::uint32_t n = 0, f = 0;
    Model model = Model::EventualSynchrony;
    std::uint64_t seed = 0;
    Round rounds = 0;
    /// Rounds from leader round to decision, both inclusive, for each leader
    /// round up to `rounds` that some correct miner decided directly.
    std::vector<Round> commit_latencies;
    /// Per leader round up to `rounds`: latency until the first directly
    /// decided leader at or after it.  Skipped rounds wait for a later one.
    std::vector<Round> slot_latencies;
    std::uint64_t messages_sent = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t blocks_delivered = 0;
    std::uint64_t payloads_delivered = 0;
    std::uint64_t waves_decided = 0;
    std::uint64_t waves_skipped = 0;
    std::uint64_t rejected_blocks = 0;
    std::uint64_t undecided_slots = 0;
    Round final_depth = 0;
    Tick duration = 0;
    bool drained = false;

    static double mean(const std::vector<Round>& v) {
        if (v.empty()) return 0;
        double s = 0;
        for (Round x : v) s += x;
        return s / static_cast<double>(v.size());
    }

    double bytes_per_payload() const {
        return payloads_delivered ? static_cast<double>(bytes_sent) / static_cast<double>(payloads_delivered) : 0;
    }

    Json to_json() const {
        return Json{{"schema", kSchema},
                    {"n", n},
                    {"f", f},
                    {"model", to_string(model)},
                    {"seed", seed},
                    {"rounds", rounds},
                    {"commitLatencies", commit_latencies},
                    {"meanCommitLatency", mean(commit_latencies)},
                    {"slotLatencies", slot_latencies},
                    {"meanSlotLatency", mean(slot_latencies)},
                    {"messagesSent", messages_sent},
                    {"bytesSent", bytes_sent},
                    {"blocksDelivered", blocks_delivered},
                    {"payloadsDelivered", payloads_delivered},
                    {"bytesPerPayload", bytes_per_payload()},
                    {"wavesDecided", waves_decided},
                    {"wavesSkipped", waves_skipped},
                    {"undecidedSlots", undecided_slots},
                    {"rejectedBlocks", rejected_blocks},
                    {"finalDepth", final_depth},
                    {"duration", duration},
                    {"drained", drained}};
    }
};

/// Runs one scenario.  Miners create payload blocks up to depth `rounds`,
/// then empty blocks, a wave at a time, until every correct block of depth
/// <= rounds is delivered by every correct miner and every leader round <=
/// rounds has a directly decided leader at or after it (at most 10 extra
/// waves).  Finally each correct miner sends every peer whatever it may be
/// missing and the queue runs dry.
class Simulation {
public:
    explicit Simulation(Scenario s)
        : sc_(std::move(s)), params_(WaveParams::for_model(sc_.model)), transcript_(sc_.record),
          keys_(sc_.n, prf64("cordial-keys", sc_.seed, 0)) {
        sc_.validate();
        if (sc_.model == Model::Asynchrony)
            coin_ = std::make_unique<CoinOracle>(sc_.n, sc_.f, params_.leader_stride,
                                                 prf64("cordial-coin-seed", sc_.seed, 0));
        adversary_ = std::make_unique<Adversary>(sc_, coin_.get(), prf64("cordial-adversary", sc_.seed, 0));

        std::vector<ByzantineProfile> profiles(sc_.n);
        std::mt19937_64 pick(prf64("cordial-byzantine", sc_.seed, 0));
        std::set<std::uint32_t> taken;
        for (const auto& b : sc_.byzantine)
            if (b.miner) taken.insert(*b.miner);
        for (const auto& b : sc_.byzantine) {
            std::uint32_t who;
            if (b.miner) {
                who = *b.miner;
            } else {
                std::vector<std::uint32_t> free;
                for (std::uint32_t i = 0; i < sc_.n; ++i)
                    if (!taken.contains(i)) free.push_back(i);
                who = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(pick)];
                taken.insert(who);
            }
            profiles[who] = {b.behavior, b.round, b.rate, prf64("cordial-byzantine-miner", sc_.seed, who)};
        }

        ProtocolConfig cfg{sc_.n, sc_.f, params_, sc_.delta, sc_.batch, sc_.payload_size};
        for (std::uint32_t i = 0; i < sc_.n; ++i)
            miners_.push_back(std::make_unique<Miner>(MinerId(i), cfg, keys_, coin_.get(), profiles[i]));
        delivered_count_.assign(sc_.n, 0);
        wake_at_.assign(sc_.n, std::nullopt);
    }

    const Scenario& scenario() const { return sc_; }
    const WaveParams& params() const { return params_; }
    const Miner& miner(std::uint32_t i) const { return *miners_.at(i); }
    std::uint32_t size() const { return sc_.n; }
    const Transcript& transcript() const { return transcript_; }
    const CoinOracle* coin() const { return coin_.get(); }
    const Metrics& metrics() const { return metrics_; }

    std::vector<std::uint32_t> correct_miners() const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t i = 0; i < sc_.n; ++i)
            if (miners_[i]->is_correct()) out.push_back(i);
        return out;
    }

    /// Leader function over every coin revealed so far (eventual synchrony:
    /// the fixed schedule).
    LeaderFn final_leader_fn() const {
        if (!coin_) return deterministic_leader_fn(sc_.n, params_.leader_stride);
        auto revealed = coin_->revealed_rounds();
        return [revealed](Round d) -> std::optional<MinerId> {
            auto it = revealed.find(d);
            if (it == revealed.end()) return std::nullopt;
            return it->second;
        };
    }

    const Metrics& run() {
        Json header{{"schema", 1}, {"ev", "header"}, {"scenario", to_json(sc_)}};
        for (std::uint32_t i = 0; i < sc_.n; ++i) header["behaviors"].push_back(to_string(miners_[i]->profile().behavior));
        transcript_.add(header);

        limit_ = sc_.rounds;
        for (std::uint32_t i = 0; i < sc_.n; ++i) act(i);
        const Round cap = sc_.rounds + 10 * params_.wave_length();
        while (true) {
            drain_queue(true);
            if (finished()) {
                metrics_.drained = true;
                break;
            }
            if (limit_ >= cap) break;
            limit_ = std::min(cap, limit_ + params_.wave_length());
            transcript_.add(Json{{"t", now_}, {"ev", "phase"}, {"phase", "drain"}, {"limit", limit_}});
            for (auto& m : miners_) m->set_payload_enabled(false);
            for (std::uint32_t i = 0; i < sc_.n; ++i) act(i);
        }

        transcript_.add(Json{{"t", now_}, {"ev", "phase"}, {"phase", "flush"}, {"limit", limit_}});
        for (std::uint32_t i : correct_miners()) {
            for (Outgoing& o : miners_[i]->flush()) send(i, std::move(o));
        }
        drain_queue(false);
        transcript_.add(Json{{"t", now_}, {"ev", "end"}});
        finish_metrics();
        return metrics_;
    }

private:
    struct Item {
        Tick time;
        std::uint64_t seq;
        bool wake;
        std::uint32_t to;
        std::uint32_t from;
        Package package;
    };
    struct Later {
        bool operator()(const Item& a, const Item& b) const {
            return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
        }
    };

    void drain_queue(bool stepping) {
        while (!queue_.empty()) {
            Item it = queue_.top();
            queue_.pop();
            now_ = it.time;
            if (it.wake) {
                if (wake_at_[it.to] != it.time) continue;
                wake_at_[it.to].reset();
            } else {
                transcript_.add(Json{{"t", now_}, {"ev", "recv"}, {"to", it.to}, {"from", it.from},
                                     {"blocks", it.package.blocks.size()}});
                handle(it.to, miners_[it.to]->on_receive(it.package));
            }
            if (stepping) act(it.to);
        }
    }

    /// Lets miner i create blocks while it may and stays within the limit.
    void act(std::uint32_t i) {
        Miner& m = *miners_[i];
        while (true) {
            auto r = m.can_proceed(now_);
            if (!r || *r + 1 > limit_) break;
            MinerEvents ev = m.step(now_);
            if (ev.created.empty()) break;
            handle(i, std::move(ev));
        }
        auto wake = m.wake_time(now_);
        if (wake && wake_at_[i] != wake) {
            auto r = m.store().cordial_round(m.id());
            if (r && *r + 1 <= limit_) {
                wake_at_[i] = wake;
                queue_.push(Item{*wake, seq_++, true, i, i, {}});
            }
        }
    }

    void handle(std::uint32_t i, MinerEvents&& ev) {
        Miner& m = *miners_[i];
        bool correct = m.is_correct();
        for (const Block& b : ev.created) {
            BlockId id = block_id(b);
            Round d = m.store().depth(id);
            transcript_.add(Json{{"t", now_}, {"ev", "block-create"}, {"miner", i}, {"id", id.hex()}, {"depth", d},
                                 {"wire", to_hex(wire_encode(b))}});
            if (correct) created_.push_back({id, d});
        }
        for (const BlockId& id : ev.accepted)
            transcript_.add(Json{{"t", now_}, {"ev", "accept"}, {"miner", i}, {"id", id.hex()}});
        for (const auto& [id, why] : ev.rejected) {
            transcript_.add(Json{{"t", now_}, {"ev", "reject"}, {"miner", i}, {"id", id.hex()}, {"reason", to_string(why)}});
            ++metrics_.rejected_blocks;
        }
        for (const Delivery& d : ev.delivered) {
            transcript_.add(Json{{"t", now_}, {"ev", "block-deliver"}, {"miner", i}, {"pos", delivered_count_[i]++},
                                 {"id", d.id.hex()}, {"leaderRound", d.leader_round}});
            if (correct) {
                ++metrics_.blocks_delivered;
                const Block& b = m.store().block(d.id);
                std::uint32_t item = std::max<std::uint32_t>(sc_.payload_size, 12);
                metrics_.payloads_delivered += b.payload.size() / item;
            }
        }
        for (const Decision& d : ev.decisions) {
            transcript_.add(Json{{"t", now_}, {"ev", "decide"}, {"miner", i}, {"leaderRound", d.leader_round},
                                 {"leader", d.leader.hex()}, {"triggerDepth", d.trigger_depth}, {"direct", d.direct}});
            if (correct && d.direct) {
                auto [it, fresh] = decided_.try_emplace(d.leader_round, d.trigger_depth);
                if (!fresh) it->second = std::min(it->second, d.trigger_depth);
            }
        }
        for (const CoinRequest& c : ev.coin_requests) {
            transcript_.add(Json{{"t", now_}, {"ev", "coin-request"}, {"miner", i}, {"round", c.round},
                                 {"revealed", c.revealed}});
            if (!c.revealed) continue;
            MinerId v = *coin_->revealed(c.round);
            transcript_.add(Json{{"t", now_}, {"ev", "coin-reveal"}, {"round", c.round}, {"leader", v.value}});
            for (std::uint32_t j = 0; j < sc_.n; ++j)
                if (j != i && miners_[j]->waiting_coins().contains(c.round)) handle(j, miners_[j]->learn_coin(c.round, v));
        }
        for (Outgoing& o : ev.sends) send(i, std::move(o));
    }

    void send(std::uint32_t from, Outgoing&& o) {
        const Miner& m = *miners_[from];
        std::size_t bytes = 8;
        std::vector<Round> own_depths;
        for (const Block& b : o.package.blocks) {
            bytes += wire_size(b);
            if (b.creator == m.id()) own_depths.push_back(m.store().depth(block_id(b)));
        }
        Tick at = now_ + adversary_->delay(m.id(), own_depths, now_, transcript_);
        if (m.is_correct()) {
            ++metrics_.messages_sent;
            metrics_.bytes_sent += bytes;
        }
        transcript_.add(Json{{"t", now_}, {"ev", "send"}, {"from", from}, {"to", o.to.value},
                             {"blocks", o.package.blocks.size()}, {"bytes", bytes}, {"at", at}});
        queue_.push(Item{at, seq_++, false, o.to.value, from, std::move(o.package)});
    }

    bool finished() const {
        auto correct = correct_miners();
        for (const auto& [id, d] : created_) {
            if (d > sc_.rounds) continue;
            for (std::uint32_t i : correct)
                if (!miners_[i]->log().delivered_set.contains(id)) return false;
        }
        Round last_slot = sc_.rounds - sc_.rounds % params_.leader_stride;
        if (last_slot == 0) return true;
        auto it = decided_.lower_bound(last_slot);
        return it != decided_.end();
    }

    void finish_metrics() {
        metrics_.n = sc_.n;
        metrics_.f = sc_.f;
        metrics_.model = sc_.model;
        metrics_.seed = sc_.seed;
        metrics_.rounds = sc_.rounds;
        metrics_.duration = now_;
        for (const auto& m : miners_) metrics_.final_depth = std::max(metrics_.final_depth, m->store().max_depth());
        for (Round s = params_.leader_stride; s <= sc_.rounds; s += params_.leader_stride) {
            if (auto d = decided_.find(s); d != decided_.end()) {
                metrics_.commit_latencies.push_back(d->second - s + 1);
                ++metrics_.waves_decided;
            } else {
                ++metrics_.waves_skipped;
            }
            auto next = decided_.lower_bound(s);
            if (next == decided_.end())
                ++metrics_.undecided_slots;
            else
                metrics_.slot_latencies.push_back(next->second - s + 1);
        }
    }

    Scenario sc_;
    WaveParams params_;
    Transcript transcript_;
    KeyRing keys_;
    std::unique_ptr<CoinOracle> coin_;
    std::unique_ptr<Adversary> adversary_;
    std::vector<std::unique_ptr<Miner>> miners_;

    std::priority_queue<Item, std::vector<Item>, Later> queue_;
    std::uint64_t seq_ = 0;
    Tick now_ = 0;
    Round limit_ = 0;
    std::vector<std::optional<Tick>> wake_at_;
    std::vector<std::uint64_t> delivered_count_;
    std::vector<std::pair<BlockId, Round>> created_;
    /// Leader round -> earliest trigger depth of a direct decision by a correct miner.
    std::map<Round, Round> decided_;
    Metrics metrics_;
};

}  // namespace cordial
