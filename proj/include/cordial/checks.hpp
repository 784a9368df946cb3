#pragma once

// Offline checkers over a recorded run.  A transcript is parsed back into the
// union blocklace, each miner's accepted set and output, the revealed coins
// and the adversary's audit trail; the checkers then work from that alone.

#include <istream>
#include <sstream>

#include "cordial/simnet.hpp"

namespace cordial {

struct RunRecord {
    Scenario scenario;
    std::vector<Behavior> behaviors;
    /// Every created block, in creation order.
    std::vector<Block> blocks;
    std::map<BlockId, Round> depth;
    std::map<BlockId, std::uint32_t> created_by;
    std::vector<std::vector<BlockId>> accepted;
    std::vector<std::vector<BlockId>> delivered;
    std::map<Round, MinerId> coins;
    /// Line number of each coin-reveal, by round.
    std::map<Round, std::size_t> reveal_line;
    struct Peek {
        std::size_t line;
        Round round;
        bool revealed;
    };
    std::vector<Peek> peeks;
    /// Line number of each victim choice, by round.
    std::map<Round, std::size_t> victim_line;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> in_flight;
    struct Late {
        std::size_t line;
        Tick sent, at;
    };
    std::vector<Late> deliveries;
    bool ended = false;

    bool is_correct(std::uint32_t i) const { return behaviors.at(i) == Behavior::Correct; }
    std::vector<std::uint32_t> correct() const {
        std::vector<std::uint32_t> out;
        for (std::uint32_t i = 0; i < behaviors.size(); ++i)
            if (is_correct(i)) out.push_back(i);
        return out;
    }
    WaveParams params() const { return WaveParams::for_model(scenario.model); }
    KeyRing keys() const { return KeyRing(scenario.n, prf64("cordial-keys", scenario.seed, 0)); }

    LeaderFn leader_fn() const {
        if (scenario.model == Model::EventualSynchrony)
            return deterministic_leader_fn(scenario.n, params().leader_stride);
        auto c = coins;
        return [c](Round d) -> std::optional<MinerId> {
            auto it = c.find(d);
            if (it == c.end()) return std::nullopt;
            return it->second;
        };
    }

    BlockStore union_store() const {
        BlockStore s(scenario.n, scenario.f, keys());
        for (const Block& b : blocks) s.insert(b);
        return s;
    }

    /// The blocklace miner i ended with.
    BlockStore store_of(std::uint32_t i) const {
        std::map<BlockId, const Block*> by_id;
        for (const Block& b : blocks) by_id[block_id(b)] = &b;
        std::set<BlockId> mine(accepted.at(i).begin(), accepted.at(i).end());
        BlockStore s(scenario.n, scenario.f, keys());
        for (const Block& b : blocks)
            if (mine.contains(block_id(b))) s.insert(b);
        return s;
    }

    Round max_depth() const {
        Round d = 0;
        for (const auto& [id, r] : depth) d = std::max(d, r);
        return d;
    }
};

/// Parses a JSON-lines transcript.  Errors name the offending line.
inline RunRecord parse_transcript(std::istream& in) {
    RunRecord rec;
    std::string text;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        auto fail = [&](const std::string& why) { throw Error("transcript line " + std::to_string(line) + ": " + why); };
        Json j;
        try {
            j = Json::parse(text);
        } catch (const nlohmann::json::exception&) {
            fail("not valid JSON");
        }
        try {
            const std::string ev = j.at("ev");
            if (!have_header) {
                if (ev != "header") fail("expected header");
                if (j.at("schema") != 1) fail("unsupported schema");
                rec.scenario = scenario_from_json(j.at("scenario"));
                for (const auto& b : j.at("behaviors")) rec.behaviors.push_back(parse_behavior(b));
                if (rec.behaviors.size() != rec.scenario.n) fail("behaviors do not match n");
                rec.accepted.resize(rec.scenario.n);
                rec.delivered.resize(rec.scenario.n);
                have_header = true;
                continue;
            }
            if (ev == "block-create") {
                Block b = wire_decode(from_hex(j.at("wire").get<std::string>()));
                BlockId id = block_id(b);
                if (id.hex() != j.at("id")) fail("block id does not match wire bytes");
                rec.depth[id] = j.at("depth");
                rec.created_by[id] = j.at("miner");
                rec.blocks.push_back(std::move(b));
            } else if (ev == "accept") {
                rec.accepted.at(j.at("miner")).push_back(BlockId::from_hex(j.at("id").get<std::string>()));
            } else if (ev == "block-deliver") {
                auto& log = rec.delivered.at(j.at("miner"));
                if (j.at("pos") != log.size()) fail("delivery position out of sequence");
                log.push_back(BlockId::from_hex(j.at("id").get<std::string>()));
            } else if (ev == "coin-reveal") {
                Round r = j.at("round");
                rec.coins[r] = MinerId(j.at("leader").get<std::uint32_t>());
                rec.reveal_line.emplace(r, line);
            } else if (ev == "adv-peek") {
                rec.peeks.push_back({line, j.at("round"), j.at("revealed")});
            } else if (ev == "adversary") {
                rec.victim_line.emplace(j.at("round"), line);
            } else if (ev == "send") {
                ++rec.in_flight[{j.at("from"), j.at("to")}];
                rec.deliveries.push_back({line, j.at("t"), j.at("at")});
            } else if (ev == "recv") {
                --rec.in_flight[{j.at("from"), j.at("to")}];
            } else if (ev == "end") {
                rec.ended = true;
            }
        } catch (const Error& e) {
            if (std::string(e.what()).starts_with("transcript line")) throw;
            fail(e.what());
        } catch (const std::exception& e) {
            fail(std::string("malformed event: ") + e.what());
        }
    }
    if (!have_header) throw Error("empty transcript");
    return rec;
}

inline RunRecord parse_transcript(const std::string& text) {
    std::istringstream in(text);
    return parse_transcript(in);
}

struct CheckResult {
    enum class Status { Pass, Fail, NotApplicable };
    std::string name;
    Status status = Status::Pass;
    std::string detail;
    Json data = Json::object();

    CheckResult(std::string n, Status s = Status::Pass, std::string d = {})
        : name(std::move(n)), status(s), detail(std::move(d)) {}

    bool failed() const { return status == Status::Fail; }
};

inline const char* to_string(CheckResult::Status s) {
    switch (s) {
        case CheckResult::Status::Pass: return "pass";
        case CheckResult::Status::Fail: return "fail";
        case CheckResult::Status::NotApplicable: return "not-applicable";
    }
    return "?";
}

struct Verdict {
    std::vector<CheckResult> results;

    bool ok() const {
        return std::none_of(results.begin(), results.end(), [](const CheckResult& r) { return r.failed(); });
    }
    const CheckResult* find(const std::string& name) const {
        for (const auto& r : results)
            if (r.name == name) return &r;
        return nullptr;
    }
    Json to_json() const {
        Json checks = Json::array();
        for (const auto& r : results) {
            Json c{{"name", r.name}, {"status", to_string(r.status)}};
            if (!r.detail.empty()) c["detail"] = r.detail;
            if (!r.data.empty()) c["data"] = r.data;
            checks.push_back(c);
        }
        return Json{{"schema", 1}, {"ok", ok()}, {"checks", checks}};
    }
};

/// Correct miners' outputs are pairwise prefix-consistent.
inline CheckResult check_safety(const RunRecord& rec) {
    CheckResult res{"safety"};
    auto correct = rec.correct();
    for (std::size_t a = 0; a < correct.size(); ++a) {
        for (std::size_t b = a + 1; b < correct.size(); ++b) {
            const auto& x = rec.delivered[correct[a]];
            const auto& y = rec.delivered[correct[b]];
            std::size_t common = std::min(x.size(), y.size());
            for (std::size_t k = 0; k < common; ++k) {
                if (x[k] == y[k]) continue;
                res.status = CheckResult::Status::Fail;
                res.detail = "miners " + std::to_string(correct[a]) + " and " + std::to_string(correct[b]) +
                             " diverge at position " + std::to_string(k);
                res.data = {{"miners", {correct[a], correct[b]}}, {"position", k}};
                return res;
            }
        }
    }
    return res;
}

/// No correct miner delivers both blocks of an equivocation; reports how
/// many equivocating blocks each correct miner suppressed.
inline CheckResult check_equivocations(const RunRecord& rec) {
    CheckResult res{"equivocations"};
    std::map<std::pair<std::uint32_t, Round>, std::vector<BlockId>> slots;
    for (const Block& b : rec.blocks) {
        BlockId id = block_id(b);
        slots[{b.creator.value, rec.depth.at(id)}].push_back(id);
    }
    std::size_t pairs = 0;
    Json suppressed = Json::object();
    for (std::uint32_t i : rec.correct()) {
        std::set<BlockId> out(rec.delivered[i].begin(), rec.delivered[i].end());
        std::size_t dropped = 0;
        for (const auto& [slot, ids] : slots) {
            if (ids.size() < 2) continue;
            std::size_t hit = 0;
            for (const BlockId& id : ids) hit += out.contains(id);
            dropped += ids.size() - hit;
            if (hit > 1) {
                res.status = CheckResult::Status::Fail;
                res.detail = "miner " + std::to_string(i) + " delivered two blocks of miner " +
                             std::to_string(slot.first) + " at depth " + std::to_string(slot.second);
                return res;
            }
        }
        suppressed[std::to_string(i)] = dropped;
    }
    for (const auto& [slot, ids] : slots)
        if (ids.size() > 1) ++pairs;
    res.data = {{"equivocatingSlots", pairs}, {"undelivered", suppressed}};
    return res;
}

/// Every block of depth <= horizon - 2 * wave length created by a miner that
/// did not equivocate or go silent is delivered by every correct miner.
inline CheckResult check_liveness(const RunRecord& rec, std::optional<Round> horizon = std::nullopt) {
    CheckResult res{"liveness"};
    const Round h = horizon.value_or(rec.max_depth());
    const Round wave = rec.params().wave_length();
    if (h <= 2 * wave) {
        res.status = CheckResult::Status::NotApplicable;
        res.detail = "horizon too short";
        return res;
    }
    const Round cutoff = h - 2 * wave;
    std::vector<std::set<BlockId>> out;
    for (const auto& log : rec.delivered) out.emplace_back(log.begin(), log.end());
    std::size_t required = 0, missing = 0;
    Json examples = Json::array();
    for (const Block& b : rec.blocks) {
        BlockId id = block_id(b);
        Behavior who = rec.behaviors.at(b.creator.value);
        if (rec.depth.at(id) > cutoff || (who != Behavior::Correct && who != Behavior::Crash)) continue;
        ++required;
        for (std::uint32_t i : rec.correct()) {
            if (out[i].contains(id)) continue;
            ++missing;
            if (examples.size() < 5)
                examples.push_back({{"miner", i}, {"block", id.hex()}, {"depth", rec.depth.at(id)}});
        }
    }
    res.data = {{"horizon", h}, {"cutoff", cutoff}, {"required", required}, {"missing", missing}};
    if (missing) {
        res.status = CheckResult::Status::Fail;
        res.detail = std::to_string(missing) + " required deliveries missing";
        res.data["examples"] = examples;
    }
    return res;
}

/// At quiescence every correct miner holds the same blocks.
inline CheckResult check_dissemination(const RunRecord& rec) {
    CheckResult res{"dissemination"};
    auto correct = rec.correct();
    if (correct.empty()) return res;
    std::set<BlockId> first(rec.accepted[correct[0]].begin(), rec.accepted[correct[0]].end());
    for (std::uint32_t i : correct) {
        std::set<BlockId> mine(rec.accepted[i].begin(), rec.accepted[i].end());
        if (mine == first) continue;
        res.status = CheckResult::Status::Fail;
        res.detail = "miners " + std::to_string(correct[0]) + " and " + std::to_string(i) + " hold " +
                     std::to_string(first.size()) + " and " + std::to_string(mine.size()) + " blocks";
        return res;
    }
    res.data = {{"blocks", first.size()}};
    return res;
}

/// Some 2f+1 blocks of depth r+5 all acknowledge a common set of depth-(r+2)
/// blocks from 2f+1 creators.  Checked on the union blocklace.
inline CheckResult check_common_core(const RunRecord& rec, const BlockStore& lace, Round r) {
    CheckResult res{"common-core@" + std::to_string(r)};
    const auto& top = lace.at_depth(r + 5);
    CreatorMask m = 0;
    for (Index i : top) m |= creator_bit(lace.creator_at(i));
    if (count_creators(m) < static_cast<int>(lace.supermajority())) {
        res.status = CheckResult::Status::NotApplicable;
        res.detail = "round " + std::to_string(r + 5) + " incomplete";
        return res;
    }
    (void)rec;
    detail::QuorumSearch search(lace, lace.at_depth(r + 2), top);
    if (!search.find(std::nullopt)) {
        res.status = CheckResult::Status::Fail;
        res.detail = "no common core between depths " + std::to_string(r + 2) + " and " + std::to_string(r + 5);
    }
    return res;
}

/// Each correct miner's incremental output equals the reference τ of the
/// blocklace it ended with.
inline CheckResult check_tau_oracle(const RunRecord& rec) {
    CheckResult res{"tau-oracle"};
    LeaderFn leader = rec.leader_fn();
    for (std::uint32_t i : rec.correct()) {
        BlockStore s = rec.store_of(i);
        auto expected = tau_oracle(s, rec.params(), leader);
        if (expected == rec.delivered[i]) continue;
        std::size_t k = 0;
        while (k < expected.size() && k < rec.delivered[i].size() && expected[k] == rec.delivered[i][k]) ++k;
        res.status = CheckResult::Status::Fail;
        res.detail = "miner " + std::to_string(i) + " differs from the reference at position " + std::to_string(k);
        res.data = {{"miner", i}, {"position", k}, {"delivered", rec.delivered[i].size()}, {"reference", expected.size()}};
        return res;
    }
    return res;
}

/// The adversary never saw a coin before it was revealed, and chose each
/// round's victims before that round's coin existed.
inline CheckResult check_coin_blindness(const RunRecord& rec) {
    CheckResult res{"coin-blindness"};
    if (rec.scenario.model != Model::Asynchrony) {
        res.status = CheckResult::Status::NotApplicable;
        return res;
    }
    for (const auto& p : rec.peeks) {
        auto rv = rec.reveal_line.find(p.round);
        bool revealed_before = rv != rec.reveal_line.end() && rv->second < p.line;
        if (p.revealed && !revealed_before) {
            res.status = CheckResult::Status::Fail;
            res.detail = "adversary saw coin of round " + std::to_string(p.round) + " before it was revealed";
            return res;
        }
    }
    std::size_t blind = 0, late = 0;
    for (const auto& [r, line] : rec.victim_line) {
        auto rv = rec.reveal_line.find(r);
        if (rv == rec.reveal_line.end() || line < rv->second)
            ++blind;
        else
            ++late;
    }
    res.data = {{"peeks", rec.peeks.size()}, {"blindChoices", blind}, {"postRevealChoices", late}};
    return res;
}

/// Every send was received; after GST, eventual-synchrony delays stay within
/// the configured bound unless the adversary is the worst-case one.
inline CheckResult check_network(const RunRecord& rec) {
    CheckResult res{"network"};
    for (const auto& [pair, pending] : rec.in_flight) {
        if (pending == 0) continue;
        res.status = CheckResult::Status::Fail;
        res.detail = std::to_string(pending) + " packages from " + std::to_string(pair.first) + " to " +
                     std::to_string(pair.second) + " never received";
        return res;
    }
    const auto& a = rec.scenario.adversary;
    if (rec.scenario.model == Model::EventualSynchrony && a.kind != AdversaryKind::WorstCaseReorder) {
        for (const auto& d : rec.deliveries) {
            if (d.sent < rec.scenario.gst || d.at - d.sent <= a.max_delay) continue;
            res.status = CheckResult::Status::Fail;
            res.detail = "delay bound exceeded after GST at line " + std::to_string(d.line);
            return res;
        }
    }
    return res;
}

/// Runs every checker.  The common core is checked at each leader round of
/// an asynchronous run.
inline Verdict check_all(const RunRecord& rec, std::optional<Round> horizon = std::nullopt) {
    Verdict v;
    v.results.push_back(check_safety(rec));
    v.results.push_back(check_equivocations(rec));
    v.results.push_back(check_liveness(rec, horizon));
    v.results.push_back(check_dissemination(rec));
    v.results.push_back(check_tau_oracle(rec));
    v.results.push_back(check_coin_blindness(rec));
    v.results.push_back(check_network(rec));
    if (rec.scenario.model == Model::Asynchrony) {
        BlockStore lace = rec.union_store();
        const Round stride = rec.params().leader_stride;
        CheckResult core{"common-core"};
        std::size_t checked = 0;
        for (Round r = stride; r + 5 <= lace.max_depth(); r += stride) {
            auto one = check_common_core(rec, lace, r);
            if (one.status == CheckResult::Status::NotApplicable) continue;
            ++checked;
            if (one.failed()) {
                core = one;
                core.name = "common-core";
                break;
            }
        }
        if (!core.failed() && checked == 0) core.status = CheckResult::Status::NotApplicable;
        core.data["roundsChecked"] = checked;
        v.results.push_back(core);
    }
    if (!rec.ended) v.results.push_back({"complete", CheckResult::Status::Fail, "transcript has no end event"});
    return v;
}

}  // namespace cordial
