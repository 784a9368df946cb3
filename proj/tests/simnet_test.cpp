#include <gtest/gtest.h>

#include "cordial/cordial.hpp"
#include "fixtures.hpp"

using namespace cordial;

namespace {

Scenario es(Round rounds = 40) {
    Scenario s;
    s.rounds = rounds;
    return s;
}

Scenario async(Round rounds = 60) {
    Scenario s;
    s.model = Model::Asynchrony;
    s.rounds = rounds;
    s.adversary.kind = AdversaryKind::RandomDelay;
    return s;
}

std::string run_transcript(const Scenario& s) {
    Simulation sim(s);
    sim.run();
    return sim.transcript().str();
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

CheckResult::Status status_of(const Verdict& v, const std::string& name) {
    const CheckResult* r = v.find(name);
    EXPECT_NE(r, nullptr) << name;
    return r ? r->status : CheckResult::Status::Fail;
}

}  // namespace

TEST(Simulation, EventualSynchronyGoodCaseDecidesEveryLeaderInThreeRounds) {
    Simulation sim(es(40));
    const Metrics& m = sim.run();
    EXPECT_EQ(m.waves_decided, 20u);
    EXPECT_EQ(m.waves_skipped, 0u);
    ASSERT_EQ(m.commit_latencies.size(), 20u);
    for (Round l : m.commit_latencies) EXPECT_EQ(l, 3u);
    EXPECT_TRUE(m.drained);
}

TEST(Simulation, AsynchronyGoodCaseTakesSixRounds) {
    Simulation sim(async(60));
    const Metrics& m = sim.run();
    EXPECT_EQ(m.waves_decided, 10u);
    for (Round l : m.commit_latencies) EXPECT_EQ(l, 6u);
}

TEST(Simulation, CrashedMinerDoesNotStopTheOthers) {
    Scenario s = es(20);
    s.adversary.kind = AdversaryKind::RandomDelay;
    s.byzantine.push_back({1u, Behavior::Crash, 5, 0});
    Simulation sim(s);
    const Metrics& m = sim.run();
    EXPECT_EQ(m.undecided_slots, 0u);
    Verdict v = check_all(parse_transcript(sim.transcript().str()));
    EXPECT_TRUE(v.ok()) << v.to_json().dump();
    // blocks the crashed miner made before crashing are required and delivered
    EXPECT_GT(v.find("liveness")->data["required"].get<int>(), 0);
}

TEST(Simulation, SameScenarioSameBytes) {
    Scenario s = async(30);
    s.adversary.kind = AdversaryKind::WorstCaseReorder;
    s.byzantine.push_back({std::nullopt, Behavior::Equivocate, 0, 0.5});
    std::string a = run_transcript(s), b = run_transcript(s);
    EXPECT_EQ(a, b);
    s.seed = 2;
    EXPECT_NE(a, run_transcript(s));
}

TEST(Simulation, TranscriptStartsWithHeaderAndEnds) {
    auto lines = split_lines(run_transcript(es(6)));
    ASSERT_GT(lines.size(), 2u);
    Json head = Json::parse(lines.front());
    EXPECT_EQ(head["ev"], "header");
    EXPECT_EQ(head["schema"], 1);
    EXPECT_EQ(head["scenario"]["n"], 4);
    EXPECT_EQ(Json::parse(lines.back())["ev"], "end");
}

TEST(Simulation, TooManyByzantineMinersRejected) {
    Scenario s = es(10);
    s.byzantine = {{std::nullopt, Behavior::Silent, 0, 0}, {std::nullopt, Behavior::Silent, 0, 0}};
    EXPECT_THROW(Simulation{s}, Error);
    s.byzantine.clear();
    s.f = 2;
    EXPECT_THROW(Simulation{s}, Error);
}

TEST(ScenarioJson, RoundTripAndDefaults) {
    Scenario s = async(33);
    s.n = 7;
    s.f = 2;
    s.byzantine.push_back({3u, Behavior::Crash, 7, 0.5});
    s.byzantine.push_back({std::nullopt, Behavior::Equivocate, 0, 0.25});
    Scenario t = scenario_from_json(to_json(s));
    EXPECT_EQ(to_json(t), to_json(s));

    Scenario d = scenario_from_json(Json{{"n", 10}});
    EXPECT_EQ(d.f, 3u);
    EXPECT_EQ(d.batch, 10u);
    EXPECT_THROW(scenario_from_json(Json{{"n", 4}, {"colour", 1}}), Error);
    EXPECT_THROW(scenario_from_json(Json{{"n", -4}}), Error);
    EXPECT_THROW(scenario_from_json(Json{{"n", 4}, {"f", 2}}), Error);
    EXPECT_THROW(scenario_from_json(Json{{"adversary", {{"kind", "polite"}}}}), Error);
}

TEST(Checks, FaultFreeRunPasses) {
    Verdict v = check_all(parse_transcript(run_transcript(async(30))));
    EXPECT_TRUE(v.ok()) << v.to_json().dump();
    EXPECT_EQ(status_of(v, "common-core"), CheckResult::Status::Pass);
    EXPECT_GT(v.find("common-core")->data["roundsChecked"].get<int>(), 0);
    EXPECT_EQ(status_of(v, "coin-blindness"), CheckResult::Status::Pass);
}

TEST(Checks, SwappedDeliveriesBreakSafetyAtThatPosition) {
    auto lines = split_lines(run_transcript(es(10)));
    // swap the ids of miner 2's deliveries at positions 3 and 4
    std::size_t a = 0, b = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        Json j = Json::parse(lines[i]);
        if (j["ev"] != "block-deliver" || j["miner"] != 2) continue;
        if (j["pos"] == 3) a = i;
        if (j["pos"] == 4) b = i;
    }
    ASSERT_TRUE(a && b);
    Json ja = Json::parse(lines[a]), jb = Json::parse(lines[b]);
    std::swap(ja["id"], jb["id"]);
    lines[a] = ja.dump();
    lines[b] = jb.dump();
    Verdict v = check_all(parse_transcript(join_lines(lines)));
    EXPECT_FALSE(v.ok());
    const CheckResult* s = v.find("safety");
    ASSERT_EQ(s->status, CheckResult::Status::Fail);
    EXPECT_EQ(s->data["position"], 3);
    EXPECT_EQ(status_of(v, "tau-oracle"), CheckResult::Status::Fail);
}

TEST(Checks, CorruptTranscriptNamesTheLine) {
    auto lines = split_lines(run_transcript(es(4)));
    lines[5] = "{\"ev\": \"block-create\", \"wire\": \"zz\"";
    try {
        parse_transcript(join_lines(lines));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_transcript(std::string{}), Error);
}

TEST(Checks, EquivocatorRunPassesAndReportsSuppression) {
    Scenario s = es(20);
    s.adversary.kind = AdversaryKind::RandomDelay;
    s.byzantine.push_back({0u, Behavior::Equivocate, 0, 1.0});
    Verdict v = check_all(parse_transcript(run_transcript(s)));
    EXPECT_TRUE(v.ok()) << v.to_json().dump();
    const CheckResult* e = v.find("equivocations");
    EXPECT_GT(e->data["equivocatingSlots"].get<int>(), 0);
    EXPECT_GT(e->data["undelivered"]["1"].get<int>(), 0);
}

TEST(Checks, CommonCoreNotApplicableBeforeRoundCompletes) {
    RunRecord rec = parse_transcript(run_transcript(async(12)));
    BlockStore lace = rec.union_store();
    Round deep = lace.max_depth();
    EXPECT_EQ(check_common_core(rec, lace, deep).status, CheckResult::Status::NotApplicable);
    EXPECT_EQ(check_common_core(rec, lace, 6).status, CheckResult::Status::Pass);
}

TEST(Checks, PeekAtUnrevealedCoinIsCaught) {
    Scenario s = async(24);
    s.adversary.kind = AdversaryKind::WorstCaseReorder;
    auto lines = split_lines(run_transcript(s));
    lines.insert(lines.begin() + 1, Json{{"t", 0}, {"ev", "adv-peek"}, {"round", 12}, {"revealed", true}}.dump());
    Verdict v = check_all(parse_transcript(join_lines(lines)));
    EXPECT_EQ(status_of(v, "coin-blindness"), CheckResult::Status::Fail);
}

TEST(Checks, LostPackageIsCaught) {
    auto lines = split_lines(run_transcript(es(6)));
    auto it = std::find_if(lines.begin(), lines.end(), [](const std::string& l) { return Json::parse(l)["ev"] == "recv"; });
    ASSERT_NE(it, lines.end());
    lines.erase(it);
    Verdict v = check_all(parse_transcript(join_lines(lines)));
    EXPECT_EQ(status_of(v, "network"), CheckResult::Status::Fail);
}

TEST(Checks, MissingDeliveryFailsLiveness) {
    auto lines = split_lines(run_transcript(es(12)));
    // drop miner 1's last delivery
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        Json j = Json::parse(*it);
        if (j["ev"] == "block-deliver" && j["miner"] == 1) {
            lines.erase(std::next(it).base());
            break;
        }
    }
    Verdict v = check_all(parse_transcript(join_lines(lines)), Round{40});
    EXPECT_EQ(status_of(v, "liveness"), CheckResult::Status::Fail);
}

TEST(Dot, EmptyFullAndForked) {
    fixtures::FullRounds f1(4, 4);
    BlockStore s = f1.store(1, 4);
    LeaderFn lead = deterministic_leader_fn(4, 2);
    std::string g = to_dot(s, lead, 4);
    auto count = [](const std::string& text, const std::string& what) {
        std::size_t c = 0;
        for (std::size_t at = text.find(what); at != std::string::npos; at = text.find(what, at + 1)) ++c;
        return c;
    };
    EXPECT_EQ(count(g, "label="), 16u);
    EXPECT_EQ(count(g, " -> "), 48u);
    EXPECT_EQ(count(g, "fillcolor=gold"), 2u);
    EXPECT_NE(g.find("label=\"1@2\""), std::string::npos);
    EXPECT_EQ(count(to_dot(s, lead, 0), "label="), 0u);
    EXPECT_THROW(to_dot(s, lead, 5), Error);

    BlockStore forked(4, 1, f1.keys);
    forked.insert(make_block(MinerId(2), fixtures::text("x"), {}, f1.keys));
    forked.insert(make_block(MinerId(2), fixtures::text("y"), {}, f1.keys));
    EXPECT_EQ(count(to_dot(forked, lead, 1), "peripheries=2"), 2u);
}

TEST(Config, LineNumbersInErrors) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("{\n  \"scenario\": {\n    \"n\": 4,\n    \"rounds\": 0\n  }\n}"), 4u);
    EXPECT_EQ(line_of("{\n  \"scenario\": {\n    \"n\": 4,,\n  }\n}"), 3u);
    EXPECT_EQ(line_of("{\n  \"scenario\": {},\n  \"outputs\": {}\n}"), 3u);
    EXPECT_EQ(line_of("{\n  \"sweep\": {\n    \"n\": 4\n  }\n}"), 3u);
    EXPECT_EQ(line_of("{\"scenario\": {\"n\": 4}}"), 0u);
}

TEST(Config, SweepExpandsAxesAndKeepsGoing) {
    RunConfig cfg = parse_config(R"({"scenario": {"rounds": 6},
        "sweep": {"n": [4, 7], "model": ["eventual-synchrony", "asynchrony"], "f": [1, 3], "seeds": 2},
        "workers": 3})");
    auto points = sweep_points(cfg);
    ASSERT_EQ(points.size(), 8u);
    std::size_t bad = 0;
    for (const auto& p : points) bad += !p.error.empty();
    EXPECT_EQ(bad, 4u);  // f = 3 is invalid for both n
    auto rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 16u);
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_TRUE(std::tie(rows[i - 1].point, rows[i - 1].seed) < std::tie(rows[i].point, rows[i].seed));
    std::string csv = sweep_csv(cfg, rows);
    auto lines = split_lines(csv);
    EXPECT_EQ(lines.size(), 1u + 16u + 8u);
    std::size_t errors = 0, aggregates = 0;
    for (const auto& l : lines) {
        errors += l.find(",error,") != std::string::npos;
        aggregates += l.find(",all,") != std::string::npos;
    }
    EXPECT_EQ(errors, 8u);
    EXPECT_EQ(aggregates, 8u);
}

TEST(Config, BatchFollowsN) {
    RunConfig cfg = parse_config(R"({"sweep": {"n": [4, 10]}})");
    auto points = sweep_points(cfg);
    ASSERT_EQ(points.size(), 2u);
    EXPECT_EQ(scenario_from_json(points[1].scenario).batch, 10u);
    EXPECT_EQ(scenario_from_json(points[1].scenario).f, 3u);
}
