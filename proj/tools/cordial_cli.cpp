// cordial-cli: run scenarios, sweep them, check transcripts, draw blocklaces.
//
// Exit codes: 0 success (all checks pass), 1 a check failed, 2 bad input.
// CORDIAL_LOG=quiet|info|debug sets how much goes to stderr (default info).

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "cordial/cordial.hpp"

using namespace cordial;

namespace {

enum class Level { Quiet, Info, Debug };

Level log_level() {
    const char* v = std::getenv("CORDIAL_LOG");
    if (!v) return Level::Info;
    std::string s(v);
    if (s == "quiet") return Level::Quiet;
    if (s == "debug") return Level::Debug;
    return Level::Info;
}

void info(const std::string& msg) {
    if (log_level() != Level::Quiet) std::cerr << msg << '\n';
}

void debug(const std::string& msg) {
    if (log_level() == Level::Debug) std::cerr << msg << '\n';
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << text;
}

Json deliveries_json(const Simulation& sim) {
    Json miners = Json::array();
    for (std::uint32_t i = 0; i < sim.size(); ++i) {
        const Miner& m = sim.miner(i);
        Json delivered = Json::array(), suppressed = Json::array(), leaders = Json::array();
        for (const BlockId& id : m.log().delivered) delivered.push_back(id.hex());
        for (const BlockId& id : m.log().suppressed) suppressed.push_back(id.hex());
        for (const BlockId& id : m.log().final_leaders) leaders.push_back(id.hex());
        miners.push_back({{"miner", i},
                          {"behavior", to_string(m.profile().behavior)},
                          {"delivered", delivered},
                          {"suppressed", suppressed},
                          {"finalLeaders", leaders}});
    }
    return Json{{"schema", 1}, {"miners", miners}};
}

int cmd_run(const std::string& path, OutputPaths over) {
    RunConfig cfg = load_config(path);
    if (!over.transcript.empty()) cfg.output.transcript = over.transcript;
    if (!over.metrics.empty()) cfg.output.metrics = over.metrics;
    if (!over.deliveries.empty()) cfg.output.deliveries = over.deliveries;
    Scenario s = cfg.scenario;
    s.record = true;
    debug("scenario " + to_json(s).dump());

    Simulation sim(s);
    const Metrics& m = sim.run();
    std::string metrics = m.to_json().dump(2) + "\n";
    if (cfg.output.metrics.empty())
        std::cout << metrics;
    else
        write_file(cfg.output.metrics, metrics);
    if (!cfg.output.transcript.empty()) sim.transcript().write(cfg.output.transcript);
    if (!cfg.output.deliveries.empty()) write_file(cfg.output.deliveries, deliveries_json(sim).dump(2) + "\n");

    Verdict v = check_all(parse_transcript(sim.transcript().str()));
    for (const auto& r : v.results)
        if (r.failed()) info("check " + r.name + " failed: " + r.detail);
    info("mean commit latency " + std::to_string(Metrics::mean(m.commit_latencies)) + " rounds, " +
         std::to_string(m.waves_decided) + " waves decided, " + std::to_string(m.waves_skipped) + " skipped");
    return v.ok() ? 0 : 1;
}

int cmd_sweep(const std::string& path, const std::string& out, unsigned workers) {
    RunConfig cfg = load_config(path);
    if (workers) cfg.workers = workers;
    auto rows = run_sweep(cfg);
    std::size_t failed = 0;
    for (const auto& r : rows)
        if (!r.error.empty()) ++failed;
    std::string csv = sweep_csv(cfg, rows);
    if (out.empty())
        std::cout << csv;
    else
        write_file(out, csv);
    info(std::to_string(rows.size()) + " runs, " + std::to_string(failed) + " failed");
    return 0;
}

int cmd_check(const std::vector<std::string>& paths, std::optional<Round> horizon) {
    Json reports = Json::array();
    bool ok = true;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot read " + path);
        RunRecord rec;
        try {
            rec = parse_transcript(in);
        } catch (const Error& e) {
            throw Error(path + ": " + e.what());
        }
        Verdict v = check_all(rec, horizon);
        ok = ok && v.ok();
        Json r = v.to_json();
        r["path"] = path;
        reports.push_back(r);
    }
    std::cout << Json{{"schema", 1}, {"ok", ok}, {"transcripts", reports}}.dump(2) << '\n';
    return ok ? 0 : 1;
}

int cmd_trace(const std::string& path, Round round) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    RunRecord rec = parse_transcript(in);
    std::cout << to_dot(rec.union_store(), rec.leader_fn(), round);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cordial Miners simulator and checker"};
    app.require_subcommand(1);

    std::string config, out;
    OutputPaths over;
    unsigned workers = 0;
    std::vector<std::string> paths;
    std::optional<Round> horizon;
    Round round = 0;

    auto* run = app.add_subcommand("run", "Run one scenario; exit 1 if any check fails");
    run->add_option("config", config, "JSON config file")->required();
    run->add_option("--transcript", over.transcript, "Write the JSON-lines transcript here");
    run->add_option("--metrics", over.metrics, "Write metrics JSON here (default: stdout)");
    run->add_option("--deliveries", over.deliveries, "Write per-miner delivery logs here");

    auto* sweep = app.add_subcommand("sweep", "Run every sweep point and seed; CSV out");
    sweep->add_option("config", config, "JSON config file")->required();
    sweep->add_option("-o,--out", out, "CSV path (default: stdout)");
    sweep->add_option("-j,--workers", workers, "Parallel runs");

    auto* check = app.add_subcommand("check", "Check recorded transcripts; verdict JSON out");
    check->add_option("transcripts", paths, "Transcript files")->required();
    check->add_option("--horizon", horizon, "Liveness horizon in rounds (default: deepest block)");

    auto* trace = app.add_subcommand("trace", "Render the blocklace of a transcript as DOT");
    trace->add_option("transcript", config, "Transcript file")->required();
    trace->add_option("--round", round, "Deepest round to draw")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(config, over);
        if (*sweep) return cmd_sweep(config, out, workers);
        if (*check) return cmd_check(paths, horizon);
        if (*trace) return cmd_trace(config, round);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
