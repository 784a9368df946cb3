#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct Result {
    int code;
    std::string out;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("cordial-cli-" + std::to_string(::getpid()) + "-" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
        return path(name);
    }

    static std::string read(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    /// Runs the CLI with stderr discarded unless `env` asks otherwise.
    Result cli(const std::string& args, const std::string& env = "CORDIAL_LOG=quiet") const {
        std::string cmd = env + " " + CORDIAL_CLI_PATH + " " + args + " 2>" + path("stderr.txt");
        Result r{0, {}};
        FILE* pipe = ::popen(cmd.c_str(), "r");
        char buf[4096];
        for (std::size_t got; (got = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, got);
        int status = ::pclose(pipe);
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        return r;
    }

    std::string stderr_text() const { return read(path("stderr.txt")); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunDefaultEventualSynchrony) {
    std::string cfg = write("es.json", R"({"scenario": {"rounds": 20}})");
    Result r = cli("run " + cfg);
    ASSERT_EQ(r.code, 0) << stderr_text();
    Json m = Json::parse(r.out);
    EXPECT_EQ(m["schema"], 1);
    EXPECT_DOUBLE_EQ(m["meanCommitLatency"].get<double>(), 3.0);
    EXPECT_EQ(m["wavesDecided"], 10);
}

TEST_F(Cli, RunAsynchronyBenignDelays) {
    std::string cfg =
        write("a.json", R"({"scenario": {"model": "asynchrony", "rounds": 60, "adversary": {"kind": "random-delay"}}})");
    Result r = cli("run " + cfg);
    ASSERT_EQ(r.code, 0) << stderr_text();
    EXPECT_DOUBLE_EQ(Json::parse(r.out)["meanCommitLatency"].get<double>(), 6.0);
}

TEST_F(Cli, RunTwiceSameBytes) {
    std::string cfg = write("c.json", R"({"scenario": {"rounds": 12, "adversary": {"kind": "random-delay"},
        "byzantine": [{"behavior": "equivocate", "rate": 0.5}]}})");
    for (const char* k : {"1", "2"}) {
        Result r = cli("run " + cfg + " --transcript " + path(std::string("t") + k) + " --metrics " +
                       path(std::string("m") + k) + " --deliveries " + path(std::string("d") + k));
        ASSERT_EQ(r.code, 0) << stderr_text();
    }
    EXPECT_FALSE(read(path("t1")).empty());
    EXPECT_EQ(read(path("t1")), read(path("t2")));
    EXPECT_EQ(read(path("m1")), read(path("m2")));
    Json d = Json::parse(read(path("d1")));
    EXPECT_EQ(d["miners"].size(), 4u);
}

TEST_F(Cli, InvalidConfigExitsWithLine) {
    std::string cfg = write("bad.json", "{\n  \"scenario\": {\n    \"n\": 4,\n    \"f\": 2\n  }\n}\n");
    Result r = cli("run " + cfg, "CORDIAL_LOG=info");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(stderr_text().find("line 3"), std::string::npos) << stderr_text();
    EXPECT_EQ(cli("run " + path("missing.json")).code, 2);
}

TEST_F(Cli, CheckHealthyAndMutated) {
    std::string cfg = write("c.json", R"({"scenario": {"rounds": 10}})");
    ASSERT_EQ(cli("run " + cfg + " --transcript " + path("t.jsonl")).code, 0);
    Result ok = cli("check " + path("t.jsonl"));
    EXPECT_EQ(ok.code, 0);
    EXPECT_TRUE(Json::parse(ok.out)["ok"].get<bool>());

    // drop the first delivery of miner 3: every later position shifts
    std::string text = read(path("t.jsonl")), out;
    std::istringstream in(text);
    bool dropped = false;
    for (std::string l; std::getline(in, l);) {
        Json j = Json::parse(l);
        if (!dropped && j["ev"] == "block-deliver" && j["miner"] == 3) {
            dropped = true;
            continue;
        }
        out += l + "\n";
    }
    write("bad.jsonl", out);
    Result bad = cli("check " + path("bad.jsonl"));
    EXPECT_EQ(bad.code, 2);  // positions no longer contiguous: corrupt

    write("junk.jsonl", "not json\n");
    EXPECT_EQ(cli("check " + path("junk.jsonl")).code, 2);
}

TEST_F(Cli, TraceRendersDot) {
    std::string cfg = write("c.json", R"({"scenario": {"rounds": 6}})");
    ASSERT_EQ(cli("run " + cfg + " --transcript " + path("t.jsonl")).code, 0);
    Result r = cli("trace " + path("t.jsonl") + " --round 2");
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out.rfind("digraph blocklace {", 0), 0u);
    EXPECT_NE(r.out.find("\"1@2\""), std::string::npos);
    Result empty = cli("trace " + path("t.jsonl") + " --round 0");
    EXPECT_EQ(empty.out.find("label="), std::string::npos);
    EXPECT_EQ(cli("trace " + path("t.jsonl") + " --round 999").code, 2);
}

TEST_F(Cli, SweepWritesCsv) {
    std::string cfg = write("s.json", R"({"scenario": {"rounds": 6}, "sweep": {"n": [4, 7], "seeds": 2}})");
    Result r = cli("sweep " + cfg + " -j 2");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out.rfind("point,n,f,model", 0), 0u);
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 4 + 2);
}

TEST_F(Cli, LogVerbosityFromEnvironment) {
    std::string cfg = write("c.json", R"({"scenario": {"rounds": 6}})");
    cli("run " + cfg, "CORDIAL_LOG=quiet");
    EXPECT_TRUE(stderr_text().empty());
    cli("run " + cfg, "CORDIAL_LOG=debug");
    EXPECT_NE(stderr_text().find("scenario"), std::string::npos);
}
