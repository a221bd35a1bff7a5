// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "beamctl/viz.hpp"
#include "cli.hpp"
#include "harness.hpp"
#include "session.hpp"

namespace beamctl::cli {
namespace {

using namespace std::chrono_literals;

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
        host_ = std::make_unique<testing::Host>("cli-" + name);
        server_ = std::make_unique<gateway::StreamServer>(*host_->host, "127.0.0.1", 0);
        server_->start();
    }
    void TearDown() override {
        server_->stop();
        server_.reset();
        host_.reset();
    }

    struct Result {
        int code;
        std::string out, err;
    };

    Result cli(std::vector<std::string> args, const std::string& input = "") {
        args.insert(args.begin(), {"--endpoint", "127.0.0.1:" + std::to_string(server_->port())});
        std::istringstream in(input);
        std::ostringstream out, err;
        const int code = run(args, in, out, err);
        return {code, out.str(), err.str()};
    }

    std::string write(const std::string& name, const std::string& text) {
        auto p = host_->root / name;
        std::ofstream(p) << text;
        return p.string();
    }

    std::unique_ptr<testing::Host> host_;
    std::unique_ptr<gateway::StreamServer> server_;
};

TEST_F(CliTest, RunCorpus) {
    auto r = cli({"--seed", "7", "run", testing::corpus_path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const auto* m : {"auto_test", "usf_set", "uni_start", "shut_set", "temp_ist", "meas_2sh"}) {
        EXPECT_NE(r.out.find(m), std::string::npos) << m;
    }
    EXPECT_NE(r.out.find("Finished"), std::string::npos);

    auto user = cli({"var", "get", "/meta/user"});
    EXPECT_EQ(user.code, 0);
    EXPECT_EQ(user.out, "Balgavi\n");
    auto vars = cli({"var", "list", "/script/vars"});
    EXPECT_NE(vars.out.find("/script/vars/filename"), std::string::npos) << vars.out << vars.err;
}

TEST_F(CliTest, RunParseErrorExit2) {
    auto r = cli({"run", write("bad.snx", ";ok\n;+++++\nTofa file x\n")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(":3:"), std::string::npos) << r.err;
}

TEST_F(CliTest, RunAbortedExit3) {
    auto r = cli({"run", write("abort.snx", "nope()\n")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("nope"), std::string::npos);
}

TEST_F(CliTest, RunFromSecondCheckpoint) {
    auto r = cli({"run", "--from", "2", testing::corpus_path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    // usf_set sits before the second checkpoint, so it never ran.
    EXPECT_EQ(r.out.find("usf_set"), std::string::npos);
    EXPECT_NE(r.out.find("meas_2sh"), std::string::npos);
    EXPECT_EQ(cli({"var", "get", "/meta/user"}).code, 1);
}

TEST_F(CliTest, RunAnswersPrompt) {
    auto r = cli({"run", write("ask.snx", "#ask @t 25 \"Temperature setpoint\"\nTemp: setpoint @t\n")}, "30\n");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("Temperature setpoint [25]: "), std::string::npos);
    EXPECT_EQ(cli({"var", "get", "/temp/setpoint"}).out, "30.0\n");
}

TEST_F(CliTest, VarErrors) {
    auto r = cli({"var", "get", "/nope"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("not found"), std::string::npos);
    ASSERT_EQ(cli({"var", "set", "/user/n", "5"}).code, 0);
    auto mismatch = cli({"var", "set", "/user/n", "five", "--type", "text"});
    EXPECT_EQ(mismatch.code, 1);
    EXPECT_NE(mismatch.err.find("error"), std::string::npos);
}

TEST_F(CliTest, VarSetPrintsRevision) {
    auto r = cli({"var", "set", "/user/x", "1.5"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_GT(std::stoull(r.out), 0u);
    EXPECT_EQ(cli({"--format", "tsv", "var", "get", "/user/x"}).out.rfind("/user/x\treal\t1.5\t", 0), 0u);
}

TEST_F(CliTest, SpectrumIdleIsNoData) {
    auto r = cli({"spectrum"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("no histogram"), std::string::npos);
}

TEST_F(CliTest, SpectrumPeakAtModelCentre) {
    ASSERT_EQ(cli({"run", testing::corpus_path().string()}).code, 0);
    auto r = cli({"spectrum"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto centre = tof_model().axes[0].center;
    const auto at = r.out.find("peak_channel=");
    ASSERT_NE(at, std::string::npos);
    const double peak = std::stod(r.out.substr(at + 13));
    EXPECT_LE(std::abs(peak - centre), tof_model().axes[0].width);

    // The longest bar covers the centre channel.
    std::size_t best = 0;
    std::string best_row;
    for (const auto& l : testing::lines(r.out)) {
        const auto bar = std::count(l.begin(), l.end(), '#');
        if (static_cast<std::size_t>(bar) > best) {
            best = bar;
            best_row = l;
        }
    }
    const auto lo = std::stoul(best_row.substr(0, best_row.find('-')));
    const auto hi = std::stoul(best_row.substr(best_row.find('-') + 1));
    EXPECT_LE(lo, centre);
    EXPECT_GE(hi, centre);
}

TEST_F(CliTest, SpectrumFileDecompresses) {
    ASSERT_EQ(cli({"run", testing::corpus_path().string()}).code, 0);
    const auto out = (host_->root / "s.maks").string();
    ASSERT_EQ(cli({"spectrum", "--render", "file", "--output", out}).code, 0);
    auto h = viz::decompress(viz::CompressedSpectrum::from_file(testing::read_file(out)));
    const auto direct = (host_->root / "s.raw").string();
    ASSERT_EQ(cli({"spectrum", "--mode", "direct", "--render", "file", "--output", direct}).code, 0);
    EXPECT_EQ(h, viz::parse_direct(testing::read_file(direct)));
}

TEST_F(CliTest, FaultFatalThenReconnect) {
    ASSERT_EQ(cli({"fault", "fatal"}).code, 0);
    ASSERT_TRUE(host_->host->wait_settled(30s));
    auto r = cli({"status"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("crashes=1"), std::string::npos);
}

TEST_F(CliTest, FaultNonfatalBlocksUntilReset) {
    ASSERT_EQ(cli({"fault", "nonfatal"}).code, 0);
    EXPECT_EQ(cli({"status"}).code, 1);
    host_->host->reset_nonfatal();
    EXPECT_EQ(cli({"status"}).code, 0);
}

TEST_F(CliTest, BenchMatchesFixture) {
    auto r = cli({"bench"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(r.out, viz::format_report(viz::crossover_benchmark(viz::golden_fixture(), viz::default_sweep())));
    EXPECT_NE(r.out.find("crossover=8.22398e+06"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"fault", "meteor"}).code, 2);
    EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Render, AsciiChart) {
    std::vector<std::uint64_t> s(64, 1);
    s[40] = 100;
    const auto text = render_ascii(s, 8, 20);
    const auto ls = testing::lines(text);
    ASSERT_EQ(ls.size(), 8u);
    EXPECT_NE(ls[5].find(std::string(20, '#')), std::string::npos);
    EXPECT_EQ(render_ascii({}), "(empty spectrum)\n");
}

}  // namespace
}  // namespace beamctl::cli
