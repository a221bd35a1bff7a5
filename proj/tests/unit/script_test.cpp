// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "beamctl/error.hpp"
#include "beamctl/script.hpp"
#include "harness.hpp"

namespace beamctl::script {
namespace {

/// Completes every command at once and records what it was asked to do.
class RecordingEngine final : public Engine {
public:
    struct Done final : Operation {
        Progress poll() override { return Progress::Done; }
    };

    std::unique_ptr<Operation> dispatch(const Command& cmd) override {
        if (cmd.kind == Command::Kind::Macro && cmd.target == "nope") {
            throw Error(Errc::DispatchError, "unknown macro nope");
        }
        log.push_back(cmd);
        return std::make_unique<Done>();
    }
    void idle() override {}

    std::vector<Command> log;
};

Program corpus() { return parse(testing::corpus_text()); }

TEST(Parse, SetStatement) {
    auto p = parse("#set @filename PB160502a\n");
    ASSERT_EQ(p.size(), 1u);
    const auto& s = std::get<SetVar>(p.statements[0].body);
    EXPECT_EQ(s.name, "filename");
    EXPECT_EQ(std::get<Literal>(s.value).text, "PB160502a");
}

TEST(Parse, MacroCallKeepsOddLiteral) {
    auto p = parse("meas_2sh(vanady1_1det,vanady1_2det,2000,1000,1,11, #.$09)\n");
    const auto& m = std::get<MacroCall>(p.statements[0].body);
    EXPECT_EQ(m.name, "meas_2sh");
    ASSERT_EQ(m.args.size(), 7u);
    EXPECT_EQ(std::get<Literal>(m.args.back()).text, "#.$09");
}

TEST(Parse, DeviceCommand) {
    auto p = parse("Tofa:open_prot txt/pb160502a.txt\n");
    const auto& d = std::get<DeviceCmd>(p.statements[0].body);
    EXPECT_EQ(d.device, "Tofa");
    EXPECT_EQ(d.command, "open_prot");
    ASSERT_EQ(d.args.size(), 1u);
    EXPECT_EQ(std::get<Literal>(d.args[0]).text, "txt/pb160502a.txt");
}

TEST(Parse, EmptyText) { EXPECT_EQ(parse("").size(), 0u); }

TEST(Parse, MissingColonReportsLine) {
    try {
        parse(";ok\n;+++++\nTofa file x\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(Parse, AskStatement) {
    auto p = parse("#ask @setpoint 25 \"Temperature setpoint\"\n");
    const auto& a = std::get<Ask>(p.statements[0].body);
    EXPECT_EQ(a.name, "setpoint");
    EXPECT_EQ(std::get<Literal>(a.default_value).text, "25");
    EXPECT_EQ(a.prompt, "Temperature setpoint");
}

// Kinds per source line come from a hand classification of the listing.
TEST(Parse, CorpusMatchesHandClassification) {
    std::ifstream f(testing::golden_dir() / "corpus_classes.tsv");
    std::map<std::size_t, std::string> expected;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        expected[std::stoul(line.substr(0, tab))] = line.substr(tab + 1);
    }
    ASSERT_EQ(expected.size(), 38u);
    auto p = corpus();
    ASSERT_EQ(p.size(), expected.size());
    for (const auto& s : p.statements) EXPECT_EQ(s.kind(), expected.at(s.source_line)) << "line " << s.source_line;
    EXPECT_EQ(p.checkpoints, (std::vector<std::size_t>{5, 20, 23, 29}));
}

TEST(Render, CorpusRoundTrip) {
    auto p = corpus();
    auto q = parse(render(p));
    EXPECT_TRUE(structurally_equal(p, q));
    EXPECT_EQ(render(q), render(p));
}

TEST(Substitute, Basics) {
    Env env{{"filename", "PB160502a"}};
    EXPECT_EQ(substitute(VarRef{"filename"}, env), "PB160502a");
    EXPECT_EQ(substitute(Literal{"outbeam"}, env), "outbeam");
    try {
        substitute(VarRef{"missing"}, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnboundVariable);
    }
}

TEST(Step, CommentHasNoSideEffects) {
    rtdb::Database db;
    RecordingEngine eng;
    auto p = parse(";hello\n");
    ExecState st;
    st.status = RunStatus::Running;
    st = step(st, p, eng, db);
    EXPECT_EQ(st.last_completed, 0u);
    EXPECT_TRUE(eng.log.empty());
}

TEST(Step, SetVarMirrorsToDatabase) {
    rtdb::Database db;
    RecordingEngine eng;
    auto p = parse("#set @filename PB160502a\nTofa: file @filename\n");
    auto st = run(p, eng, db, 0);
    EXPECT_EQ(st.status, RunStatus::Finished);
    EXPECT_EQ(db.get_text("/script/vars/filename"), "PB160502a");
    ASSERT_EQ(eng.log.size(), 1u);
    EXPECT_EQ(eng.log[0].args, std::vector<std::string>{"PB160502a"});
}

TEST(Step, UnknownMacroAborts) {
    rtdb::Database db;
    RecordingEngine eng;
    auto st = run(parse("nope()\n"), eng, db, 0);
    EXPECT_EQ(st.status, RunStatus::Aborted);
    EXPECT_NE(st.abort_reason.find("nope"), std::string::npos);
}

TEST(Run, EmptyProgramFinishes) {
    rtdb::Database db;
    RecordingEngine eng;
    auto st = run(parse(""), eng, db, 0);
    EXPECT_EQ(st.status, RunStatus::Finished);
    EXPECT_FALSE(st.last_completed);
}

TEST(Run, FromCheckpointSkipsEarlierStatements) {
    rtdb::Database db;
    RecordingEngine full, tail;
    auto p = corpus();
    run(p, full, db, 0);
    rtdb::Database db2;
    run(p, tail, db2, p.checkpoints[1]);
    for (const auto& c : tail.log) EXPECT_GE(c.statement, p.checkpoints[1]);
    EXPECT_LT(tail.log.size(), full.log.size());
    EXPECT_EQ(full.log.back().target, tail.log.back().target);
}

TEST(ResumePoint, Checkpoints) {
    auto p = corpus();
    EXPECT_EQ(resume_point(p, std::nullopt), 0u);
    EXPECT_EQ(resume_point(p, 3), 0u);
    // Linear scan oracle over the checkpoint indices.
    for (std::size_t k = 0; k < p.size(); ++k) {
        std::size_t want = 0;
        for (auto c : p.checkpoints) {
            if (c <= k) want = c;
        }
        EXPECT_EQ(resume_point(p, k), want) << k;
    }
    EXPECT_EQ(resume_point(p, 21), p.checkpoints[1]);
}

TEST(Answer, ValueAndDefault) {
    ExecState waiting;
    waiting.status = RunStatus::WaitingAnswer;
    waiting.cursor = 0;
    waiting.question = Question{"setpoint", "Temperature", "25"};
    auto a = answer(waiting, "30");
    EXPECT_EQ(a.env.at("setpoint"), "30");
    EXPECT_EQ(a.status, RunStatus::Running);
    auto b = answer(waiting, "");
    EXPECT_EQ(b.env.at("setpoint"), "25");

    ExecState running;
    running.status = RunStatus::Running;
    try {
        answer(running, "1");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NotWaiting);
    }
}

TEST(Interpreter, AskWaitsAndMirrors) {
    rtdb::Database db;
    RecordingEngine eng;
    Interpreter in(parse("#ask @t 25 \"Setpoint\"\nTemp: set @t\n"), db, eng);
    in.start(0);
    while (in.advance()) {
    }
    in.advance();
    EXPECT_EQ(in.state().status, RunStatus::WaitingAnswer);
    EXPECT_EQ(db.get_text("/script/status"), "WaitingAnswer");
    in.answer("31");
    while (in.state().status == RunStatus::Running) in.advance();
    EXPECT_EQ(in.state().status, RunStatus::Finished);
    ASSERT_EQ(eng.log.size(), 1u);
    EXPECT_EQ(eng.log[0].args[0], "31");
}

TEST(MirrorState, RoundTrip) {
    rtdb::Database db;
    ExecState st;
    st.source_hash = "abc";
    st.last_completed = 4;
    st.cursor = 5;
    st.env = {{"filename", "PB160502a"}};
    st.status = RunStatus::Paused;
    mirror_state(db, st);
    auto back = load_state(db);
    EXPECT_EQ(back.source_hash, "abc");
    EXPECT_EQ(back.last_completed, 4u);
    EXPECT_EQ(back.cursor, 5u);
    EXPECT_EQ(back.env, st.env);
    EXPECT_EQ(back.status, RunStatus::Paused);
}

}  // namespace
}  // namespace beamctl::script
