// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include <gtest/gtest.h>

#include "beamctl/error.hpp"
#include "beamctl/supervisor.hpp"
#include "harness.hpp"

namespace beamctl::supervisor {
namespace {

using namespace std::chrono_literals;
namespace fs = std::filesystem;

TEST(Watchdog, HealthyBeforeDeadline) {
    Watchdog w(5s);
    const SimTime t0 = default_epoch();
    w.add("kernel", t0);
    w.heartbeat("kernel", t0 + 3s);
    EXPECT_TRUE(w.check(t0 + 7s).healthy);
}

TEST(Watchdog, HungPastDeadline) {
    Watchdog w(5s);
    const SimTime t0 = default_epoch();
    w.add("kernel", t0);
    auto h = w.check(t0 + 5s + 1us);
    EXPECT_FALSE(h.healthy);
    EXPECT_EQ(h.hung, std::vector<std::string>{"kernel"});
}

TEST(Watchdog, ListsOnlySilentComponents) {
    Watchdog w(5s);
    const SimTime t0 = default_epoch();
    for (const auto* c : {"a", "b", "c"}) w.add(c, t0);
    w.heartbeat("a", t0 + 4s);
    w.heartbeat("c", t0 + 4s);
    EXPECT_EQ(w.check(t0 + 6s).hung, std::vector<std::string>{"b"});
}

TEST(Watchdog, Errors) {
    EXPECT_THROW(Watchdog(0s), Error);
    Watchdog w(1s);
    try {
        w.heartbeat("ghost", default_epoch());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnknownComponent);
    }
}

TEST(RecoverySlot, MissingAndCorrupt) {
    auto dir = testing::scratch("slot");
    RecoverySlot slot(dir / "r.snix");
    EXPECT_FALSE(slot.read());
    std::ofstream(dir / "r.snix") << "garbage";
    EXPECT_THROW(slot.read(), Error);
}

TEST(RecoverySlot, InterruptedWriteKeepsPrevious) {
    auto dir = testing::scratch("slot-atomic");
    RecoverySlot slot(dir / "r.snix");
    rtdb::Database db;
    db.set("/a", std::int64_t{1}, "t");
    slot.write(db.save());
    db.set("/a", std::int64_t{2}, "t");
    slot.fail_next_rename();
    slot.write(db.save());
    auto back = slot.read();
    ASSERT_TRUE(back);
    ASSERT_EQ(back->records.size(), 1u);
    EXPECT_EQ(std::get<std::int64_t>(back->records[0].value), 1);
    slot.write(db.save());
    EXPECT_EQ(std::get<std::int64_t>(slot.read()->records[0].value), 2);
}

class SupervisorTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = testing::scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
        SupervisorConfig cfg;
        cfg.kernel.root = root_;
        cfg.kernel.seed = 7;
        sup_ = std::make_unique<Supervisor>(cfg, clock_);
        sup_->kernel().launch_residents();
    }

    fs::path root_;
    VirtualClock clock_;
    std::unique_ptr<Supervisor> sup_;
};

TEST_F(SupervisorTest, SlotTracksLastCompleted) {
    sup_->load_script(testing::corpus_text());
    std::vector<std::pair<std::size_t, std::optional<std::size_t>>> seen;
    sup_->on_statement([&](const script::ExecState& st) {
        seen.emplace_back(*st.last_completed, make_plan(*sup_->slot().read()).last_completed);
    });
    sup_->start(0);
    ASSERT_TRUE(sup_->run_until_settled(2h));
    ASSERT_FALSE(seen.empty());
    EXPECT_EQ(seen.front().first, 0u);
    for (const auto& [k, stored] : seen) EXPECT_EQ(stored, k);
}

TEST_F(SupervisorTest, FatalFaultRestartsAfterDelay) {
    sup_->load_script(testing::corpus_text());
    sup_->start(0);
    for (int i = 0; i < 20; ++i) sup_->tick();
    const auto gen = sup_->generation();
    sup_->inject_fault(FaultKind::Fatal);
    EXPECT_TRUE(sup_->hung());
    const auto t0 = clock_.now();
    while (sup_->hung()) {
        sup_->tick();
        ASSERT_LT(clock_.now() - t0, 10s);
    }
    EXPECT_EQ(sup_->crash_count(), 1u);
    EXPECT_EQ(sup_->generation(), gen + 1);

    auto log = testing::parse_log(testing::read_file(sup_->log_path()));
    ASSERT_GE(log.size(), 3u);
    const auto& detect = log[log.size() - 2];
    const auto& resumed = log.back();
    EXPECT_EQ(detect.second.rfind("watchdog:", 0), 0u);
    EXPECT_EQ(resumed.first - detect.first, 1600ms);
    ASSERT_TRUE(sup_->run_until_settled(2h));
    EXPECT_EQ(sup_->kernel().exec_state().status, script::RunStatus::Finished);
}

TEST_F(SupervisorTest, CrashBeforeFirstCheckpointRerunsAll) {
    sup_->load_script(testing::corpus_text());
    sup_->crash_after_statement(2);
    sup_->start(0);
    ASSERT_TRUE(sup_->run_until_settled(2h));
    ASSERT_TRUE(sup_->last_plan());
    EXPECT_EQ(sup_->last_plan()->resume_index, 0u);
    EXPECT_EQ(sup_->last_plan()->last_completed, 2u);
    EXPECT_EQ(sup_->kernel().exec_state().status, script::RunStatus::Finished);
}

TEST_F(SupervisorTest, NonfatalStaysHealthy) {
    sup_->inject_fault(FaultKind::Nonfatal);
    for (int i = 0; i < 200; ++i) sup_->tick();
    EXPECT_TRUE(sup_->health().healthy);
    EXPECT_TRUE(sup_->nonfatal_blocked());
    EXPECT_EQ(sup_->crash_count(), 0u);
    sup_->reset_nonfatal();
    EXPECT_FALSE(sup_->nonfatal_blocked());
}

TEST_F(SupervisorTest, IdleKernelHealthyForAnHour) {
    for (int i = 0; i < 36000; ++i) sup_->tick();
    EXPECT_EQ(sup_->crash_count(), 0u);
    EXPECT_TRUE(sup_->health().healthy);
}

TEST_F(SupervisorTest, CorruptSlotAbortsTheRun) {
    sup_->load_script(testing::corpus_text());
    sup_->start(0);
    for (int i = 0; i < 5; ++i) sup_->tick();
    std::ofstream(sup_->slot().path(), std::ios::trunc) << "SNIX1 broken";
    sup_->inject_fault(FaultKind::Fatal);
    while (sup_->hung()) sup_->tick();
    const auto st = sup_->kernel().exec_state();
    EXPECT_EQ(st.status, script::RunStatus::Aborted);
    EXPECT_EQ(st.abort_reason.rfind("recovery failed", 0), 0u);
}

}  // namespace
}  // namespace beamctl::supervisor
