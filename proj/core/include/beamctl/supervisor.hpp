// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "beamctl/clock.hpp"
#include "beamctl/faults.hpp"
#include "beamctl/kernel.hpp"
#include "beamctl/rtdb.hpp"

namespace beamctl::supervisor {

class Watchdog {
public:
    /// Throws Error(InvalidValue) unless timeout > 0.
    explicit Watchdog(Duration timeout);

    void add(std::string component, SimTime now);
    /// Throws Error(UnknownComponent).
    void heartbeat(std::string_view component, SimTime now);

    struct Health {
        bool healthy = true;
        std::vector<std::string> hung;  // sorted
    };
    Health check(SimTime now) const;

    void clear() { deadlines_.clear(); }
    Duration timeout() const noexcept { return timeout_; }

private:
    Duration timeout_;
    std::map<std::string, SimTime, std::less<>> deadlines_;
};

/// The single recovery image, replaced atomically.
class RecoverySlot {
public:
    explicit RecoverySlot(std::filesystem::path file);

    /// Writes `<file>.tmp` then renames it over the slot. Throws Error(IoError).
    void write(const rtdb::Snapshot& snapshot);
    /// nullopt when no slot exists. Throws Error(FormatError) if corrupt.
    std::optional<rtdb::Snapshot> read() const;

    const std::filesystem::path& path() const noexcept { return file_; }

    /// Test hook: the next write stops after the temp file, as if the
    /// process died before the rename.
    void fail_next_rename() noexcept { fail_next_rename_ = true; }

private:
    std::filesystem::path file_;
    bool fail_next_rename_ = false;
};

struct RestartPlan {
    rtdb::Snapshot snapshot;
    std::string source_hash;
    std::optional<std::size_t> last_completed;
    std::size_t resume_index = 0;
    bool resume = false;  // a run was active when the snapshot was taken
};

/// Throws Error(FormatError) when the stored script does not parse.
RestartPlan make_plan(const rtdb::Snapshot& snapshot);

struct SupervisorConfig {
    KernelConfig kernel;
    Duration watchdog_timeout = std::chrono::seconds(5);
    Duration restart_delay = std::chrono::milliseconds(1600);
};

/// Owns the kernel and replaces it when the watchdog fires. Single-threaded:
/// callers serialize access.
class Supervisor {
public:
    Supervisor(SupervisorConfig config, VirtualClock& clock);
    ~Supervisor();

    Kernel& kernel() noexcept { return *kernel_; }
    const Kernel& kernel() const noexcept { return *kernel_; }
    VirtualClock& clock() noexcept { return clock_; }
    const SupervisorConfig& config() const noexcept { return config_; }

    /// One tick: kernel work and heartbeats, then the watchdog check, then a
    /// restart if something hung. A hung kernel does not move the clock, so
    /// the supervisor does.
    void tick();

    /// Ticks until the run is no longer active and nothing is hung, or the
    /// budget runs out. Returns false on budget exhaustion.
    bool run_until_settled(Duration budget);

    const script::Program& load_script(std::string_view text);
    void start(std::size_t from_index, script::Env env = {});
    /// Seed for this and every later kernel.
    void reseed(std::uint64_t seed);
    /// Writes the current state to the recovery slot.
    void snapshot_now();

    void inject_fault(FaultKind kind);
    /// Fatal fault right after statement `k` completes (and is snapshotted).
    void crash_after_statement(std::size_t k) { crash_after_ = k; }

    bool nonfatal_blocked() const noexcept { return nonfatal_blocked_; }
    void reset_nonfatal();

    bool hung() const noexcept { return kernel_->halted(); }
    std::uint64_t crash_count() const noexcept { return crash_count_; }
    /// Bumped on every kernel replacement.
    std::uint64_t generation() const noexcept { return generation_; }
    const std::optional<RestartPlan>& last_plan() const noexcept { return last_plan_; }
    Watchdog::Health health() const { return watchdog_.check(clock_.now()); }

    RecoverySlot& slot() noexcept { return slot_; }
    std::filesystem::path log_path() const;
    /// Called after each restart with the new kernel.
    void on_restart(std::function<void(Kernel&)> fn) { restart_hooks_.push_back(std::move(fn)); }
    /// Called after every completed statement, once it is snapshotted.
    void on_statement(std::function<void(const script::ExecState&)> fn) {
        statement_hooks_.push_back(std::move(fn));
    }

private:
    void build_kernel();
    void heartbeat_all();
    void restart(const std::vector<std::string>& hung);
    void log(std::string_view event);

    SupervisorConfig config_;
    VirtualClock& clock_;
    std::unique_ptr<Kernel> kernel_;
    Watchdog watchdog_;
    RecoverySlot slot_;
    std::ofstream log_;
    std::optional<std::size_t> crash_after_;
    bool nonfatal_blocked_ = false;
    std::uint64_t crash_count_ = 0;
    std::uint64_t generation_ = 0;
    std::optional<RestartPlan> last_plan_;
    std::vector<std::function<void(Kernel&)>> restart_hooks_;
    std::vector<std::function<void(const script::ExecState&)>> statement_hooks_;
};

}  // namespace beamctl::supervisor
