// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Instrument macro-command library. Macros are coroutines that issue device
// commands through the database and suspend until the device acknowledges,
// so a macro never blocks the simulation.

#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "beamctl/clock.hpp"
#include "beamctl/rtdb.hpp"
#include "beamctl/script.hpp"

namespace beamctl::macros {

/// One command written to `<ns>/cmd`, tracked until its ack arrives.
class PendingCommand {
public:
    /// Subscribes to `<ns>/ack` first, then writes the command.
    PendingCommand(rtdb::Database& db, const rtdb::VarPath& ns, std::string text,
                   std::string_view writer);

    script::Progress poll();
    const std::string& status() const noexcept { return status_; }
    std::uint64_t revision() const noexcept { return revision_; }

private:
    std::shared_ptr<rtdb::Subscription> acks_;
    std::uint64_t revision_ = 0;
    script::Progress state_ = script::Progress::Pending;
    std::string status_;
};

class MacroTask {
public:
    struct promise_type {
        std::function<bool()> resume_when;
        std::exception_ptr error;

        MacroTask get_return_object() {
            return MacroTask{std::coroutine_handle<promise_type>::from_promise(*this)};
        }
        std::suspend_always initial_suspend() noexcept { return {}; }
        std::suspend_always final_suspend() noexcept { return {}; }
        void return_void() noexcept {}
        void unhandled_exception() noexcept { error = std::current_exception(); }
    };
    using Handle = std::coroutine_handle<promise_type>;

    explicit MacroTask(Handle h) : handle_(h) {}
    MacroTask(MacroTask&& other) noexcept : handle_(std::exchange(other.handle_, {})) {}
    MacroTask& operator=(MacroTask&&) = delete;
    ~MacroTask() {
        if (handle_) handle_.destroy();
    }

    /// Resumes the body if its wait condition holds.
    script::Progress poll();
    const std::string& detail() const noexcept { return detail_; }

private:
    Handle handle_;
    std::string detail_;
};

/// Suspends until `cond()` holds.
struct Until {
    std::function<bool()> cond;

    bool await_ready() { return cond(); }
    void await_suspend(MacroTask::Handle h) { h.promise().resume_when = cond; }
    void await_resume() const noexcept {}
};

/// Suspends until the device acknowledges; throws on an error status.
struct DeviceAwaiter {
    std::shared_ptr<PendingCommand> cmd;
    std::string device;

    bool await_ready() { return cmd->poll() != script::Progress::Pending; }
    void await_suspend(MacroTask::Handle h) {
        h.promise().resume_when = [c = cmd] { return c->poll() != script::Progress::Pending; };
    }
    void await_resume();
};

struct InstrumentConfig {
    int sample_count = 12;
    Duration autotest_timeout = std::chrono::seconds(5);
};

/// Everything a macro may touch.
class MacroContext {
public:
    using DeviceLookup = std::function<const rtdb::VarPath*(std::string_view)>;

    MacroContext(rtdb::Database& db, const VirtualClock& clock, InstrumentConfig config,
                 DeviceLookup lookup, std::vector<std::string> devices);

    rtdb::Database& db() { return db_; }
    SimTime now() const { return clock_.now(); }
    const InstrumentConfig& config() const { return config_; }
    const std::vector<std::string>& devices() const { return devices_; }

    /// Throws Error(DispatchError) for an unknown device.
    std::shared_ptr<PendingCommand> issue(std::string_view device, std::string text);
    DeviceAwaiter device(std::string_view device, std::string text);
    Until sleep(Duration d);

private:
    rtdb::Database& db_;
    const VirtualClock& clock_;
    InstrumentConfig config_;
    DeviceLookup lookup_;
    std::vector<std::string> devices_;
};

using MacroFn = std::function<MacroTask(MacroContext&, std::vector<std::string> args, bool replay)>;

/// usf_set, auto_test, uni_start, uni_stop, shut_set, temp_ist, meas_2sh.
std::map<std::string, MacroFn, std::less<>> standard_library();

}  // namespace beamctl::macros
