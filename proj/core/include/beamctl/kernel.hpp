// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "beamctl/clock.hpp"
#include "beamctl/histogram.hpp"
#include "beamctl/macros.hpp"
#include "beamctl/residents.hpp"
#include "beamctl/rtdb.hpp"
#include "beamctl/script.hpp"

namespace beamctl {

struct KernelConfig {
    std::filesystem::path root = ".";  // protocol and data files live here
    std::uint64_t seed = 1;
    Duration tick = std::chrono::milliseconds(100);
    residents::MotorParams motor;
    residents::ShutterParams shutter;
    residents::TempParams temp;
    residents::EnvMonParams envmon;
    SpectrumModel daq = tof_model();
    Duration autotest_timeout = std::chrono::seconds(5);
};

/// One instance of the measurement system: database, residents, macro
/// library and the script interpreter, all advanced by `tick()` on the
/// simulated clock. Everything here is discarded on a restart.
class Kernel final : public script::Engine {
public:
    Kernel(KernelConfig config, VirtualClock& clock);
    ~Kernel() override;

    Kernel(const Kernel&) = delete;
    Kernel& operator=(const Kernel&) = delete;

    const KernelConfig& config() const noexcept { return config_; }
    rtdb::Database& db() noexcept { return db_; }
    const rtdb::Database& db() const noexcept { return db_; }
    VirtualClock& clock() noexcept { return clock_; }

    /// Starts every resident. They pick up their state from the database,
    /// so call this after a restore.
    void launch_residents();
    void stop_resident(std::string_view name);
    void restart_resident(std::string_view name);
    bool resident_running(std::string_view name) const;
    std::vector<std::string> resident_names() const;
    residents::DaqResident* daq();
    /// Changes the run seed and relaunches the running residents with it.
    void set_seed(std::uint64_t seed);

    /// Advances the clock one tick, then residents, then the interpreter.
    void tick();

    /// Parses and installs a script (status Idle). Throws ParseError.
    const script::Program& load_script(std::string_view text);
    bool has_program() const noexcept { return interpreter_ != nullptr; }
    const script::Program& program() const;
    void start(std::size_t from_index, script::Env env = {},
               std::optional<std::size_t> replay_through = std::nullopt);
    /// 1-based checkpoint ordinal to statement index. Throws BadRequest.
    std::size_t checkpoint_index(std::size_t ordinal) const;
    script::Interpreter* interpreter() noexcept { return interpreter_.get(); }
    script::ExecState exec_state() const;

    /// Reinstalls the program stored in the database and continues a run
    /// that was active when the snapshot was taken. Returns the resume index
    /// when a run was resumed.
    std::optional<std::size_t> resume_from_database();

    void on_statement_complete(script::Interpreter::CompletionHook hook);

    /// Stops all activity; used to model a hung system.
    void halt() noexcept { halted_ = true; }
    bool halted() const noexcept { return halted_; }

    // script::Engine
    std::unique_ptr<script::Operation> dispatch(const script::Command& cmd) override;
    void idle() override { tick(); }

private:
    void install_program(script::Program program);
    const rtdb::VarPath* device_namespace(std::string_view device) const;

    KernelConfig config_;
    VirtualClock& clock_;
    rtdb::Database db_;
    std::vector<std::unique_ptr<residents::Resident>> residents_;
    std::map<std::string, rtdb::VarPath, std::less<>> namespaces_;
    std::map<std::string, macros::MacroFn, std::less<>> macros_;
    std::unique_ptr<macros::MacroContext> macro_ctx_;
    std::unique_ptr<script::Interpreter> interpreter_;
    script::Interpreter::CompletionHook hook_;
    bool halted_ = false;
};

}  // namespace beamctl
