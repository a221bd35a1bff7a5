// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/kernel.hpp"

#include <algorithm>

#include "beamctl/error.hpp"

namespace beamctl {

namespace {

class DeviceOperation final : public script::Operation {
public:
    DeviceOperation(std::string device, std::shared_ptr<macros::PendingCommand> cmd)
        : device_(std::move(device)), cmd_(std::move(cmd)) {}

    script::Progress poll() override { return cmd_->poll(); }
    std::string detail() const override { return device_ + ": " + cmd_->status(); }

private:
    std::string device_;
    std::shared_ptr<macros::PendingCommand> cmd_;
};

class MacroOperation final : public script::Operation {
public:
    MacroOperation(std::string name, macros::MacroTask task)
        : name_(std::move(name)), task_(std::move(task)) {}

    script::Progress poll() override { return task_.poll(); }
    std::string detail() const override { return name_ + ": " + task_.detail(); }

private:
    std::string name_;
    macros::MacroTask task_;
};

constexpr std::string_view kDeviceOrder[] = {"Motor", "Shutter", "Temp", "Tofa", "Unipa"};

}  // namespace

Kernel::Kernel(KernelConfig config, VirtualClock& clock)
    : config_(std::move(config)), clock_(clock), db_([&clock] { return clock.now(); }) {
    for (auto name : kDeviceOrder) {
        std::string lower(name);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        namespaces_.emplace(std::string(name), rtdb::VarPath({lower}));
    }
    macros_ = macros::standard_library();
    macro_ctx_ = std::make_unique<macros::MacroContext>(
        db_, clock_,
        macros::InstrumentConfig{config_.motor.sample_count, config_.autotest_timeout},
        [this](std::string_view d) { return device_namespace(d); },
        std::vector<std::string>(std::begin(kDeviceOrder), std::end(kDeviceOrder)));
}

Kernel::~Kernel() = default;

const rtdb::VarPath* Kernel::device_namespace(std::string_view device) const {
    auto it = namespaces_.find(device);
    return it == namespaces_.end() ? nullptr : &it->second;
}

void Kernel::launch_residents() {
    for (auto name : kDeviceOrder) {
        if (!resident_running(name)) restart_resident(name);
    }
}

void Kernel::stop_resident(std::string_view name) {
    std::erase_if(residents_, [&](const auto& r) { return r->name() == name; });
}

void Kernel::restart_resident(std::string_view name) {
    stop_resident(name);
    residents::ResidentContext ctx{db_, clock_, config_.root, config_.seed};
    std::unique_ptr<residents::Resident> r;
    if (name == "Motor") {
        r = std::make_unique<residents::MotorResident>(ctx, config_.motor);
    } else if (name == "Shutter") {
        r = std::make_unique<residents::ShutterResident>(ctx, config_.shutter);
    } else if (name == "Temp") {
        r = std::make_unique<residents::TempResident>(ctx, config_.temp);
    } else if (name == "Tofa") {
        r = std::make_unique<residents::DaqResident>(ctx, config_.daq);
    } else if (name == "Unipa") {
        r = std::make_unique<residents::EnvMonResident>(ctx, config_.envmon);
    } else {
        throw Error(Errc::UnknownComponent, "unknown resident " + std::string(name));
    }
    // Keep a stable stepping order regardless of restart history.
    auto order = [](std::string_view n) {
        return std::find(std::begin(kDeviceOrder), std::end(kDeviceOrder), n) - std::begin(kDeviceOrder);
    };
    auto pos = std::find_if(residents_.begin(), residents_.end(),
                            [&](const auto& x) { return order(x->name()) > order(name); });
    residents_.insert(pos, std::move(r));
}

bool Kernel::resident_running(std::string_view name) const {
    return std::any_of(residents_.begin(), residents_.end(),
                       [&](const auto& r) { return r->name() == name; });
}

std::vector<std::string> Kernel::resident_names() const {
    std::vector<std::string> out;
    for (const auto& r : residents_) out.push_back(r->name());
    return out;
}

residents::DaqResident* Kernel::daq() {
    for (auto& r : residents_) {
        if (auto* d = dynamic_cast<residents::DaqResident*>(r.get())) return d;
    }
    return nullptr;
}

void Kernel::set_seed(std::uint64_t seed) {
    config_.seed = seed;
    for (const auto& name : resident_names()) restart_resident(name);
}

void Kernel::tick() {
    if (halted_) return;
    clock_.advance(config_.tick);
    for (auto& r : residents_) r->tick(config_.tick);
    if (!interpreter_) return;
    while (!halted_ && interpreter_->advance()) {
    }
}

void Kernel::install_program(script::Program program) {
    interpreter_ = std::make_unique<script::Interpreter>(std::move(program), db_, *this);
    interpreter_->on_statement_complete([this](const script::ExecState& st) {
        if (hook_) hook_(st);
    });
}

const script::Program& Kernel::load_script(std::string_view text) {
    if (interpreter_) {
        auto st = interpreter_->state().status;
        if (st == script::RunStatus::Running || st == script::RunStatus::Paused ||
            st == script::RunStatus::WaitingAnswer) {
            throw Error(Errc::Busy, "a run is in progress");
        }
    }
    auto program = script::parse(text);
    db_.set("/script/text", program.source, "kernel");
    install_program(std::move(program));
    script::ExecState idle;
    idle.source_hash = interpreter_->program().source_hash;
    interpreter_->adopt(idle);
    script::mirror_state(db_, interpreter_->state());
    return interpreter_->program();
}

const script::Program& Kernel::program() const {
    if (!interpreter_) throw Error(Errc::NoData, "no script loaded");
    return interpreter_->program();
}

std::size_t Kernel::checkpoint_index(std::size_t ordinal) const {
    const auto& cps = program().checkpoints;
    if (ordinal == 0 || ordinal > cps.size()) {
        throw Error(Errc::BadRequest, "script has no checkpoint " + std::to_string(ordinal));
    }
    return cps[ordinal - 1];
}

void Kernel::start(std::size_t from_index, script::Env env,
                   std::optional<std::size_t> replay_through) {
    if (!interpreter_) throw Error(Errc::NoData, "no script loaded");
    auto st = interpreter_->state().status;
    if (st == script::RunStatus::Running || st == script::RunStatus::Paused ||
        st == script::RunStatus::WaitingAnswer) {
        throw Error(Errc::Busy, "a run is in progress");
    }
    interpreter_->start(from_index, std::move(env), replay_through);
}

script::ExecState Kernel::exec_state() const {
    if (interpreter_) return interpreter_->state();
    return script::load_state(db_);
}

std::optional<std::size_t> Kernel::resume_from_database() {
    auto text = db_.get_text("/script/text");
    if (!text) return std::nullopt;
    auto st = script::load_state(db_);
    auto program = script::parse(*text);
    if (!st.source_hash.empty() && st.source_hash != program.source_hash) {
        throw Error(Errc::FormatError, "stored script does not match its digest");
    }
    install_program(std::move(program));
    using script::RunStatus;
    if (st.status == RunStatus::Running || st.status == RunStatus::Paused ||
        st.status == RunStatus::WaitingAnswer) {
        const auto idx = script::resume_point(interpreter_->program(), st.last_completed);
        const bool paused = st.status == RunStatus::Paused;
        interpreter_->start(idx, st.env, st.last_completed);
        if (paused) interpreter_->pause();
        return idx;
    }
    interpreter_->adopt(std::move(st));
    return std::nullopt;
}

void Kernel::on_statement_complete(script::Interpreter::CompletionHook hook) {
    hook_ = std::move(hook);
}

std::unique_ptr<script::Operation> Kernel::dispatch(const script::Command& cmd) {
    using Kind = script::Command::Kind;
    if (cmd.kind == Kind::Device) {
        const auto* ns = device_namespace(cmd.target);
        if (!ns) throw Error(Errc::DispatchError, "unknown device " + cmd.target);
        std::string text = cmd.command;
        for (const auto& a : cmd.args) text += " " + a;
        return std::make_unique<DeviceOperation>(
            cmd.target, std::make_shared<macros::PendingCommand>(db_, *ns, std::move(text), "script"));
    }
    auto it = macros_.find(cmd.target);
    if (it == macros_.end()) throw Error(Errc::DispatchError, "unknown macro " + cmd.target);
    return std::make_unique<MacroOperation>(cmd.target, it->second(*macro_ctx_, cmd.args, cmd.replay));
}

}  // namespace beamctl
