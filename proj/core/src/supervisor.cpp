// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/supervisor.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "beamctl/error.hpp"

namespace beamctl::supervisor {

namespace fs = std::filesystem;

// ── Watchdog ────────────────────────────────────────────────────────

Watchdog::Watchdog(Duration timeout) : timeout_(timeout) {
    if (timeout <= Duration::zero()) throw Error(Errc::InvalidValue, "watchdog timeout must be positive");
}

void Watchdog::add(std::string component, SimTime now) {
    deadlines_.insert_or_assign(std::move(component), now + timeout_);
}

void Watchdog::heartbeat(std::string_view component, SimTime now) {
    auto it = deadlines_.find(component);
    if (it == deadlines_.end()) {
        throw Error(Errc::UnknownComponent, "unknown component " + std::string(component));
    }
    it->second = now + timeout_;
}

Watchdog::Health Watchdog::check(SimTime now) const {
    Health h;
    for (const auto& [name, deadline] : deadlines_) {
        if (now > deadline) h.hung.push_back(name);
    }
    h.healthy = h.hung.empty();
    return h;
}

// ── RecoverySlot ────────────────────────────────────────────────────

RecoverySlot::RecoverySlot(fs::path file) : file_(std::move(file)) {}

void RecoverySlot::write(const rtdb::Snapshot& snapshot) {
    std::error_code ec;
    fs::create_directories(file_.parent_path(), ec);
    fs::path tmp = file_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << snapshot.serialize();
        out.flush();
        if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    }
    if (fail_next_rename_) {
        fail_next_rename_ = false;
        return;
    }
    fs::rename(tmp, file_, ec);
    if (ec) throw Error(Errc::IoError, "cannot replace " + file_.string() + ": " + ec.message());
}

std::optional<rtdb::Snapshot> RecoverySlot::read() const {
    std::ifstream in(file_, std::ios::binary);
    if (!in) return std::nullopt;
    std::stringstream ss;
    ss << in.rdbuf();
    return rtdb::Snapshot::parse(ss.str());
}

RestartPlan make_plan(const rtdb::Snapshot& snapshot) {
    RestartPlan plan;
    plan.snapshot = snapshot;
    rtdb::Database scratch;
    scratch.restore(snapshot);
    auto st = script::load_state(scratch);
    plan.source_hash = st.source_hash;
    plan.last_completed = st.last_completed;
    using script::RunStatus;
    plan.resume = st.status == RunStatus::Running || st.status == RunStatus::Paused ||
                  st.status == RunStatus::WaitingAnswer;
    if (auto text = scratch.get_text("/script/text")) {
        script::Program program;
        try {
            program = script::parse(*text);
        } catch (const Error& e) {
            throw Error(Errc::FormatError, std::string("stored script: ") + e.what());
        }
        plan.resume_index = script::resume_point(program, st.last_completed);
    } else {
        plan.resume = false;
    }
    return plan;
}

// ── Supervisor ──────────────────────────────────────────────────────

Supervisor::Supervisor(SupervisorConfig config, VirtualClock& clock)
    : config_(std::move(config)), clock_(clock), watchdog_(config_.watchdog_timeout),
      slot_(config_.kernel.root / "state" / "recovery.snix") {
    fs::create_directories(config_.kernel.root / "state");
    log_.open(log_path(), std::ios::app);
    if (!log_) throw Error(Errc::IoError, "cannot open " + log_path().string());
    build_kernel();
    log("kernel started");
}

Supervisor::~Supervisor() = default;

fs::path Supervisor::log_path() const { return config_.kernel.root / "state" / "supervisor.log"; }

void Supervisor::log(std::string_view event) {
    log_ << format_iso8601(clock_.now()) << '\t' << event << '\n';
    log_.flush();
}

void Supervisor::build_kernel() {
    kernel_ = std::make_unique<Kernel>(config_.kernel, clock_);
    kernel_->on_statement_complete([this](const script::ExecState& st) {
        snapshot_now();
        for (auto& fn : statement_hooks_) fn(st);
        if (crash_after_ && st.last_completed == crash_after_) {
            crash_after_.reset();
            inject_fault(FaultKind::Fatal);
        }
    });
    watchdog_.clear();
    watchdog_.add("kernel", clock_.now());
    for (const auto& name : {"Motor", "Shutter", "Temp", "Tofa", "Unipa"}) watchdog_.add(name, clock_.now());
    ++generation_;
}

void Supervisor::heartbeat_all() {
    const auto now = clock_.now();
    watchdog_.heartbeat("kernel", now);
    for (const auto& name : kernel_->resident_names()) watchdog_.heartbeat(name, now);
}

void Supervisor::tick() {
    if (kernel_->halted()) {
        clock_.advance(config_.kernel.tick);
    } else {
        kernel_->tick();
        if (!kernel_->halted()) heartbeat_all();
    }
    auto health = watchdog_.check(clock_.now());
    if (!health.healthy) restart(health.hung);
}

bool Supervisor::run_until_settled(Duration budget) {
    const auto until = clock_.now() + budget;
    while (clock_.now() < until) {
        auto st = kernel_->exec_state().status;
        if (!kernel_->halted() && st != script::RunStatus::Running) return true;
        tick();
    }
    return false;
}

const script::Program& Supervisor::load_script(std::string_view text) {
    const auto& p = kernel_->load_script(text);
    snapshot_now();
    return p;
}

void Supervisor::start(std::size_t from_index, script::Env env) {
    kernel_->start(from_index, std::move(env));
    snapshot_now();
}

void Supervisor::reseed(std::uint64_t seed) {
    config_.kernel.seed = seed;
    kernel_->set_seed(seed);
}

void Supervisor::snapshot_now() { slot_.write(kernel_->db().save()); }

void Supervisor::inject_fault(FaultKind kind) {
    if (kind == FaultKind::Nonfatal) {
        if (!nonfatal_blocked_) log("nonfatal fault: network i/o blocked");
        nonfatal_blocked_ = true;
        return;
    }
    if (kernel_->halted()) return;
    log("fatal fault: kernel hung");
    kernel_->halt();
}

void Supervisor::reset_nonfatal() {
    if (nonfatal_blocked_) log("nonfatal fault reset by operator");
    nonfatal_blocked_ = false;
}

void Supervisor::restart(const std::vector<std::string>& hung) {
    std::string who;
    for (const auto& h : hung) who += (who.empty() ? "" : ",") + h;
    log("watchdog: no heartbeat from " + who + "; restarting");
    ++crash_count_;
    kernel_.reset();
    nonfatal_blocked_ = false;

    clock_.advance(config_.restart_delay);
    build_kernel();

    std::optional<RestartPlan> plan;
    try {
        if (auto snap = slot_.read()) plan = make_plan(*snap);
    } catch (const Error& e) {
        log(std::string("recovery snapshot unusable: ") + e.what());
        kernel_->launch_residents();
        script::ExecState aborted;
        aborted.status = script::RunStatus::Aborted;
        aborted.abort_reason = std::string("recovery failed: ") + e.what();
        script::mirror_state(kernel_->db(), aborted, "supervisor");
        last_plan_.reset();
        for (auto& fn : restart_hooks_) fn(*kernel_);
        return;
    }
    if (plan) kernel_->db().restore(plan->snapshot);
    kernel_->launch_residents();
    auto resumed = kernel_->resume_from_database();
    if (resumed) {
        log(fmt::format("restarted; resuming at statement {}", *resumed));
    } else {
        log("restarted; no active run");
    }
    last_plan_ = std::move(plan);
    for (auto& fn : restart_hooks_) fn(*kernel_);
}

}  // namespace beamctl::supervisor
