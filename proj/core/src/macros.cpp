// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/macros.hpp"

#include <charconv>

#include <fmt/format.h>

#include "beamctl/error.hpp"
#include "beamctl/residents.hpp"

namespace beamctl::macros {

using residents::parse_int;
using residents::parse_real;
using script::Progress;

// ── PendingCommand ──────────────────────────────────────────────────

PendingCommand::PendingCommand(rtdb::Database& db, const rtdb::VarPath& ns, std::string text,
                               std::string_view writer) {
    acks_ = db.subscribe(ns.child("ack"));
    revision_ = db.set(ns.child("cmd"), std::move(text), writer);
}

Progress PendingCommand::poll() {
    if (state_ != Progress::Pending) return state_;
    while (auto e = acks_->try_next()) {
        const auto* text = std::get_if<std::string>(&e->value);
        if (!text) continue;
        auto sp = text->find(' ');
        std::uint64_t rev = 0;
        std::from_chars(text->data(), text->data() + (sp == std::string::npos ? text->size() : sp), rev);
        if (rev != revision_) continue;
        status_ = sp == std::string::npos ? std::string{} : text->substr(sp + 1);
        state_ = status_.rfind("error", 0) == 0 ? Progress::Failed : Progress::Done;
        acks_->close();
        break;
    }
    return state_;
}

// ── MacroTask ───────────────────────────────────────────────────────

Progress MacroTask::poll() {
    auto finished = [&] {
        if (auto err = handle_.promise().error) {
            try {
                std::rethrow_exception(err);
            } catch (const std::exception& e) {
                detail_ = e.what();
            } catch (...) {
                detail_ = "macro failed";
            }
            return Progress::Failed;
        }
        return Progress::Done;
    };
    if (handle_.done()) return finished();
    auto& p = handle_.promise();
    if (p.resume_when && !p.resume_when()) return Progress::Pending;
    p.resume_when = nullptr;
    handle_.resume();
    return handle_.done() ? finished() : Progress::Pending;
}

void DeviceAwaiter::await_resume() {
    if (cmd->poll() == Progress::Failed) {
        throw Error(Errc::DispatchError, device + ": " + cmd->status());
    }
}

// ── MacroContext ────────────────────────────────────────────────────

MacroContext::MacroContext(rtdb::Database& db, const VirtualClock& clock, InstrumentConfig config,
                           DeviceLookup lookup, std::vector<std::string> devices)
    : db_(db), clock_(clock), config_(config), lookup_(std::move(lookup)),
      devices_(std::move(devices)) {}

std::shared_ptr<PendingCommand> MacroContext::issue(std::string_view device, std::string text) {
    const rtdb::VarPath* ns = lookup_(device);
    if (!ns) throw Error(Errc::DispatchError, "unknown device " + std::string(device));
    return std::make_shared<PendingCommand>(db_, *ns, std::move(text), "macro");
}

DeviceAwaiter MacroContext::device(std::string_view device, std::string text) {
    return DeviceAwaiter{issue(device, std::move(text)), std::string(device)};
}

Until MacroContext::sleep(Duration d) {
    const SimTime until = now() + d;
    return Until{[this, until] { return now() >= until; }};
}

// ── the library ─────────────────────────────────────────────────────
//
// Awaiters are always named locals: GCC 11 destroys a temporary awaiter
// twice when it is created inside the co_await expression.

namespace {

void expect_args(std::string_view macro, const std::vector<std::string>& args, std::size_t n) {
    if (args.size() != n) {
        throw Error(Errc::DispatchError,
                    fmt::format("{} takes {} arguments, got {}", macro, n, args.size()));
    }
}

MacroTask usf_set(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("usf_set", args, 3);
    ctx.db().set("/meta/user", args[0], "macro");
    ctx.db().set("/meta/sample", args[1], "macro");
    ctx.db().set("/meta/filebase", args[2], "macro");
    co_return;
}

// Pings every resident; a device that does not answer within the timeout
// fails without aborting the script.
MacroTask auto_test(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("auto_test", args, 0);
    std::vector<std::pair<std::string, std::shared_ptr<PendingCommand>>> pings;
    for (const auto& dev : ctx.devices()) pings.emplace_back(dev, ctx.issue(dev, "ping"));
    const SimTime deadline = ctx.now() + ctx.config().autotest_timeout;
    Until all_answered{[&] {
        if (ctx.now() >= deadline) return true;
        for (auto& [_, p] : pings) {
            if (p->poll() == Progress::Pending) return false;
        }
        return true;
    }};
    co_await all_answered;
    for (auto& [dev, p] : pings) {
        const bool ok = p->poll() == Progress::Done;
        ctx.db().set("/autotest/" + dev, std::string(ok ? "pass" : "fail"), "macro");
    }
}

MacroTask uni_start(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("uni_start", args, 1);
    auto ack = ctx.device("Unipa", "start " + args[0]);
    co_await ack;
}

MacroTask uni_stop(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("uni_stop", args, 0);
    auto ack = ctx.device("Unipa", "stop");
    co_await ack;
}

MacroTask shut_set(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("shut_set", args, 2);
    auto ack = ctx.device("Shutter", "set " + args[0] + " " + args[1]);
    co_await ack;
}

MacroTask temp_ist(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("temp_ist", args, 4);
    auto tol = parse_real(args[0]);
    auto hold = parse_real(args[1]);
    if (!tol || !hold || !parse_real(args[3])) {
        throw Error(Errc::DispatchError, "temp_ist: numeric arguments expected");
    }
    if (*tol <= 0.0) throw Error(Errc::DispatchError, "temp_ist: tol must be positive");
    if (*hold < 0.0) throw Error(Errc::DispatchError, "temp_ist: hold must not be negative");
    auto ack = ctx.device("Temp", fmt::format("ist {} {} {} {}", args[0], args[1], args[2], args[3]));
    co_await ack;
}

// meas_2sh(detA, detB, count_limit, time_limit, repeats, start_sample, mode)
MacroTask meas_2sh(MacroContext& ctx, std::vector<std::string> args, bool) {
    expect_args("meas_2sh", args, 7);
    const std::string det_a = args[0];
    const std::string det_b = args[1];
    auto count = parse_int(args[2]);
    auto time = parse_real(args[3]);
    auto repeats = parse_int(args[4]);
    auto first = parse_int(args[5]);
    if (!count || !time || !repeats || !first || *repeats < 0 || *first < 1) {
        throw Error(Errc::DispatchError, "meas_2sh: bad numeric argument");
    }
    if (!ctx.db().get_text("/tofa/file")) throw Error(Errc::DispatchError, "meas_2sh: no file base set");

    const int last = ctx.config().sample_count;
    if (*first > last) {
        auto warn = ctx.device("Tofa", fmt::format("note warning: start sample {} beyond table end {}",
                                                   *first, last));
        co_await warn;
        co_return;
    }
    for (std::int64_t sample = *first; sample <= last; ++sample) {
        for (std::int64_t rep = 1; rep <= *repeats; ++rep) {
            auto moved = ctx.device("Motor", fmt::format("move_sample {}", sample));
            co_await moved;
            for (int leg = 0; leg < 2; ++leg) {
                const std::string& open = leg == 0 ? det_a : det_b;
                const std::string& closed = leg == 0 ? det_b : det_a;
                auto opened = ctx.device("Shutter", "set " + open + " inbeam");
                co_await opened;
                auto shut = ctx.device("Shutter", "set " + closed + " outbeam");
                co_await shut;
                std::string tag = fmt::format("s{:02}_{}", sample, open);
                if (*repeats > 1) tag += fmt::format("_r{}", rep);
                auto measured = ctx.device("Tofa", fmt::format("start {} {} {}", args[2], args[3], tag));
                co_await measured;
            }
        }
    }
}

}  // namespace

std::map<std::string, MacroFn, std::less<>> standard_library() {
    return {
        {"usf_set", usf_set},     {"auto_test", auto_test}, {"uni_start", uni_start},
        {"uni_stop", uni_stop},   {"shut_set", shut_set},   {"temp_ist", temp_ist},
        {"meas_2sh", meas_2sh},
    };
}

}  // namespace beamctl::macros
