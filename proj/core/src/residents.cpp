// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/residents.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "beamctl/error.hpp"

namespace beamctl::residents {

namespace {

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string join(const std::vector<std::string>& words, std::string_view sep = " ") {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += sep;
        out += w;
    }
    return out;
}

DeviceDescriptor make_descriptor(std::string name, DeviceKind kind, std::string_view ns) {
    return {std::move(name), kind, rtdb::VarPath::parse(ns)};
}

}  // namespace

std::string_view kind_name(DeviceKind k) noexcept {
    switch (k) {
    case DeviceKind::Motor: return "motor";
    case DeviceKind::Shutter: return "shutter";
    case DeviceKind::Temp: return "temp";
    case DeviceKind::Daq: return "daq";
    case DeviceKind::EnvMon: return "envmon";
    }
    return "?";
}

std::optional<double> parse_real(std::string_view s) noexcept {
    double v{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) noexcept {
    std::int64_t v{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// ── ProtocolWriter ──────────────────────────────────────────────────

void ProtocolWriter::open(const std::filesystem::path& file, bool truncate) {
    close();
    std::error_code ec;
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path(), ec);
    out_.open(file, truncate ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app);
    if (!out_.is_open()) {
        throw Error(Errc::IoError, "cannot open protocol file " + file.string());
    }
}

void ProtocolWriter::close() {
    if (out_.is_open()) out_.close();
}

void ProtocolWriter::write(SimTime t, std::string_view device, std::string_view event) {
    if (!out_.is_open()) return;
    out_ << format_iso8601(t) << '\t' << device << '\t' << event << '\n';
    out_.flush();
}

// ── Resident ────────────────────────────────────────────────────────

Resident::Resident(DeviceDescriptor desc, ResidentContext ctx)
    : desc_(std::move(desc)), ctx_(ctx) {
    commands_ = ctx_.db.subscribe(desc_.db_namespace.child("cmd"));
    // A relaunched resident picks its protocol back up where it left off.
    if (auto prot = ctx_.db.get_text(ns("prot")); prot && !prot->empty()) {
        try {
            protocol_.open(ctx_.root / *prot, false);
        } catch (const Error&) {
            ctx_.db.set(ns("status"), std::string("error: cannot reopen protocol ") + *prot, name());
        }
    }
    ctx_.db.set(ns("busy"), std::int64_t{0}, name());
}

std::string Resident::ns(std::string_view leaf) const {
    return desc_.db_namespace.str() + "/" + std::string(leaf);
}

void Resident::tick(Duration dt) {
    while (auto e = commands_->try_next()) {
        const auto* text = std::get_if<std::string>(&e->value);
        if (!text) continue;
        auto words = split_words(*text);
        Request req{e->revision, {}, {}};
        if (!words.empty()) {
            req.command = words.front();
            req.args.assign(words.begin() + 1, words.end());
        }
        queue_.push_back(std::move(req));
    }
    while (!queue_.empty()) {
        if (held_ && !concurrent(queue_.front().command)) break;
        Request req = std::move(queue_.front());
        queue_.pop_front();
        dispatch(req);
    }
    advance(dt);
}

void Resident::dispatch(const Request& req) {
    if (req.command.empty()) {
        fail(req, "empty command");
    } else if (req.command == "ping") {
        reply(req);
    } else if (req.command == "note") {
        record(join(req.args));
        reply(req);
    } else if (req.command == "open_prot") {
        open_protocol(req);
    } else {
        begin(req);
    }
}

void Resident::open_protocol(const Request& req) {
    if (req.args.size() > 1) {
        fail(req, "open_prot takes at most one path");
        return;
    }
    std::string rel = req.args.empty() ? "prot/" + name() + ".txt" : req.args.front();
    try {
        protocol_.open(ctx_.root / rel, true);
    } catch (const Error& e) {
        fail(req, e.what());
        return;
    }
    db().set(ns("prot"), rel, name());
    record("protocol opened " + rel);
    reply(req);
}

void Resident::ack(std::uint64_t rev, const std::string& status) {
    db().set(ns("status"), status, name());
    db().set(ns("busy"), std::int64_t{held_ ? 1 : 0}, name());
    db().set(ns("ack"), std::to_string(rev) + " " + status, name());
}

void Resident::reply(const Request& req, std::string status) { ack(req.revision, status); }

void Resident::hold(const Request& req) {
    held_ = req.revision;
    db().set(ns("busy"), std::int64_t{1}, name());
}

void Resident::finish(std::string status) {
    if (!held_) return;
    const auto rev = *held_;
    held_.reset();
    ack(rev, status);
}

void Resident::record(std::string_view event) { protocol_.write(now(), name(), event); }

// ── Motor ───────────────────────────────────────────────────────────

MotorResident::MotorResident(ResidentContext ctx, MotorParams params)
    : Resident(make_descriptor("Motor", DeviceKind::Motor, "/motor"), ctx), params_(params) {
    position_ = db().get_real("/motor/pos/changer").value_or(0.0);
    publish_position();
}

void MotorResident::publish_position() { db().set("/motor/pos/changer", position_, name()); }

void MotorResident::begin(const Request& req) {
    if (req.command == "getpos") {
        publish_position();
        record(fmt::format("getpos changer={:.3f}", position_));
        reply(req);
        return;
    }
    std::optional<double> target;
    if (req.command == "move_sample" && req.args.size() == 1) {
        auto n = parse_int(req.args[0]);
        if (!n || *n < 1 || *n > params_.sample_count) {
            fail(req, "no sample position " + req.args[0]);
            return;
        }
        target = static_cast<double>(*n) * params_.sample_pitch;
    } else if (req.command == "move" && req.args.size() == 1) {
        target = parse_real(req.args[0]);
        if (!target) {
            fail(req, "bad position " + req.args[0]);
            return;
        }
    } else {
        fail(req, "unknown command " + req.command);
        return;
    }
    record(fmt::format("{} {}", req.command, join(req.args)));
    target_ = target;
    hold(req);
    advance(Duration{0});
}

void MotorResident::advance(Duration dt) {
    if (!target_) return;
    const double step = params_.speed * to_seconds(dt);
    const double diff = *target_ - position_;
    if (std::abs(diff) <= step || diff == 0.0) {
        position_ = *target_;
        target_.reset();
        publish_position();
        record(fmt::format("moved changer to {:.3f}", position_));
        finish();
    } else {
        position_ += diff > 0 ? step : -step;
    }
}

// ── Shutter ─────────────────────────────────────────────────────────

ShutterResident::ShutterResident(ResidentContext ctx, ShutterParams params)
    : Resident(make_descriptor("Shutter", DeviceKind::Shutter, "/shutter"), ctx),
      params_(std::move(params)) {
    for (const auto& id : params_.ids) {
        const auto path = "/shutter/" + id + "/pos";
        if (!db().find(path)) db().set(path, std::string("inbeam"), name());
    }
}

void ShutterResident::begin(const Request& req) {
    if (req.command != "set") {
        fail(req, "unknown command " + req.command);
        return;
    }
    if (req.args.size() != 2) {
        fail(req, "set needs <shutter> <inbeam|outbeam>");
        return;
    }
    const auto& id = req.args[0];
    const auto& pos = req.args[1];
    if (std::find(params_.ids.begin(), params_.ids.end(), id) == params_.ids.end()) {
        fail(req, "UnknownShutter: " + id);
        return;
    }
    if (pos != "inbeam" && pos != "outbeam") {
        fail(req, "bad shutter position " + pos);
        return;
    }
    if (db().get_text("/shutter/" + id + "/pos") == pos) {
        record(id + " " + pos);
        reply(req);
        return;
    }
    move_ = Move{id, pos, params_.travel};
    hold(req);
}

void ShutterResident::advance(Duration dt) {
    if (!move_) return;
    move_->remaining -= dt;
    if (move_->remaining > Duration{0}) return;
    db().set("/shutter/" + move_->id + "/pos", move_->position, name());
    record(move_->id + " " + move_->position);
    move_.reset();
    finish();
}

// ── Temperature controller ──────────────────────────────────────────

TempResident::TempResident(ResidentContext ctx, TempParams params)
    : Resident(make_descriptor("Temp", DeviceKind::Temp, "/temp"), ctx), params_(params) {
    temperature_ = db().get_real("/temp/value").value_or(params_.ambient);
    setpoint_ = db().get_real("/temp/setpoint").value_or(temperature_);
    db().set("/temp/setpoint", setpoint_, name());
    publish(true);
}

void TempResident::publish(bool force) {
    if (force || std::abs(temperature_ - published_) >= 1e-4) {
        db().set("/temp/value", temperature_, name());
        published_ = temperature_;
    }
    const double tol = ist_ ? ist_->tolerance : 1.0;
    const std::int64_t stable = std::abs(temperature_ - setpoint_) <= tol ? 1 : 0;
    if (force || stable != stable_flag_) {
        db().set("/temp/stable", stable, name());
        stable_flag_ = stable;
    }
}

void TempResident::begin(const Request& req) {
    if (req.command == "setpoint" && req.args.size() == 1) {
        auto sp = parse_real(req.args[0]);
        if (!sp) {
            fail(req, "bad setpoint " + req.args[0]);
            return;
        }
        setpoint_ = *sp;
        db().set("/temp/setpoint", setpoint_, name());
        record("setpoint " + req.args[0]);
        reply(req);
        return;
    }
    if (req.command != "ist") {
        fail(req, "unknown command " + req.command);
        return;
    }
    if (req.args.size() != 4) {
        fail(req, "ist needs <tol> <hold> <name> <setpoint>");
        return;
    }
    auto tol = parse_real(req.args[0]);
    auto hold_s = parse_real(req.args[1]);
    auto sp = parse_real(req.args[3]);
    if (!tol || !hold_s || !sp) {
        fail(req, "bad ist arguments");
        return;
    }
    if (*tol <= 0.0) {
        fail(req, "tol must be positive");
        return;
    }
    if (*hold_s < 0.0) {
        fail(req, "hold must not be negative");
        return;
    }
    setpoint_ = *sp;
    db().set("/temp/setpoint", setpoint_, name());
    ist_ = Stabilize{*tol, seconds_to_duration(*hold_s), req.args[2]};
    record(fmt::format("ist {} setpoint={} tol={} hold={}", req.args[2], req.args[3], req.args[0],
                       req.args[1]));
    hold(req);
    publish(true);
    if (ist_->hold == Duration{0} && std::abs(temperature_ - setpoint_) <= ist_->tolerance) {
        record(fmt::format("stable {} at setpoint {}", ist_->name, setpoint_));
        ist_.reset();
        finish();
    }
}

void TempResident::advance(Duration dt) {
    temperature_ = setpoint_ + (temperature_ - setpoint_) * std::exp(-to_seconds(dt) / params_.tau);
    publish(false);
    if (!ist_) return;
    ist_->elapsed += dt;
    if (std::abs(temperature_ - setpoint_) <= ist_->tolerance) {
        ist_->stable_for += dt;
    } else {
        ist_->stable_for = Duration{0};
    }
    if (ist_->stable_for >= ist_->hold) {
        publish(true);
        record(fmt::format("stable {} at setpoint {}", ist_->name, setpoint_));
        ist_.reset();
        finish();
    } else if (ist_->elapsed >= params_.timeout) {
        ist_.reset();
        finish("error: timeout waiting for temperature");
    }
}

// ── DAQ ─────────────────────────────────────────────────────────────

DaqResident::DaqResident(ResidentContext ctx, SpectrumModel model)
    : Resident(make_descriptor("Tofa", DeviceKind::Daq, "/tofa"), ctx),
      model_(std::move(model)),
      sampler_(model_) {
    hist_ = Histogram::zeros(model_.dims());
    auto flags = db().get_text("/tofa/flags").value_or("temperature");
    std::string_view rest = flags;
    while (!rest.empty()) {
        auto comma = rest.find(',');
        auto f = rest.substr(0, comma);
        if (!f.empty()) flags_.emplace_back(f);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    db().set("/tofa/flags", join(flags_, ","), name());
    set_state("idle");
}

std::filesystem::path DaqResident::dat_path(const std::filesystem::path& root, std::string_view stem) {
    return root / (std::string(stem) + ".dat");
}

bool DaqResident::concurrent(std::string_view command) const noexcept {
    return command == "ping" || command == "note" || command == "start" || command == "stop";
}

Histogram DaqResident::sample() const {
    std::lock_guard lk(hist_mu_);
    return hist_;
}

std::uint64_t DaqResident::events_generated() const {
    std::lock_guard lk(hist_mu_);
    return events_;
}

bool DaqResident::has_data() const {
    std::lock_guard lk(hist_mu_);
    return has_data_;
}

void DaqResident::set_state(std::string_view s) {
    if (state_ == s) return;
    state_ = std::string(s);
    db().set("/tofa/state", state_, name());
}

bool DaqResident::gated() {
    const bool temp_gate = std::find(flags_.begin(), flags_.end(), "temperature") != flags_.end();
    return temp_gate && db().get_int("/temp/stable").value_or(0) != 1;
}

void DaqResident::begin(const Request& req) {
    const auto& cmd = req.command;
    if (cmd == "file") {
        if (req.args.size() != 1 || req.args[0].find('/') != std::string::npos) {
            fail(req, "file needs one base name");
            return;
        }
        db().set("/tofa/file", req.args[0], name());
        record("file " + req.args[0]);
        reply(req);
    } else if (cmd == "flagoff" || cmd == "flagon") {
        if (req.args.size() != 1) {
            fail(req, cmd + " needs a flag name");
            return;
        }
        const auto& flag = req.args[0];
        std::erase(flags_, flag);
        if (cmd == "flagon") flags_.push_back(flag);
        db().set("/tofa/flags", join(flags_, ","), name());
        record(cmd + " " + flag);
        reply(req);
    } else if (cmd == "stop") {
        if (run_) complete("ok stopped");
        reply(req);
    } else if (cmd == "start") {
        if (run_) {
            fail(req, "busy: acquisition in progress");
            return;
        }
        auto base = db().get_text("/tofa/file");
        if (!base || base->empty()) {
            fail(req, "no file base set");
            return;
        }
        if (req.args.size() < 2 || req.args.size() > 3) {
            fail(req, "start needs <count_limit> <time_limit> [tag]");
            return;
        }
        auto count = parse_int(req.args[0]);
        auto time = parse_real(req.args[1]);
        if (!count || *count < 0 || !time || *time < 0.0) {
            fail(req, "bad acquisition limits");
            return;
        }
        std::string stem = *base;
        if (req.args.size() == 3) stem += "_" + req.args[2];

        Rng rng(mix_seed(mix_seed(ctx().run_seed, fnv1a64(name())), fnv1a64(stem)));
        const double first = rng.exponential(model_.monitor_rate);
        {
            std::lock_guard lk(hist_mu_);
            hist_ = Histogram::zeros(model_.dims());
            events_ = 0;
            has_data_ = true;
        }
        run_ = Acquisition{static_cast<std::uint64_t>(*count), *time, stem, std::move(rng), first};
        record(fmt::format("start {} count_limit={} time_limit={}", stem, req.args[0], req.args[1]));
        hold(req);
        if (*count == 0 || *time == 0.0) {
            complete("ok");
        } else {
            set_state("acquiring");
        }
    } else {
        fail(req, "unknown command " + cmd);
    }
}

void DaqResident::advance(Duration dt) {
    if (!run_) return;
    if (gated()) {
        set_state("gated");
        return;
    }
    set_state("acquiring");
    auto& a = *run_;
    double t0, t1;
    std::uint64_t monitor;
    {
        std::lock_guard lk(hist_mu_);
        t0 = hist_.live_time;
        monitor = hist_.monitor;
    }
    t1 = std::min(t0 + to_seconds(dt), a.time_limit);
    bool done = t1 >= a.time_limit;
    while (a.next_monitor_at <= t1) {
        ++monitor;
        if (monitor >= a.count_limit) {
            t1 = a.next_monitor_at;
            done = true;
            break;
        }
        a.next_monitor_at += a.rng.exponential(model_.monitor_rate);
    }
    const auto n = a.rng.poisson(model_.event_rate * (t1 - t0));
    std::vector<std::uint64_t> cells;
    cells.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) cells.push_back(sampler_.draw(a.rng));
    {
        std::lock_guard lk(hist_mu_);
        for (auto c : cells) ++hist_.counts[c];
        events_ += n;
        hist_.monitor = monitor;
        hist_.live_time = t1;
    }
    if (done) complete("ok");
}

void DaqResident::complete(std::string status) {
    Histogram h = sample();
    const auto path = dat_path(ctx().root, run_->stem);
    {
        std::error_code ec;
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << h.to_dat();
        if (!out) status = "error: cannot write " + path.string();
    }
    record(fmt::format("measured {} monitor={} live_time={:.6f} counts={}", run_->stem, h.monitor,
                       h.live_time, h.total()));
    db().set("/tofa/monitor", static_cast<std::int64_t>(h.monitor), name());
    db().set("/tofa/live_time", h.live_time, name());
    db().set("/tofa/counts", static_cast<std::int64_t>(h.total()), name());
    db().set("/tofa/last_file", path.filename().string(), name());
    run_.reset();
    set_state("idle");
    finish(std::move(status));
}

// ── Environment monitor ─────────────────────────────────────────────

EnvMonResident::EnvMonResident(ResidentContext ctx, EnvMonParams params)
    : Resident(make_descriptor("Unipa", DeviceKind::EnvMon, "/unipa"), ctx), params_(params) {
    running_ = db().get_int("/unipa/running").value_or(0) == 1;
    task_ = db().get_text("/unipa/task").value_or("");
    restored_ = running_;
    next_poll_ = now() + params_.period;
    if (!running_) db().set("/unipa/running", std::int64_t{0}, name());
}

void EnvMonResident::begin(const Request& req) {
    if (req.command == "start") {
        if (req.args.size() != 1) {
            fail(req, "start needs a task name");
            return;
        }
        if (running_ && !(restored_ && req.args[0] == task_)) {
            fail(req, "AlreadyRunning: task " + task_);
            return;
        }
        restored_ = false;
        running_ = true;
        task_ = req.args[0];
        next_poll_ = now() + params_.period;
        db().set("/unipa/running", std::int64_t{1}, name());
        db().set("/unipa/task", task_, name());
        record("start " + task_);
        reply(req);
    } else if (req.command == "stop") {
        restored_ = false;
        if (running_) {
            running_ = false;
            db().set("/unipa/running", std::int64_t{0}, name());
            record("stop " + task_);
        }
        reply(req);
    } else {
        fail(req, "unknown command " + req.command);
    }
}

void EnvMonResident::advance(Duration) {
    while (running_ && now() >= next_poll_) {
        ++samples_;
        const double t = to_seconds(next_poll_.time_since_epoch());
        const double vacuum = 1.0e-3 * (1.0 + 0.05 * std::sin(t / 600.0));
        const double water = 18.0 + 0.5 * std::sin(t / 3600.0);
        record(fmt::format("sample {} vacuum={:.3e} water={:.2f}", task_, vacuum, water));
        db().set("/unipa/vacuum", vacuum, name());
        next_poll_ += params_.period;
    }
}

}  // namespace beamctl::residents
