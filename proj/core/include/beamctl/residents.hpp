// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Simulated device daemons. A resident only ever sees the variable database,
// the simulated clock and its own files; it has no way to reach the gateway.
//
// Command protocol, per device namespace <ns>:
//   <ns>/cmd     Text  "command arg..."   written by an interface
//   <ns>/busy    Int   1 while a command is executing
//   <ns>/status  Text  "ok" or "error: ..." for the latest completed command
//   <ns>/ack     Text  "<cmd revision> <status>" once per completed command
//   <ns>/prot    Text  open protocol file, relative to the kernel root

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "beamctl/clock.hpp"
#include "beamctl/histogram.hpp"
#include "beamctl/rtdb.hpp"

namespace beamctl::residents {

enum class DeviceKind { Motor, Shutter, Temp, Daq, EnvMon };

std::string_view kind_name(DeviceKind k) noexcept;

struct DeviceDescriptor {
    std::string name;  // Motor, Shutter, Temp, Tofa, Unipa
    DeviceKind kind;
    rtdb::VarPath db_namespace;
};

struct MotorParams {
    double speed = 5.0;          // units per second
    double sample_pitch = 10.0;  // changer units between sample positions
    int sample_count = 12;
};

struct ShutterParams {
    std::vector<std::string> ids = {"vanady1_1det", "vanady1_2det", "vanady2_1det", "vanady2_2det"};
    Duration travel = std::chrono::seconds(2);
};

struct TempParams {
    double ambient = 20.0;  // initial temperature, °C
    double tau = 5.0;       // first-order lag time constant, s
    Duration timeout = std::chrono::hours(1);
};

struct EnvMonParams {
    Duration period = std::chrono::seconds(10);
};

/// What every resident is given. Note the absence of any network handle.
struct ResidentContext {
    rtdb::Database& db;
    const VirtualClock& clock;
    std::filesystem::path root;
    std::uint64_t run_seed = 1;
};

/// `<iso8601>\t<device>\t<event>` lines, appended and flushed one by one.
class ProtocolWriter {
public:
    ProtocolWriter() = default;
    /// Throws Error(IoError).
    void open(const std::filesystem::path& file, bool truncate);
    void close();
    bool is_open() const noexcept { return out_.is_open(); }
    void write(SimTime t, std::string_view device, std::string_view event);

private:
    std::ofstream out_;
};

class Resident {
public:
    Resident(DeviceDescriptor desc, ResidentContext ctx);
    virtual ~Resident() = default;

    Resident(const Resident&) = delete;
    Resident& operator=(const Resident&) = delete;

    /// Drains queued commands and advances the simulation by `dt`.
    void tick(Duration dt);

    const DeviceDescriptor& descriptor() const noexcept { return desc_; }
    const std::string& name() const noexcept { return desc_.name; }
    bool busy() const noexcept { return held_.has_value(); }

    std::string ns(std::string_view leaf) const;

protected:
    struct Request {
        std::uint64_t revision = 0;
        std::string command;
        std::vector<std::string> args;
    };

    /// Device-specific command. Either reply() immediately or hold() the
    /// request and finish() it from advance().
    virtual void begin(const Request& req) = 0;
    virtual void advance(Duration dt) { (void)dt; }
    /// Commands that may run while another one is held.
    virtual bool concurrent(std::string_view command) const noexcept {
        return command == "ping" || command == "note";
    }

    void reply(const Request& req, std::string status = "ok");
    void fail(const Request& req, std::string_view message) { reply(req, "error: " + std::string(message)); }
    void hold(const Request& req);
    void finish(std::string status = "ok");

    void record(std::string_view event);
    SimTime now() const { return ctx_.clock.now(); }

    rtdb::Database& db() { return ctx_.db; }
    const ResidentContext& ctx() const { return ctx_; }

private:
    void dispatch(const Request& req);
    void ack(std::uint64_t rev, const std::string& status);
    void open_protocol(const Request& req);

    DeviceDescriptor desc_;
    ResidentContext ctx_;
    std::shared_ptr<rtdb::Subscription> commands_;
    std::deque<Request> queue_;
    std::optional<std::uint64_t> held_;
    ProtocolWriter protocol_;
};

class MotorResident final : public Resident {
public:
    MotorResident(ResidentContext ctx, MotorParams params);

    double position() const noexcept { return position_; }

private:
    void begin(const Request& req) override;
    void advance(Duration dt) override;
    void publish_position();

    MotorParams params_;
    double position_ = 0.0;
    std::optional<double> target_;
};

class ShutterResident final : public Resident {
public:
    ShutterResident(ResidentContext ctx, ShutterParams params);

private:
    void begin(const Request& req) override;
    void advance(Duration dt) override;

    ShutterParams params_;
    struct Move {
        std::string id;
        std::string position;
        Duration remaining;
    };
    std::optional<Move> move_;
};

class TempResident final : public Resident {
public:
    TempResident(ResidentContext ctx, TempParams params);

    double temperature() const noexcept { return temperature_; }

private:
    void begin(const Request& req) override;
    void advance(Duration dt) override;
    void publish(bool force);

    TempParams params_;
    double temperature_;
    double setpoint_;
    double published_ = -1e300;
    std::int64_t stable_flag_ = -1;
    struct Stabilize {
        double tolerance;
        Duration hold;
        std::string name;
        Duration elapsed{0};
        Duration stable_for{0};
    };
    std::optional<Stabilize> ist_;
};

/// Time-of-flight / PSD acquisition.
class DaqResident final : public Resident {
public:
    DaqResident(ResidentContext ctx, SpectrumModel model);

    /// Consistent copy of histogram memory, safe to call from any thread.
    Histogram sample() const;
    /// Detector events generated into the current histogram so far.
    std::uint64_t events_generated() const;
    bool has_data() const;
    bool acquiring() const noexcept { return run_.has_value(); }

    static std::filesystem::path dat_path(const std::filesystem::path& root, std::string_view stem);

private:
    void begin(const Request& req) override;
    void advance(Duration dt) override;
    bool concurrent(std::string_view command) const noexcept override;
    bool gated();
    void complete(std::string status);
    void set_state(std::string_view s);

    SpectrumModel model_;
    EventSampler sampler_;
    std::vector<std::string> flags_;

    struct Acquisition {
        std::uint64_t count_limit;
        double time_limit;
        std::string stem;
        Rng rng;
        double next_monitor_at;
    };
    std::optional<Acquisition> run_;
    std::string state_;

    mutable std::mutex hist_mu_;
    Histogram hist_;
    std::uint64_t events_ = 0;
    bool has_data_ = false;
};

/// Environment monitor: samples parameters into its protocol while running.
class EnvMonResident final : public Resident {
public:
    EnvMonResident(ResidentContext ctx, EnvMonParams params);

    bool running() const noexcept { return running_; }

private:
    void begin(const Request& req) override;
    void advance(Duration dt) override;

    EnvMonParams params_;
    bool running_ = false;
    // Task restored from the database after a restart; the replayed start
    // statement reattaches to it once.
    bool restored_ = false;
    std::string task_;
    SimTime next_poll_{};
    std::uint64_t samples_ = 0;
};

/// Parses a number argument; nullopt on junk.
std::optional<double> parse_real(std::string_view s) noexcept;
std::optional<std::int64_t> parse_int(std::string_view s) noexcept;

}  // namespace beamctl::residents
