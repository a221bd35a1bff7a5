// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The interface side: a kernel host plus the request handler shared by the
// stream and dual-port transports. Frames are one JSON object per line:
//
//     request  {"id": 7, "verb": "get", "path": "/meta/user"}
//     reply    {"id": 7, "ok": true, "result": {...}}
//              {"id": 7, "ok": false, "error": {"code": "NotFound", "message": "..."}}
//     event    {"event": "change", "subscription": 1, "entry": {...}}
//
// See docs/protocol.md for every verb.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamctl/dpm.hpp"
#include "beamctl/faults.hpp"
#include "beamctl/rtdb.hpp"
#include "beamctl/supervisor.hpp"

namespace beamctl::gateway {

using Json = nlohmann::json;

inline constexpr std::uint16_t kDefaultPort = 4690;

/// {"type": "int"|"real"|"text"|"int_array", "value": ...}
Json value_to_json(const rtdb::VarValue& v);
/// Throws Error(BadRequest).
rtdb::VarValue value_from_json(const Json& j);
Json entry_to_json(const rtdb::DbEntry& e);

std::string base64_encode(std::string_view bytes);
/// Throws Error(BadRequest).
std::string base64_decode(std::string_view text);

struct HostOptions {
    supervisor::SupervisorConfig supervisor;
    /// Simulated seconds per wall second; 0 runs as fast as possible.
    double clock_factor = 0.0;
    std::optional<FaultModel> faults;
};

/// Owns the supervisor and drives it from a background thread. The clock
/// only moves while a run is active or the kernel is hung, so an idle
/// kernel stays put and request sequences are reproducible.
class KernelHost {
public:
    explicit KernelHost(HostOptions options);
    ~KernelHost();

    KernelHost(const KernelHost&) = delete;
    KernelHost& operator=(const KernelHost&) = delete;

    void start_driver();
    void stop_driver();

    /// Runs `fn(supervisor)` under the host lock.
    template <class F>
    decltype(auto) locked(F&& fn) {
        std::unique_lock lk(mu_);
        struct Wake {
            KernelHost* host;
            ~Wake() { host->publish(); }
        } wake{this};
        return fn(*sup_);
    }

    /// Blocks until nothing is running or hung. False on wall timeout.
    bool wait_settled(std::chrono::milliseconds timeout);

    bool nonfatal_blocked() const noexcept { return blocked_.load(); }
    bool hung() const noexcept { return hung_.load(); }
    std::uint64_t generation() const noexcept { return generation_.load(); }
    void inject_fault(FaultKind kind);
    void reset_nonfatal();

    const HostOptions& options() const noexcept { return options_; }

private:
    void drive();
    bool active() const;
    void publish();

    HostOptions options_;
    VirtualClock clock_{};
    std::unique_ptr<supervisor::Supervisor> sup_;
    std::optional<FaultProcess> faults_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::atomic<bool> blocked_{false};
    std::atomic<bool> hung_{false};
    std::atomic<std::uint64_t> generation_{0};
    std::atomic<bool> stop_{false};
    std::thread driver_;
};

/// Per-connection request handler; transport independent.
class Session {
public:
    explicit Session(KernelHost& host) : host_(host) {}

    /// Malformed frames get an error reply with id 0.
    Json handle_line(std::string_view line);
    Json handle(const Json& request);
    /// Subscription events queued since the last call.
    std::vector<Json> drain_events();

private:
    Json dispatch(const std::string& verb, const Json& req, supervisor::Supervisor& sup);

    KernelHost& host_;
    std::map<std::int64_t, std::shared_ptr<rtdb::Subscription>> subs_;
    std::int64_t next_sub_ = 1;
};

Json ok_reply(std::int64_t id, Json result);
Json error_reply(std::int64_t id, std::string_view code, std::string_view message);

/// TCP, one thread per connection. While a nonfatal fault is active, new
/// connections are accepted and closed at once and existing ones are not
/// read. A kernel restart drops every connection.
class StreamServer {
public:
    /// Port 0 picks a free port. Throws Error(BindError).
    StreamServer(KernelHost& host, std::string address = "127.0.0.1", std::uint16_t port = kDefaultPort);
    ~StreamServer();

    std::uint16_t port() const noexcept { return port_; }
    void start();
    void stop();

private:
    void accept_loop();
    void serve(int fd);

    KernelHost& host_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stop_{false};
    std::thread acceptor_;
    std::mutex conn_mu_;
    std::vector<std::thread> connections_;
};

/// Serves the single client of a dual-port window.
class DpmServer {
public:
    /// Creates (and zeroes) the window file.
    DpmServer(KernelHost& host, const std::filesystem::path& window);
    ~DpmServer();

    void start();
    void stop();

private:
    void loop();

    KernelHost& host_;
    dpm::DpmWindow window_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

/// Client side of either transport.
class Client {
public:
    virtual ~Client() = default;

    /// Assigns an id, sends, and waits for the matching reply. Events that
    /// arrive meanwhile are queued. Throws Error(Timeout) or Error(StreamClosed).
    Json request(Json req, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    /// Sends a raw line; the next frame is returned as is.
    Json raw(std::string_view line, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    std::optional<Json> next_event(std::chrono::milliseconds timeout);

protected:
    virtual void send_line(const std::string& line) = 0;
    /// nullopt on timeout. Throws Error(StreamClosed).
    virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;

private:
    std::int64_t next_id_ = 1;
    std::deque<Json> events_;
};

class StreamClient final : public Client {
public:
    /// Throws Error(IoError).
    StreamClient(const std::string& host, std::uint16_t port);
    ~StreamClient() override;

protected:
    void send_line(const std::string& line) override;
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

private:
    int fd_ = -1;
    std::string buffer_;
};

class DpmClient final : public Client {
public:
    explicit DpmClient(const std::filesystem::path& window);

protected:
    void send_line(const std::string& line) override;
    std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

private:
    dpm::DpmWindow window_;
    dpm::MessageWriter writer_;
    dpm::MessageReader reader_;
};

/// "host:port", ":port" or "host" (default port).
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint);

}  // namespace beamctl::gateway
