// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/gateway.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <algorithm>
#include <charconv>
#include <cstring>

#include "beamctl/error.hpp"
#include "beamctl/viz.hpp"

namespace beamctl::gateway {

// ── value encoding ──────────────────────────────────────────────────

Json value_to_json(const rtdb::VarValue& v) {
    return std::visit(
        [](const auto& x) -> Json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::int64_t>) {
                return {{"type", "int"}, {"value", x}};
            } else if constexpr (std::is_same_v<T, double>) {
                return {{"type", "real"}, {"value", x}};
            } else if constexpr (std::is_same_v<T, std::string>) {
                return {{"type", "text"}, {"value", x}};
            } else {
                return {{"type", "int_array"}, {"value", x}};
            }
        },
        v);
}

rtdb::VarValue value_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("type") || !j.contains("value") || !j["type"].is_string()) {
        throw Error(Errc::BadRequest, "value must be {\"type\": ..., \"value\": ...}");
    }
    const auto type = j["type"].get<std::string>();
    const Json& v = j["value"];
    if (type == "int" && v.is_number_integer()) return v.get<std::int64_t>();
    if (type == "real" && v.is_number()) return v.get<double>();
    if (type == "text" && v.is_string()) return v.get<std::string>();
    if (type == "int_array" && v.is_array()) {
        rtdb::IntArray out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) throw Error(Errc::BadRequest, "int_array holds a non-integer");
            out.push_back(e.get<std::int64_t>());
        }
        return out;
    }
    throw Error(Errc::BadRequest, "value does not match type '" + type + "'");
}

Json entry_to_json(const rtdb::DbEntry& e) {
    Json j = value_to_json(e.value);
    j["path"] = e.path.str();
    j["revision"] = e.revision;
    j["wall_time"] = format_iso8601(e.wall_time);
    j["writer"] = e.writer;
    return j;
}

std::string base64_encode(std::string_view bytes) {
    using namespace boost::archive::iterators;
    using It = base64_from_binary<transform_width<std::string_view::const_iterator, 6, 8>>;
    std::string out(It(bytes.begin()), It(bytes.end()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

std::string base64_decode(std::string_view text) {
    using namespace boost::archive::iterators;
    using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
    if (text.size() % 4 != 0) throw Error(Errc::BadRequest, "base64 length is not a multiple of 4");
    std::size_t pad = 0;
    while (pad < 2 && pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
    std::string body(text);
    std::replace(body.end() - static_cast<std::ptrdiff_t>(pad), body.end(), '=', 'A');
    try {
        std::string out(It(body.cbegin()), It(body.cend()));
        out.resize(text.size() / 4 * 3 - pad);
        return out;
    } catch (const std::exception&) {
        throw Error(Errc::BadRequest, "invalid base64");
    }
}

// ── KernelHost ──────────────────────────────────────────────────────

KernelHost::KernelHost(HostOptions options) : options_(std::move(options)) {
    if (options_.clock_factor < 0.0) throw Error(Errc::InvalidValue, "clock factor must not be negative");
    sup_ = std::make_unique<supervisor::Supervisor>(options_.supervisor, clock_);
    sup_->kernel().launch_residents();
    if (options_.faults) faults_.emplace(*options_.faults, clock_.now());
    publish();
}

KernelHost::~KernelHost() { stop_driver(); }

void KernelHost::start_driver() {
    if (driver_.joinable()) return;
    stop_ = false;
    driver_ = std::thread([this] { drive(); });
}

void KernelHost::stop_driver() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    if (driver_.joinable()) driver_.join();
}

bool KernelHost::active() const {
    return sup_->hung() || sup_->kernel().exec_state().status == script::RunStatus::Running;
}

void KernelHost::publish() {
    blocked_ = sup_->nonfatal_blocked();
    hung_ = sup_->hung();
    generation_ = sup_->generation();
    cv_.notify_all();
}

void KernelHost::drive() {
    const auto tick = options_.supervisor.kernel.tick;
    std::unique_lock lk(mu_);
    while (!stop_) {
        if (!active()) {
            cv_.wait_for(lk, std::chrono::milliseconds(50));
            continue;
        }
        sup_->tick();
        if (faults_) {
            for (const auto& e : faults_->advance_to(clock_.now())) sup_->inject_fault(e.kind);
        }
        publish();
        lk.unlock();
        if (options_.clock_factor > 0.0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(to_seconds(tick) / options_.clock_factor));
        } else {
            std::this_thread::yield();
        }
        lk.lock();
    }
}

bool KernelHost::wait_settled(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    return cv_.wait_for(lk, timeout, [&] { return !active(); });
}

void KernelHost::inject_fault(FaultKind kind) {
    locked([&](supervisor::Supervisor& s) { s.inject_fault(kind); });
}

void KernelHost::reset_nonfatal() {
    locked([](supervisor::Supervisor& s) { s.reset_nonfatal(); });
}

// ── Session ─────────────────────────────────────────────────────────

Json ok_reply(std::int64_t id, Json result) {
    return {{"id", id}, {"ok", true}, {"result", std::move(result)}};
}

Json error_reply(std::int64_t id, std::string_view code, std::string_view message) {
    return {{"id", id}, {"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

namespace {

Json status_json(supervisor::Supervisor& sup) {
    auto& k = sup.kernel();
    const auto st = k.exec_state();
    Json j;
    j["status"] = script::status_name(st.status);
    j["cursor"] = st.cursor;
    j["last_completed"] = st.last_completed ? Json(*st.last_completed) : Json(nullptr);
    j["abort_reason"] = st.abort_reason;
    j["question"] = st.question ? Json{{"name", st.question->name},
                                       {"prompt", st.question->prompt},
                                       {"default", st.question->default_value}}
                                : Json(nullptr);
    j["line"] = nullptr;
    if (k.has_program() && st.cursor < k.program().statements.size()) {
        j["line"] = k.program().statements[st.cursor].source_line;
    }
    j["time"] = format_iso8601(sup.clock().now());
    j["generation"] = sup.generation();
    j["crash_count"] = sup.crash_count();
    j["hung"] = sup.hung();
    j["nonfatal_blocked"] = sup.nonfatal_blocked();
    j["source_hash"] = st.source_hash;
    return j;
}

std::string required_string(const Json& req, const char* field) {
    if (!req.contains(field) || !req[field].is_string()) {
        throw Error(Errc::BadRequest, std::string("missing string field '") + field + "'");
    }
    return req[field].get<std::string>();
}

std::optional<rtdb::VarPath> optional_prefix(const Json& req) {
    if (!req.contains("prefix") || req["prefix"].is_null()) return std::nullopt;
    auto p = required_string(req, "prefix");
    if (p.empty() || p == "/") return std::nullopt;
    return rtdb::VarPath::parse(p);
}

bool run_active(script::RunStatus s) {
    return s == script::RunStatus::Running || s == script::RunStatus::Paused ||
           s == script::RunStatus::WaitingAnswer;
}

}  // namespace

Json Session::handle_line(std::string_view line) {
    Json req;
    try {
        req = Json::parse(line);
    } catch (const Json::exception& e) {
        return error_reply(0, "BadRequest", std::string("malformed frame: ") + e.what());
    }
    return handle(req);
}

Json Session::handle(const Json& req) {
    if (!req.is_object()) return error_reply(0, "BadRequest", "frame is not an object");
    if (!req.contains("id") || !req["id"].is_number_integer()) {
        return error_reply(0, "BadRequest", "frame has no integer id");
    }
    const auto id = req["id"].get<std::int64_t>();
    if (!req.contains("verb") || !req["verb"].is_string()) return error_reply(id, "BadRequest", "frame has no verb");
    const auto verb = req["verb"].get<std::string>();
    try {
        Json result = host_.locked([&](supervisor::Supervisor& s) { return dispatch(verb, req, s); });
        if ((verb == "start" || verb == "answer") && req.value("wait", false)) {
            const auto ms = req.value("timeout_ms", std::int64_t{600000});
            if (!host_.wait_settled(std::chrono::milliseconds(ms))) {
                throw Error(Errc::Timeout, "run did not settle in time");
            }
            result["final"] = host_.locked([](supervisor::Supervisor& s) { return status_json(s); });
        }
        return ok_reply(id, std::move(result));
    } catch (const ParseError& e) {
        Json r = error_reply(id, errc_name(e.code()), e.what());
        r["error"]["line"] = e.line();
        return r;
    } catch (const Error& e) {
        return error_reply(id, errc_name(e.code()), e.what());
    } catch (const Json::exception& e) {
        return error_reply(id, "BadRequest", e.what());
    }
}

Json Session::dispatch(const std::string& verb, const Json& req, supervisor::Supervisor& sup) {
    auto& k = sup.kernel();
    auto& db = k.db();
    if (verb == "get") {
        return entry_to_json(db.get(rtdb::VarPath::parse(required_string(req, "path"))));
    }
    if (verb == "set") {
        if (!req.contains("value")) throw Error(Errc::BadRequest, "missing field 'value'");
        const auto rev = db.set(rtdb::VarPath::parse(required_string(req, "path")), value_from_json(req["value"]),
                                "gateway");
        return {{"revision", rev}};
    }
    if (verb == "list") {
        Json paths = Json::array();
        for (const auto& p : db.list(optional_prefix(req))) paths.push_back(p.str());
        return {{"paths", paths}};
    }
    if (verb == "subscribe") {
        const auto n = next_sub_++;
        subs_[n] = db.subscribe(optional_prefix(req));
        return {{"subscription", n}};
    }
    if (verb == "load_script") {
        const auto& p = sup.load_script(required_string(req, "text"));
        return {{"statements", p.statements.size()}, {"checkpoints", p.checkpoints}, {"source_hash", p.source_hash}};
    }
    if (verb == "start") {
        if (k.has_program() && k.exec_state().status == script::RunStatus::Paused) {
            k.interpreter()->resume();
            return {{"resumed", true}};
        }
        if (!k.has_program()) throw Error(Errc::NoData, "no script loaded");
        if (req.contains("seed")) sup.reseed(req["seed"].get<std::uint64_t>());
        std::size_t from = 0;
        if (req.contains("from_checkpoint")) {
            from = k.checkpoint_index(req["from_checkpoint"].get<std::size_t>());
        } else if (req.contains("from_index")) {
            from = req["from_index"].get<std::size_t>();
            if (from >= k.program().statements.size()) throw Error(Errc::BadRequest, "from_index out of range");
        }
        sup.start(from);
        return {{"from", from}};
    }
    if (verb == "stop") {
        if (!k.has_program() || !run_active(k.exec_state().status)) throw Error(Errc::NotRunning, "no active run");
        k.interpreter()->stop("stopped by operator");
        return Json::object();
    }
    if (verb == "pause") {
        if (!k.has_program()) throw Error(Errc::NotRunning, "no active run");
        k.interpreter()->pause();
        return Json::object();
    }
    if (verb == "answer") {
        if (!k.has_program()) throw Error(Errc::NotWaiting, "no question is pending");
        k.interpreter()->answer(required_string(req, "value"));
        return Json::object();
    }
    if (verb == "fetch_spectrum") {
        const auto mode = viz::parse_mode(req.value("mode", std::string("compressed")));
        auto* daq = k.daq();
        if (!daq || !daq->has_data()) throw Error(Errc::NoData, "no histogram data");
        Histogram h = viz::sample(*daq);
        std::string bytes;
        if (mode == viz::Mode::Direct) {
            bytes = viz::serialize_direct(h);
        } else {
            std::vector<std::uint64_t> factors(h.dims.size(), 1);
            if (req.contains("rebin")) factors = req["rebin"].get<std::vector<std::uint64_t>>();
            bytes = viz::compress(h, factors).to_file();
        }
        return {{"mode", viz::mode_name(mode)}, {"dims", h.dims},      {"total", h.total()},
                {"monitor", h.monitor},          {"live_time", h.live_time}, {"bytes", bytes.size()},
                {"data", base64_encode(bytes)}};
    }
    if (verb == "status") return status_json(sup);
    if (verb == "inject_fault") {
        const auto kind = parse_fault(required_string(req, "kind"));
        sup.inject_fault(kind);
        return {{"kind", fault_name(kind)}};
    }
    throw Error(Errc::BadRequest, "unknown verb '" + verb + "'");
}

std::vector<Json> Session::drain_events() {
    std::vector<Json> out;
    for (auto it = subs_.begin(); it != subs_.end();) {
        try {
            while (auto e = it->second->try_next()) {
                out.push_back({{"event", "change"}, {"subscription", it->first}, {"entry", entry_to_json(*e)}});
            }
            ++it;
        } catch (const Error&) {
            it = subs_.erase(it);
        }
    }
    return out;
}

// ── StreamServer ────────────────────────────────────────────────────

namespace {

bool send_all(int fd, std::string_view bytes) {
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return false;
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace

StreamServer::StreamServer(KernelHost& host, std::string address, std::uint16_t port) : host_(host) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(Errc::BindError, std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, address.c_str(), &sa.sin_addr) != 1) {
        ::close(listen_fd_);
        throw Error(Errc::BindError, "bad listen address " + address);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 || ::listen(listen_fd_, 16) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error(Errc::BindError, "cannot listen on " + address + ":" + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof sa;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    port_ = ntohs(sa.sin_port);
}

StreamServer::~StreamServer() {
    stop();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void StreamServer::start() {
    if (acceptor_.joinable()) return;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void StreamServer::stop() {
    stop_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> conns;
    {
        std::lock_guard lk(conn_mu_);
        conns.swap(connections_);
    }
    for (auto& t : conns) t.join();
}

void StreamServer::accept_loop() {
    while (!stop_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        // Blocked network I/O or a dead kernel: the peer sees an immediate close.
        if (host_.nonfatal_blocked() || host_.hung()) {
            ::close(fd);
            continue;
        }
        std::lock_guard lk(conn_mu_);
        connections_.emplace_back([this, fd] { serve(fd); });
    }
}

void StreamServer::serve(int fd) {
    Session session(host_);
    const auto generation = host_.generation();
    std::string buffer;
    char chunk[65536];
    while (!stop_) {
        if (host_.generation() != generation || host_.hung()) break;
        if (host_.nonfatal_blocked()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            continue;
        }
        pollfd p{fd, POLLIN, 0};
        const int ready = ::poll(&p, 1, 20);
        bool alive = true;
        if (ready > 0) {
            const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
            if (n <= 0) break;
            buffer.append(chunk, static_cast<std::size_t>(n));
            std::size_t nl;
            while (alive && (nl = buffer.find('\n')) != std::string::npos) {
                std::string line = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty()) continue;
                alive = send_all(fd, session.handle_line(line).dump() + "\n");
            }
        }
        for (const auto& e : session.drain_events()) {
            if (alive) alive = send_all(fd, e.dump() + "\n");
        }
        if (!alive) break;
    }
    ::close(fd);
}

// ── DpmServer ───────────────────────────────────────────────────────

DpmServer::DpmServer(KernelHost& host, const std::filesystem::path& window) : host_(host), window_(window, true) {}

DpmServer::~DpmServer() { stop(); }

void DpmServer::start() {
    if (thread_.joinable()) return;
    thread_ = std::thread([this] { loop(); });
}

void DpmServer::stop() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
}

void DpmServer::loop() {
    dpm::MessageReader reader(window_.host_to_kernel());
    dpm::MessageWriter writer(window_.kernel_to_host());
    Session session(host_);
    auto send = [&](const Json& j) {
        const auto text = j.dump();
        while (!stop_ && !writer.send(text, std::chrono::milliseconds(200))) {
        }
    };
    while (!stop_) {
        std::optional<std::string> msg;
        try {
            msg = reader.try_receive();
        } catch (const Error& e) {
            send(error_reply(0, errc_name(e.code()), e.what()));
            return;
        }
        if (msg) send(session.handle_line(*msg));
        for (const auto& e : session.drain_events()) send(e);
        if (!msg) std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
}

// ── clients ─────────────────────────────────────────────────────────

Json Client::request(Json req, std::chrono::milliseconds timeout) {
    const auto id = next_id_++;
    req["id"] = id;
    send_line(req.dump());
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw Error(Errc::Timeout, "no reply to request " + std::to_string(id));
        auto line = read_line(left);
        if (!line) continue;
        Json frame = Json::parse(*line);
        if (frame.contains("event")) {
            events_.push_back(std::move(frame));
        } else if (frame.value("id", std::int64_t{-1}) == id) {
            return frame;
        }
    }
}

Json Client::raw(std::string_view line, std::chrono::milliseconds timeout) {
    send_line(std::string(line));
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw Error(Errc::Timeout, "no reply to raw frame");
        auto l = read_line(left);
        if (!l) continue;
        Json frame = Json::parse(*l);
        if (frame.contains("event")) {
            events_.push_back(std::move(frame));
            continue;
        }
        return frame;
    }
}

std::optional<Json> Client::next_event(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (events_.empty()) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        auto l = read_line(left);
        if (!l) continue;
        Json frame = Json::parse(*l);
        if (frame.contains("event")) events_.push_back(std::move(frame));
    }
    Json e = std::move(events_.front());
    events_.pop_front();
    return e;
}

StreamClient::StreamClient(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
        throw Error(Errc::IoError, "cannot resolve " + host);
    }
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
    ::freeaddrinfo(res);
    if (!ok) {
        if (fd_ >= 0) ::close(fd_);
        throw Error(Errc::IoError, "cannot connect to " + host + ":" + std::to_string(port));
    }
}

StreamClient::~StreamClient() {
    if (fd_ >= 0) ::close(fd_);
}

void StreamClient::send_line(const std::string& line) {
    if (!send_all(fd_, line + "\n")) throw Error(Errc::StreamClosed, "connection closed");
}

std::optional<std::string> StreamClient::read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char chunk[65536];
    while (true) {
        if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        pollfd p{fd_, POLLIN, 0};
        const int ready = ::poll(&p, 1, static_cast<int>(std::min<std::int64_t>(left.count(), 1000)));
        if (ready <= 0) continue;
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n <= 0) throw Error(Errc::StreamClosed, "connection closed by the gateway");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

DpmClient::DpmClient(const std::filesystem::path& window)
    : window_(window, false), writer_(window_.host_to_kernel()), reader_(window_.kernel_to_host()) {}

void DpmClient::send_line(const std::string& line) {
    if (!writer_.send(line, std::chrono::seconds(10))) throw Error(Errc::Timeout, "dual-port window full");
}

std::optional<std::string> DpmClient::read_line(std::chrono::milliseconds timeout) {
    return reader_.receive(timeout);
}

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint) {
    std::string host = "127.0.0.1";
    std::uint16_t port = kDefaultPort;
    const auto colon = endpoint.rfind(':');
    if (colon == std::string_view::npos) {
        if (!endpoint.empty()) host = std::string(endpoint);
        return {host, port};
    }
    if (colon > 0) host = std::string(endpoint.substr(0, colon));
    const auto p = endpoint.substr(colon + 1);
    unsigned v = 0;
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (ec != std::errc{} || ptr != p.data() + p.size() || v > 65535) {
        throw Error(Errc::BadRequest, "bad endpoint '" + std::string(endpoint) + "'");
    }
    return {host, static_cast<std::uint16_t>(v)};
}

}  // namespace beamctl::gateway
