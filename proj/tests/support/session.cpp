// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "session.hpp"

#include <fstream>

#include "harness.hpp"

namespace beamctl::testing {

Host::Host(const std::string& name, std::optional<FaultModel> faults) : root(scratch(name)) {
    gateway::HostOptions o;
    o.supervisor.kernel.root = root;
    o.faults = faults;
    host = std::make_unique<gateway::KernelHost>(o);
    host->start_driver();
}

Host::~Host() { host->stop_driver(); }

namespace {

std::vector<Json> read_jsonl(const std::filesystem::path& p) {
    std::vector<Json> out;
    for (const auto& l : lines(read_file(p))) {
        if (!l.empty()) out.push_back(Json::parse(l));
    }
    return out;
}

}  // namespace

std::vector<Json> session_requests() { return read_jsonl(golden_dir() / "session_requests.jsonl"); }
std::vector<Json> golden_replies() { return read_jsonl(golden_dir() / "session_replies.jsonl"); }

std::vector<Json> run_session(gateway::Client& client, const std::vector<Json>& requests) {
    std::vector<Json> out;
    for (const auto& r : requests) out.push_back(client.request(r, std::chrono::seconds(120)));
    return out;
}

std::vector<Json> stream_session(const std::string& name) {
    Host h(name);
    gateway::StreamServer server(*h.host, "127.0.0.1", 0);
    server.start();
    gateway::StreamClient client("127.0.0.1", server.port());
    auto replies = run_session(client, session_requests());
    server.stop();
    return replies;
}

std::vector<Json> dpm_session(const std::string& name) {
    Host h(name);
    const auto window = h.root / "window.dpm";
    gateway::DpmServer server(*h.host, window);
    server.start();
    gateway::DpmClient client(window);
    auto replies = run_session(client, session_requests());
    server.stop();
    return replies;
}

}  // namespace beamctl::testing
