// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "beamctl/error.hpp"
#include "beamctl/gateway.hpp"
#include "beamctl/viz.hpp"

namespace beamctl::cli {

using gateway::Json;

namespace {

struct Options {
    std::string endpoint;
    std::string transport = "stream";
    std::string dpm_file = "beamctl.dpm";
    std::optional<std::uint64_t> seed;
    double clock_factor = 0.0;
    std::string format = "plain";
};

std::unique_ptr<gateway::Client> connect(const Options& o) {
    if (o.transport == "dpm") return std::make_unique<gateway::DpmClient>(o.dpm_file);
    auto [host, port] = gateway::parse_endpoint(o.endpoint);
    return std::make_unique<gateway::StreamClient>(host, port);
}

/// Throws the reply's error as an Error so callers share one exit path.
Json result_of(const Json& reply) {
    if (reply.value("ok", false)) return reply["result"];
    const auto& e = reply["error"];
    const auto code = e.value("code", std::string("BadRequest"));
    const auto message = e.value("message", std::string("request failed"));
    if (code == "ParseError") throw ParseError(e.value("line", std::size_t{0}), message);
    static const std::map<std::string, Errc> codes = {
        {"NotFound", Errc::NotFound},       {"TypeMismatch", Errc::TypeMismatch},
        {"InvalidPath", Errc::InvalidPath}, {"InvalidValue", Errc::InvalidValue},
        {"NoData", Errc::NoData},           {"NotWaiting", Errc::NotWaiting},
        {"NotRunning", Errc::NotRunning},   {"Busy", Errc::Busy},
        {"BadFactors", Errc::BadFactors},   {"Timeout", Errc::Timeout},
    };
    auto it = codes.find(code);
    throw Error(it == codes.end() ? Errc::BadRequest : it->second, message);
}

std::string plain_value(const Json& v) {
    const auto type = v.value("type", std::string());
    const Json& x = v["value"];
    if (type == "text") return x.get<std::string>();
    if (type == "int_array") {
        std::string s;
        for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + x[i].dump();
        return s;
    }
    return x.dump();
}

Json infer_value(const std::string& text, const std::string& type) {
    if (type == "text") return {{"type", "text"}, {"value", text}};
    if (type == "int" || (type.empty() && !text.empty() && text.find_first_not_of("-0123456789") == std::string::npos &&
                          text != "-")) {
        return {{"type", "int"}, {"value", std::stoll(text)}};
    }
    if (type == "real") return {{"type", "real"}, {"value", std::stod(text)}};
    if (type == "int_array") {
        Json arr = Json::array();
        std::stringstream ss(text);
        std::string part;
        while (std::getline(ss, part, ',')) arr.push_back(std::stoll(part));
        return {{"type", "int_array"}, {"value", arr}};
    }
    if (type.empty()) {
        char* end = nullptr;
        const double d = std::strtod(text.c_str(), &end);
        if (!text.empty() && end == text.c_str() + text.size()) return {{"type", "real"}, {"value", d}};
        return {{"type", "text"}, {"value", text}};
    }
    throw Error(Errc::BadRequest, "unknown value type '" + type + "'");
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::IoError, "cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ── run ─────────────────────────────────────────────────────────────

int cmd_run(const Options& o, const std::string& file, std::optional<std::size_t> from, std::istream& in,
            std::ostream& out, std::ostream& err) {
    const auto text = slurp(file);
    auto client = connect(o);
    try {
        result_of(client->request({{"verb", "load_script"}, {"text", text}}));
    } catch (const ParseError& e) {
        err << file << ":" << e.line() << ": " << e.reason() << "\n";
        return kParse;
    }
    result_of(client->request({{"verb", "subscribe"}, {"prefix", "/script"}}));
    Json start{{"verb", "start"}};
    if (from) start["from_checkpoint"] = *from;
    if (o.seed) start["seed"] = *o.seed;
    result_of(client->request(start));

    std::string status = "Running";
    std::string last_line;
    while (true) {
        std::optional<Json> ev;
        try {
            ev = client->next_event(std::chrono::milliseconds(200));
        } catch (const Error& e) {
            if (e.code() != Errc::StreamClosed) throw;
            // The kernel was restarted; the run resumes on its own.
            out << "connection lost; reconnecting\n";
            for (int attempt = 0;; ++attempt) {
                std::this_thread::sleep_for(std::chrono::milliseconds(200));
                try {
                    client = connect(o);
                    result_of(client->request({{"verb", "subscribe"}, {"prefix", "/script"}}));
                    break;
                } catch (const Error&) {
                    if (attempt > 300) throw;
                }
            }
            ev.reset();
        }
        if (ev) {
            const auto& entry = (*ev)["entry"];
            const auto path = entry.value("path", std::string());
            if (path == "/script/current") {
                const auto line = entry["value"].get<std::string>();
                if (!line.empty() && line != last_line) {
                    out << entry["wall_time"].get<std::string>() << "  " << line << "\n";
                }
                last_line = line;
            }
            if (path != "/script/status") continue;
            status = entry["value"].get<std::string>();
        } else {
            status = result_of(client->request({{"verb", "status"}}))["status"].get<std::string>();
        }
        if (status == "Finished") {
            out << "Finished\n";
            return kOk;
        }
        if (status == "Aborted") {
            const auto st = result_of(client->request({{"verb", "status"}}));
            err << "Aborted: " << st["abort_reason"].get<std::string>() << "\n";
            return kAborted;
        }
        if (status == "WaitingAnswer") {
            const auto st = result_of(client->request({{"verb", "status"}}));
            if (st["question"].is_null()) continue;
            const auto& q = st["question"];
            out << q["prompt"].get<std::string>() << " [" << q["default"].get<std::string>() << "]: " << std::flush;
            std::string answer;
            if (!std::getline(in, answer)) answer.clear();
            result_of(client->request({{"verb", "answer"}, {"value", answer}}));
        }
    }
}

// ── var ─────────────────────────────────────────────────────────────

int cmd_var(const Options& o, const std::string& action, const std::string& path, const std::string& value,
            const std::string& type, std::ostream& out) {
    auto client = connect(o);
    if (action == "get") {
        const auto r = result_of(client->request({{"verb", "get"}, {"path", path}}));
        if (o.format == "tsv") {
            out << r["path"].get<std::string>() << "\t" << r["type"].get<std::string>() << "\t" << plain_value(r)
                << "\t" << r["revision"] << "\n";
        } else {
            out << plain_value(r) << "\n";
        }
    } else if (action == "set") {
        const auto r = result_of(
            client->request({{"verb", "set"}, {"path", path}, {"value", infer_value(value, type)}}));
        out << r["revision"] << "\n";
    } else {
        Json req{{"verb", "list"}};
        if (!path.empty()) req["prefix"] = path;
        const auto r = result_of(client->request(req));
        for (const auto& p : r["paths"]) out << p.get<std::string>() << "\n";
    }
    return kOk;
}

// ── spectrum ────────────────────────────────────────────────────────

int cmd_spectrum(const Options& o, const std::string& mode, const std::string& render, const std::string& output,
                 const std::vector<std::uint64_t>& rebin, std::ostream& out) {
    auto client = connect(o);
    Json req{{"verb", "fetch_spectrum"}, {"mode", mode}};
    if (!rebin.empty()) req["rebin"] = rebin;
    const auto r = result_of(client->request(req));
    const auto bytes = gateway::base64_decode(r["data"].get<std::string>());
    if (render == "file") {
        std::ofstream f(output, std::ios::binary | std::ios::trunc);
        f << bytes;
        if (!f) throw Error(Errc::IoError, "cannot write " + output);
        out << "wrote " << bytes.size() << " bytes to " << output << "\n";
        return kOk;
    }
    const Histogram h = mode == "direct" ? viz::parse_direct(bytes)
                                         : viz::decompress(viz::CompressedSpectrum::from_file(bytes));
    const auto spectrum = h.project_last_axis();
    const auto peak = std::max_element(spectrum.begin(), spectrum.end()) - spectrum.begin();
    out << render_ascii(spectrum);
    out << fmt::format("channels={} total={} peak_channel={} monitor={} live_time={}\n", spectrum.size(), h.total(),
                       peak, h.monitor, h.live_time);
    return kOk;
}

// ── fault / status / bench ──────────────────────────────────────────

int cmd_fault(const Options& o, const std::string& kind, std::ostream& out) {
    auto client = connect(o);
    result_of(client->request({{"verb", "inject_fault"}, {"kind", kind}}));
    out << "injected " << kind << " fault\n";
    return kOk;
}

int cmd_status(const Options& o, std::ostream& out) {
    auto client = connect(o);
    const auto r = result_of(client->request({{"verb", "status"}}));
    if (o.format == "tsv") {
        for (const auto& [k, v] : r.items()) out << k << "\t" << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    } else {
        out << r["status"].get<std::string>() << " cursor=" << r["cursor"] << " time=" << r["time"].get<std::string>()
            << " crashes=" << r["crash_count"] << "\n";
    }
    return kOk;
}

int cmd_bench(const std::vector<double>& sweep_in, double latency, std::ostream& out) {
    const auto h = viz::golden_fixture();
    const auto sweep = sweep_in.empty() ? viz::default_sweep() : sweep_in;
    out << viz::format_report(viz::crossover_benchmark(h, sweep, latency));
    return kOk;
}

// ── serve ───────────────────────────────────────────────────────────

std::atomic<int> g_signal{0};

extern "C" void on_signal(int sig) { g_signal = sig; }

int cmd_serve(const Options& o, const std::string& root, bool dpm, std::optional<double> nonfatal_rate,
              std::optional<double> fatal_rate, std::ostream& out) {
    gateway::HostOptions ho;
    ho.supervisor.kernel.root = root;
    if (o.seed) ho.supervisor.kernel.seed = *o.seed;
    ho.clock_factor = o.clock_factor;
    if (nonfatal_rate || fatal_rate) {
        FaultModel fm;
        fm.nonfatal_per_day = nonfatal_rate.value_or(0.0);
        fm.fatal_per_week = fatal_rate.value_or(0.0);
        fm.seed = o.seed.value_or(1);
        ho.faults = fm;
    }
    std::filesystem::create_directories(root);
    gateway::KernelHost host(ho);
    auto [addr, port] = gateway::parse_endpoint(o.endpoint);
    gateway::StreamServer server(host, addr, port);
    std::unique_ptr<gateway::DpmServer> dpm_server;
    if (dpm) dpm_server = std::make_unique<gateway::DpmServer>(host, o.dpm_file);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::signal(SIGUSR1, on_signal);
    host.start_driver();
    server.start();
    if (dpm_server) dpm_server->start();
    out << "listening on " << addr << ":" << server.port() << (dpm ? " and " + o.dpm_file : std::string()) << "\n"
        << std::flush;
    while (true) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        const int sig = g_signal.exchange(0);
        if (sig == SIGUSR1) {
            host.reset_nonfatal();
            out << "nonfatal fault reset\n" << std::flush;
        } else if (sig != 0) {
            break;
        }
    }
    if (dpm_server) dpm_server->stop();
    server.stop();
    host.stop_driver();
    return kOk;
}

}  // namespace

std::string render_ascii(const std::vector<std::uint64_t>& spectrum, std::size_t rows, std::size_t width) {
    if (spectrum.empty()) return "(empty spectrum)\n";
    rows = std::min(rows, spectrum.size());
    const std::size_t per_row = (spectrum.size() + rows - 1) / rows;
    std::vector<std::uint64_t> sums;
    for (std::size_t i = 0; i < spectrum.size(); i += per_row) {
        std::uint64_t s = 0;
        for (std::size_t j = i; j < std::min(i + per_row, spectrum.size()); ++j) s += spectrum[j];
        sums.push_back(s);
    }
    const auto top = std::max<std::uint64_t>(1, *std::max_element(sums.begin(), sums.end()));
    std::string out;
    for (std::size_t r = 0; r < sums.size(); ++r) {
        const auto len = static_cast<std::size_t>(sums[r] * width / top);
        out += fmt::format("{:>5}-{:<5} |{:<{}}| {}\n", r * per_row, std::min((r + 1) * per_row, spectrum.size()) - 1,
                           std::string(len, '#'), width, sums[r]);
    }
    return out;
}

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"beamctl: operate a simulated beamline control kernel"};
    app.require_subcommand(1);
    Options o;
    if (const char* ep = std::getenv("BEAMCTL_ENDPOINT")) o.endpoint = ep;
    if (o.endpoint.empty()) o.endpoint = "127.0.0.1:" + std::to_string(gateway::kDefaultPort);
    app.add_option("--endpoint", o.endpoint, "host:port of the gateway (env BEAMCTL_ENDPOINT)");
    app.add_option("--transport", o.transport, "stream or dpm")->check(CLI::IsMember({"stream", "dpm"}));
    app.add_option("--dpm-file", o.dpm_file, "dual-port window file");
    app.add_option("--seed", o.seed, "run seed");
    app.add_option("--clock-factor", o.clock_factor, "simulated seconds per wall second, 0 = unpaced (serve)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--format", o.format, "plain or tsv")->check(CLI::IsMember({"plain", "tsv"}));

    auto* run_cmd = app.add_subcommand("run", "load, start and follow a script");
    std::string script_file;
    std::optional<std::size_t> from;
    run_cmd->add_option("script", script_file)->required();
    run_cmd->add_option("--from", from, "start at this checkpoint (1-based)");

    auto* var_cmd = app.add_subcommand("var", "get, set or list database variables");
    std::string var_action, var_path, var_value, var_type;
    var_cmd->add_option("action", var_action)->required()->check(CLI::IsMember({"get", "set", "list"}));
    var_cmd->add_option("path", var_path);
    var_cmd->add_option("value", var_value);
    var_cmd->add_option("--type", var_type, "int, real, text or int_array");

    auto* spec_cmd = app.add_subcommand("spectrum", "fetch the DAQ histogram");
    std::string spec_mode = "compressed", spec_render = "ascii", spec_output = "spectrum.maks";
    std::vector<std::uint64_t> rebin;
    spec_cmd->add_option("--mode", spec_mode)->check(CLI::IsMember({"compressed", "direct"}));
    spec_cmd->add_option("--render", spec_render)->check(CLI::IsMember({"ascii", "file"}));
    spec_cmd->add_option("--output", spec_output);
    spec_cmd->add_option("--rebin", rebin)->delimiter(',');

    auto* fault_cmd = app.add_subcommand("fault", "inject a fault");
    std::string fault_kind;
    fault_cmd->add_option("kind", fault_kind)->required()->check(CLI::IsMember({"nonfatal", "fatal"}));

    auto* status_cmd = app.add_subcommand("status", "show run status");

    auto* bench_cmd = app.add_subcommand("bench", "compressed vs direct transfer crossover");
    std::vector<double> sweep;
    double latency = 0.0;
    bench_cmd->add_option("--sweep", sweep, "ascending bandwidths in bytes/s")->delimiter(',');
    bench_cmd->add_option("--latency", latency)->check(CLI::NonNegativeNumber);

    auto* serve_cmd = app.add_subcommand("serve", "run a kernel with its gateway");
    std::string root = "beamctl-data";
    bool dpm = false;
    std::optional<double> nonfatal_rate, fatal_rate;
    serve_cmd->add_option("--root", root, "protocol, data and state directory");
    serve_cmd->add_flag("--dpm", dpm, "also serve the dual-port window at --dpm-file");
    serve_cmd->add_option("--nonfatal-per-day", nonfatal_rate)->check(CLI::NonNegativeNumber);
    serve_cmd->add_option("--fatal-per-week", fatal_rate)->check(CLI::NonNegativeNumber);

    std::vector<std::string> argv_store{"beamctl"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kParse;
    }

    try {
        if (*run_cmd) return cmd_run(o, script_file, from, in, out, err);
        if (*var_cmd) {
            if (var_action != "list" && var_path.empty()) throw Error(Errc::BadRequest, "var " + var_action + " needs a path");
            if (var_action == "set" && var_value.empty() && var_type != "text") {
                throw Error(Errc::BadRequest, "var set needs a value");
            }
            return cmd_var(o, var_action, var_path, var_value, var_type, out);
        }
        if (*spec_cmd) return cmd_spectrum(o, spec_mode, spec_render, spec_output, rebin, out);
        if (*fault_cmd) return cmd_fault(o, fault_kind, out);
        if (*status_cmd) return cmd_status(o, out);
        if (*bench_cmd) return cmd_bench(sweep, latency, out);
        if (*serve_cmd) return cmd_serve(o, root, dpm, nonfatal_rate, fatal_rate, out);
    } catch (const ParseError& e) {
        err << "line " << e.line() << ": " << e.reason() << "\n";
        return kParse;
    } catch (const Error& e) {
        err << (e.code() == Errc::NotFound ? "not found: " : "error: ") << e.what() << "\n";
        return kRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kRuntime;
}

}  // namespace beamctl::cli
