// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Runs every primary acceptance criterion and prints one PASS/FAIL line per
// criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "beamctl/dpm.hpp"
#include "beamctl/error.hpp"
#include "beamctl/faults.hpp"
#include "beamctl/gateway.hpp"
#include "beamctl/rng.hpp"
#include "beamctl/rtdb.hpp"
#include "beamctl/script.hpp"
#include "beamctl/viz.hpp"
#include "harness.hpp"
#include "session.hpp"

namespace fs = std::filesystem;
using namespace beamctl;
using namespace std::chrono_literals;

namespace {

/// Thrown by `check` with a description of what did not hold.
struct Failure {
    std::string what;
};

void check(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

// ── corpus parse ────────────────────────────────────────────────────

void corpus_parse() {
    script::Program p;
    try {
        p = script::parse(testing::corpus_text());
    } catch (const ParseError& e) {
        throw Failure{std::string("parse error: ") + e.what()};
    }
    check(p.size() == 38, fmt::format("{} statements, hand count is 38", p.size()));
    auto q = script::parse(script::render(p));
    check(script::structurally_equal(p, q), "rendered program re-parses differently");
}

// ── snapshot round-trip ─────────────────────────────────────────────

std::string random_segment(Rng& rng) {
    static constexpr std::string_view alphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-";
    std::string s(1 + rng.below(8), 'a');
    for (auto& c : s) c = alphabet[rng.below(alphabet.size())];
    return s;
}

std::string random_text(Rng& rng) {
    static const std::vector<std::string> pieces = {"a", "Z", " ", "\t", "\n", "%", "%25", "\r", "\\",
                                                    "ä", "µs", "=", ",", "\x7f", "\x01"};
    std::string s;
    for (auto n = rng.below(12); n > 0; --n) s += pieces[rng.below(pieces.size())];
    return s;
}

double random_real(Rng& rng) {
    switch (rng.below(6)) {
        case 0: return 0.0;
        case 1: return -0.0;
        case 2: return std::numeric_limits<double>::denorm_min() * static_cast<double>(1 + rng.below(1000));
        case 3: return std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.below(2000)) - 1000);
        case 4: return rng.below(2) ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        default: {
            for (;;) {
                const auto bits = rng.bits();
                double d;
                std::memcpy(&d, &bits, sizeof d);
                if (!std::isnan(d)) return d;
            }
        }
    }
}

rtdb::VarValue random_value(Rng& rng, rtdb::TypeTag tag) {
    switch (tag) {
        case rtdb::TypeTag::Int: return static_cast<std::int64_t>(rng.bits());
        case rtdb::TypeTag::Real: return random_real(rng);
        case rtdb::TypeTag::Text: return random_text(rng);
        case rtdb::TypeTag::IntArray: {
            rtdb::IntArray a(rng.below(6));
            for (auto& x : a) x = static_cast<std::int64_t>(rng.bits()) >> rng.below(64);
            return a;
        }
    }
    return std::int64_t{0};
}

bool same_value(const rtdb::VarValue& a, const rtdb::VarValue& b) {
    if (a.index() != b.index()) return false;
    if (const auto* x = std::get_if<double>(&a)) {
        const double y = std::get<double>(b);
        return std::memcmp(x, &y, sizeof y) == 0;  // keeps the sign of zero
    }
    return a == b;
}

void snapshot_roundtrip() {
    static constexpr rtdb::TypeTag tags[] = {rtdb::TypeTag::Int, rtdb::TypeTag::Real, rtdb::TypeTag::Text,
                                             rtdb::TypeTag::IntArray};
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        Rng rng(seed);
        rtdb::Database db;
        std::map<std::string, rtdb::TypeTag> typed;
        for (auto n = rng.below(40); n > 0; --n) {
            std::vector<std::string> segs(1 + rng.below(4));
            for (auto& s : segs) s = random_segment(rng);
            rtdb::VarPath path(segs);
            auto [it, fresh] = typed.emplace(path.str(), tags[rng.below(4)]);
            db.set(path, random_value(rng, it->second), "gen");
        }
        const auto snap = db.save();
        const auto bytes = snap.serialize();

        rtdb::Database back;
        back.set("/stale", std::int64_t{1}, "gen");
        back.restore(rtdb::Snapshot::parse(bytes));
        const auto paths = db.list();
        check(back.list() == paths, fmt::format("seed {}: path lists differ", seed));
        for (const auto& p : paths) {
            check(same_value(back.get(p).value, db.get(p).value),
                  fmt::format("seed {}: value of {} differs", seed, p.str()));
        }
        check(back.save().serialize() == bytes, fmt::format("seed {}: snapshot bytes differ", seed));

        rtdb::Database direct;
        direct.restore(snap);
        check(direct.save().serialize() == bytes, fmt::format("seed {}: in-memory restore differs", seed));
    }
}

// ── crash-resume sweep ──────────────────────────────────────────────

// The environment monitor samples on a wall-clock period, so its sample
// records depend on when the restart happened; its other records must match.
std::vector<std::string> comparable(const std::string& file, const std::vector<std::string>& records) {
    if (file != "txt/pb160502au.txt") return records;
    std::vector<std::string> out;
    for (const auto& r : records) {
        if (r.find("\tsample ") == std::string::npos && r.rfind("sample ", 0) != 0) out.push_back(r);
    }
    return out;
}

void crash_sweep() {
    const auto program = script::parse(testing::corpus_text());
    testing::CorpusOptions ref_opts;
    ref_opts.record_lines = true;
    const auto ref = testing::run_corpus(testing::scratch("sweep-ref"), ref_opts);
    check(ref.final.status == script::RunStatus::Finished, "reference run did not finish");

    for (std::size_t k = 0; k < program.size(); ++k) {
        testing::CorpusOptions opts;
        opts.crash_after = k;
        const auto run = testing::run_corpus(testing::scratch(fmt::format("sweep-{}", k)), opts);
        const auto tag = fmt::format("k={}", k);
        check(run.settled && run.final.status == script::RunStatus::Finished,
              tag + ": resumed run ended " + std::string(script::status_name(run.final.status)) + " " +
                  run.final.abort_reason);
        check(run.crash_count == 1, fmt::format("{}: {} restarts", tag, run.crash_count));

        // Restart delay: watchdog detection to resumption, in virtual time.
        const auto log = testing::parse_log(run.log);
        std::optional<SimTime> detected, resumed;
        for (const auto& [t, ev] : log) {
            if (ev.rfind("watchdog:", 0) == 0) detected = t;
            if (ev.rfind("restarted;", 0) == 0) resumed = t;
        }
        check(detected && resumed, tag + ": restart not logged");
        check(*resumed - *detected == 1600ms,
              fmt::format("{}: restart took {} us", tag, (*resumed - *detected).count()));

        const auto rp = script::resume_point(program, k);
        for (const auto& [file, content] : ref.files) {
            check(run.files.count(file), tag + ": missing " + file);
            if (file.ends_with(".dat")) {
                check(run.files.at(file) == content, tag + ": " + file + " differs");
                continue;
            }
            const auto ref_records = testing::strip_times(testing::lines(content));
            std::size_t base = 0;
            if (rp > 0) {
                const auto& counts = ref.lines_after.at(rp - 1);
                if (auto it = counts.find(file); it != counts.end()) base = it->second;
            }
            const std::vector<std::string> head(ref_records.begin(), ref_records.begin() + base);
            const auto want_all = comparable(file, ref_records);
            const auto skip = comparable(file, head).size();
            const std::vector<std::string> want(want_all.begin() + skip, want_all.end());
            const auto got_all = comparable(file, testing::strip_times(testing::lines(run.files.at(file))));
            check(got_all.size() >= want.size(), tag + ": " + file + " is short");
            const std::vector<std::string> got(got_all.end() - want.size(), got_all.end());
            check(got == want, tag + ": " + file + " records from the resume point differ");
        }
    }
}

// ── nonfatal isolation ──────────────────────────────────────────────

void nonfatal_isolation() {
    const auto ref = testing::run_corpus(testing::scratch("isolation-ref"), {});

    gateway::HostOptions o;
    o.supervisor.kernel.root = testing::scratch("isolation-blocked");
    o.supervisor.kernel.seed = 7;
    gateway::KernelHost host(o);
    gateway::StreamServer server(host, "127.0.0.1", 0);
    server.start();
    host.start_driver();
    host.inject_fault(FaultKind::Nonfatal);
    host.locked([](supervisor::Supervisor& s) {
        s.load_script(testing::corpus_text());
        s.start(0);
    });
    bool refused = false;
    try {
        gateway::StreamClient c("127.0.0.1", server.port());
        c.request({{"verb", "status"}}, 300ms);
    } catch (const Error&) {
        refused = true;
    }
    check(refused, "gateway answered while blocked");
    check(host.wait_settled(60s), "blocked run did not settle");
    check(host.nonfatal_blocked(), "gateway unblocked during the run");
    const auto st = host.locked([](supervisor::Supervisor& s) { return s.kernel().exec_state(); });
    check(st.status == script::RunStatus::Finished, "blocked run ended " + std::string(script::status_name(st.status)));
    server.stop();
    host.stop_driver();

    const auto dats = testing::dat_files(o.supervisor.kernel.root);
    check(!dats.empty(), "no spectra written");
    std::size_t compared = 0;
    for (const auto& [file, content] : ref.files) {
        if (!file.ends_with(".dat")) continue;
        check(testing::read_file(o.supervisor.kernel.root / file) == content, file + " differs");
        ++compared;
    }
    check(compared == dats.size(), "different set of spectrum files");
}

// ── fault-rate calibration ──────────────────────────────────────────

void fault_rates() {
    const FaultModel defaults;
    constexpr int kSeeds = 100;
    constexpr int kDays = 28;
    double nonfatal = 0.0, fatal = 0.0;
    const SimTime t0 = default_epoch();
    for (int seed = 1; seed <= kSeeds; ++seed) {
        FaultModel m = defaults;
        m.seed = static_cast<std::uint64_t>(seed);
        FaultProcess p(m, t0);
        for (const auto& e : p.advance_to(t0 + std::chrono::hours(24 * kDays))) {
            (e.kind == FaultKind::Nonfatal ? nonfatal : fatal) += 1.0;
        }
    }
    const double per_day = nonfatal / (kSeeds * kDays);
    const double per_week = fatal / (kSeeds * kDays / 7.0);
    check(std::abs(per_day - 1.0) <= 0.2, fmt::format("nonfatal {:.4f}/day", per_day));
    check(std::abs(per_week - 1.0) <= 0.2, fmt::format("fatal {:.4f}/week", per_week));
    std::cout << fmt::format("  nonfatal {:.4f}/day, fatal {:.4f}/week\n", per_day, per_week);
}

// ── codec ───────────────────────────────────────────────────────────

// Straightforward reference rebin: every input cell adds to its block.
Histogram oracle_rebin(const Histogram& h, const std::vector<std::uint64_t>& f) {
    std::vector<std::uint64_t> dims;
    for (std::size_t a = 0; a < h.dims.size(); ++a) dims.push_back(h.dims[a] / f[a]);
    Histogram out = Histogram::zeros(dims);
    out.monitor = h.monitor;
    out.live_time = h.live_time;
    std::vector<std::uint64_t> idx(h.dims.size(), 0);
    for (std::uint64_t cell = 0; cell < h.counts.size(); ++cell) {
        std::uint64_t rest = cell, flat = 0;
        for (std::size_t a = h.dims.size(); a-- > 0;) {
            idx[a] = rest % h.dims[a];
            rest /= h.dims[a];
        }
        for (std::size_t a = 0; a < h.dims.size(); ++a) flat = flat * dims[a] + idx[a] / f[a];
        out.counts[flat] += h.counts[cell];
    }
    return out;
}

void codec_property() {
    static constexpr std::uint64_t kFactors[] = {1, 2, 4};
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        Rng rng(seed);
        Histogram h;
        for (auto n = 1 + rng.below(3); n > 0; --n) h.dims.push_back(4 * (1 + rng.below(8)));
        h.counts.assign(h.cells(), 0);
        const double density = rng.uniform();
        for (auto& c : h.counts) {
            if (rng.uniform() < density) c = rng.below(4) == 0 ? rng.bits() >> rng.below(64) : rng.below(50);
        }
        // Keep the total representable.
        for (auto& c : h.counts) c >>= 8;
        h.monitor = rng.below(100000);
        h.live_time = rng.uniform() * 1000.0;

        for (auto f1 : kFactors) {
            std::vector<std::uint64_t> f(h.dims.size(), f1);
            if (rng.below(2)) {
                for (auto& x : f) x = kFactors[rng.below(3)];
            }
            const auto r = viz::rebin(h, f);
            check(r.total() == h.total(), fmt::format("seed {}: rebin changed the sum", seed));
            check(r == oracle_rebin(h, f), fmt::format("seed {}: rebin differs from reference", seed));
            const auto c = viz::CompressedSpectrum::from_file(viz::compress(h, f).to_file());
            check(viz::decompress(c) == r, fmt::format("seed {}: decompress(compress) != rebin", seed));
        }
    }
}

// ── crossover ───────────────────────────────────────────────────────

void crossover() {
    const auto h = viz::golden_fixture();
    check(h.dims == std::vector<std::uint64_t>({64, 64, 256}), "fixture is not 64x64x256");
    std::map<std::string, std::string> golden;
    for (const auto& l : testing::lines(testing::read_file(testing::golden_dir() / "viz_fixture.txt"))) {
        if (l.empty() || l[0] == '#') continue;
        golden[l.substr(0, l.find('='))] = l.substr(l.find('=') + 1);
    }
    const auto sweep = viz::default_sweep();
    const auto res = viz::crossover_benchmark(h, sweep);
    check(res.crossover.has_value(), "no crossover found");
    int changes = 0;
    for (std::size_t i = 1; i < res.rows.size(); ++i) {
        const bool a = res.rows[i - 1].compressed.total_time < res.rows[i - 1].direct.total_time;
        const bool b = res.rows[i].compressed.total_time < res.rows[i].direct.total_time;
        changes += a != b;
    }
    check(changes == 1, fmt::format("{} winner changes over the sweep", changes));
    for (const auto& row : res.rows) {
        if (row.bandwidth < *res.crossover) {
            check(row.compressed.total_time < row.direct.total_time, fmt::format("direct wins at {}", row.bandwidth));
        } else {
            check(row.direct.total_time < row.compressed.total_time,
                  fmt::format("compressed wins at {}", row.bandwidth));
        }
    }
    // Both sides of the crossover just outside it.
    for (double b : {*res.crossover * 0.999, *res.crossover * 1.001}) {
        const auto c = viz::transfer(h, viz::Mode::Compressed, {b, 0.0}).total_time;
        const auto d = viz::transfer(h, viz::Mode::Direct, {b, 0.0}).total_time;
        check((b < *res.crossover) == (c < d), fmt::format("wrong winner at {}", b));
    }
    const double fixture = std::stod(golden.at("crossover"));
    check(std::abs(*res.crossover - fixture) <= fixture * 1e-9,
          fmt::format("crossover {:.10g} vs fixture {:.10g}", *res.crossover, fixture));
    std::cout << fmt::format("  crossover {:.6f} B/s\n", *res.crossover);
}

// ── dual-port transport ─────────────────────────────────────────────

void dual_port() {
    const auto dir = testing::scratch("dpm-large");
    dpm::DpmWindow tx(dir / "w", true);
    dpm::DpmWindow rx(dir / "w", false);
    check(fs::file_size(dir / "w") == 131072, "window is not 131072 bytes");
    Rng rng(200000);
    std::string msg(200000, '\0');
    for (auto& c : msg) c = static_cast<char>(rng.bits());
    check(dpm::MessageWriter::chunk_count(msg.size()) >= 2, "message fits one chunk");
    bool sent = false;
    std::thread writer([&] { sent = dpm::MessageWriter(tx.host_to_kernel()).send(msg, 5s); });
    dpm::MessageReader reader(rx.host_to_kernel());
    const auto got = reader.receive(5s);
    writer.join();
    check(sent, "writer timed out");
    check(got && *got == msg, "reassembled message differs");

    const auto stream = testing::stream_session("accept-stream");
    const auto dual = testing::dpm_session("accept-dpm");
    check(stream.size() == 50 && dual.size() == 50, "session did not complete");
    for (std::size_t i = 0; i < stream.size(); ++i) {
        check(stream[i] == dual[i], fmt::format("reply {} differs between transports", i + 1));
    }
    const auto golden = testing::golden_replies();
    check(golden == stream, "replies differ from the golden session");
}

struct Criterion {
    const char* name;
    double bound_s;
    std::function<void()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"corpus-parse", 1.0, corpus_parse},
        {"snapshot-roundtrip", 5.0, snapshot_roundtrip},
        {"crash-resume-sweep", 30.0, crash_sweep},
        {"nonfatal-isolation", 10.0, nonfatal_isolation},
        {"fault-rate-calibration", 10.0, fault_rates},
        {"codec-rebin", 5.0, codec_property},
        {"crossover", 5.0, crossover},
        {"dual-port-transport", 5.0, dual_port},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string error;
        try {
            c.run();
        } catch (const Failure& f) {
            error = f.what;
        } catch (const std::exception& e) {
            error = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (error.empty() && secs > c.bound_s) error = fmt::format("took longer than {} s", c.bound_s);
        const bool pass = error.empty();
        failures += !pass;
        std::cout << fmt::format("{} {} ({:.2f} s, bound {} s){}\n", pass ? "PASS" : "FAIL", c.name, secs, c.bound_s,
                                 pass ? "" : ": " + error)
                  << std::flush;
    }
    return failures;
}
