// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "harness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;

namespace beamctl::testing {

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path corpus_path() { return fs::path(BEAMCTL_CORPUS_DIR) / "yumo_pb160502a.snx"; }
std::string corpus_text() { return read_file(corpus_path()); }
fs::path golden_dir() { return fs::path(BEAMCTL_GOLDEN_DIR); }

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("beamctl-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

namespace {

std::vector<std::string> files_with(const fs::path& root, const std::string& ext) {
    std::vector<std::string> out;
    if (!fs::exists(root)) return out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ext) {
            auto rel = fs::relative(e.path(), root);
            if (*rel.begin() == "state") continue;
            out.push_back(rel.generic_string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::string> protocol_files(const fs::path& root) { return files_with(root, ".txt"); }
std::vector<std::string> dat_files(const fs::path& root) { return files_with(root, ".dat"); }

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

std::vector<std::string> strip_times(const std::vector<std::string>& records) {
    std::vector<std::string> out;
    for (const auto& r : records) {
        auto tab = r.find('\t');
        out.push_back(tab == std::string::npos ? r : r.substr(tab + 1));
    }
    return out;
}

CorpusRun run_corpus(const fs::path& root, const CorpusOptions& options) {
    VirtualClock clock;
    supervisor::SupervisorConfig cfg;
    cfg.kernel.root = root;
    cfg.kernel.seed = options.seed;
    supervisor::Supervisor sup(cfg, clock);
    sup.kernel().launch_residents();
    sup.load_script(corpus_text());

    CorpusRun run;
    if (options.record_lines) {
        sup.on_statement([&](const script::ExecState& st) {
            if (!st.last_completed || run.lines_after.count(*st.last_completed)) return;
            auto& counts = run.lines_after[*st.last_completed];
            for (const auto& f : protocol_files(root)) counts[f] = lines(read_file(root / f)).size();
        });
    }
    if (options.crash_after) sup.crash_after_statement(*options.crash_after);
    const std::size_t from =
        options.from_checkpoint ? sup.kernel().checkpoint_index(options.from_checkpoint) : 0;
    sup.start(from);
    run.settled = sup.run_until_settled(std::chrono::hours(4));
    run.final = sup.kernel().exec_state();
    run.crash_count = sup.crash_count();
    run.log = read_file(sup.log_path());
    for (const auto& f : protocol_files(root)) run.files[f] = read_file(root / f);
    for (const auto& f : dat_files(root)) run.files[f] = read_file(root / f);
    return run;
}

std::vector<std::pair<SimTime, std::string>> parse_log(const std::string& text) {
    std::vector<std::pair<SimTime, std::string>> out;
    for (const auto& l : lines(text)) {
        auto tab = l.find('\t');
        if (tab == std::string::npos) continue;
        if (auto t = parse_iso8601(l.substr(0, tab))) out.emplace_back(*t, l.substr(tab + 1));
    }
    return out;
}

}  // namespace beamctl::testing
