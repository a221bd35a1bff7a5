// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
//
// beamctld [global options] [serve options]: same as `beamctl ... serve ...`.
// SIGUSR1 clears a nonfatal fault; SIGINT/SIGTERM stop the daemon.
#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
    // Global flags go before the subcommand, serve flags after it.
    static const std::vector<std::string> serve_flags = {"--root", "--dpm", "--nonfatal-per-day", "--fatal-per-week"};
    std::vector<std::string> global, serve;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        const auto name = a.substr(0, a.find('='));
        bool is_serve = false;
        for (const auto& f : serve_flags) is_serve |= name == f;
        auto& dst = is_serve ? serve : global;
        dst.push_back(a);
        if (a.find('=') == std::string::npos && a != "--dpm" && a.rfind("--", 0) == 0 && i + 1 < argc &&
            a != "--help" && a != "-h") {
            dst.push_back(argv[++i]);
        }
    }
    global.push_back("serve");
    global.insert(global.end(), serve.begin(), serve.end());
    return beamctl::cli::run(global, std::cin, std::cout, std::cerr);
}
