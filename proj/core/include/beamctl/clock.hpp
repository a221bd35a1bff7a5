// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace beamctl {

using Duration = std::chrono::microseconds;
using SimTime = std::chrono::sys_time<Duration>;

/// Default epoch of the simulated clock: the morning of the corpus run.
SimTime default_epoch();

/// `2002-05-15T08:00:00.000000Z`; always UTC with microseconds.
std::string format_iso8601(SimTime t);
std::optional<SimTime> parse_iso8601(std::string_view text);

constexpr Duration seconds_to_duration(double s) {
    return Duration{static_cast<std::int64_t>(s * 1e6 + (s >= 0 ? 0.5 : -0.5))};
}

constexpr double to_seconds(Duration d) {
    return static_cast<double>(d.count()) / 1e6;
}

/// Monotonic simulated time. Only the owner advances it; readers on other
/// threads see a consistent value.
class VirtualClock {
public:
    explicit VirtualClock(SimTime start = default_epoch())
        : now_us_(start.time_since_epoch().count()) {}

    SimTime now() const noexcept {
        return SimTime{Duration{now_us_.load(std::memory_order_acquire)}};
    }

    void advance(Duration d) noexcept {
        now_us_.fetch_add(d.count(), std::memory_order_acq_rel);
    }

private:
    std::atomic<std::int64_t> now_us_;
};

}  // namespace beamctl
