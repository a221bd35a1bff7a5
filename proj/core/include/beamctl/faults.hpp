// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "beamctl/clock.hpp"
#include "beamctl/rng.hpp"

namespace beamctl {

/// Nonfatal: network I/O blocked, measurement unaffected.
/// Fatal: the whole kernel hangs until the watchdog restarts it.
enum class FaultKind { Nonfatal, Fatal };

std::string_view fault_name(FaultKind k) noexcept;
/// Throws Error(BadRequest).
FaultKind parse_fault(std::string_view s);

struct FaultModel {
    double nonfatal_per_day = 1.0;
    double fatal_per_week = 1.0;
    std::uint64_t seed = 1;
};

struct FaultEvent {
    SimTime at;
    FaultKind kind;
};

/// Two independent Poisson processes on the simulated clock.
class FaultProcess {
public:
    /// Throws Error(InvalidValue) for a negative rate.
    FaultProcess(const FaultModel& model, SimTime start);

    /// Events with time <= now not yet returned, in time order.
    std::vector<FaultEvent> advance_to(SimTime now);
    /// Polling form; returns at most one event.
    std::optional<FaultEvent> tick(SimTime now);

    const FaultModel& model() const noexcept { return model_; }

private:
    struct Stream {
        FaultKind kind;
        double rate_per_second;
        Rng rng;
        std::optional<SimTime> next;
        void draw(SimTime from);
    };

    FaultModel model_;
    Stream nonfatal_;
    Stream fatal_;
};

}  // namespace beamctl
