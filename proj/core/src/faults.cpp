// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/faults.hpp"

#include <cmath>

#include "beamctl/error.hpp"

namespace beamctl {

std::string_view fault_name(FaultKind k) noexcept {
    return k == FaultKind::Fatal ? "fatal" : "nonfatal";
}

FaultKind parse_fault(std::string_view s) {
    if (s == "nonfatal") return FaultKind::Nonfatal;
    if (s == "fatal") return FaultKind::Fatal;
    throw Error(Errc::BadRequest, "unknown fault kind '" + std::string(s) + "'");
}

void FaultProcess::Stream::draw(SimTime from) {
    if (rate_per_second <= 0.0) {
        next.reset();
        return;
    }
    // Virtual time resolution is one microsecond; never schedule two events
    // on the same instant.
    auto gap = seconds_to_duration(rng.exponential(rate_per_second));
    if (gap <= Duration::zero()) gap = Duration(1);
    next = from + gap;
}

FaultProcess::FaultProcess(const FaultModel& model, SimTime start)
    : model_(model),
      nonfatal_{FaultKind::Nonfatal, model.nonfatal_per_day / 86400.0,
                Rng(mix_seed(model.seed, fnv1a64("nonfatal"))), std::nullopt},
      fatal_{FaultKind::Fatal, model.fatal_per_week / (7 * 86400.0),
             Rng(mix_seed(model.seed, fnv1a64("fatal"))), std::nullopt} {
    if (!(model.nonfatal_per_day >= 0.0) || !(model.fatal_per_week >= 0.0) ||
        !std::isfinite(model.nonfatal_per_day) || !std::isfinite(model.fatal_per_week)) {
        throw Error(Errc::InvalidValue, "fault rates must be finite and non-negative");
    }
    nonfatal_.draw(start);
    fatal_.draw(start);
}

std::vector<FaultEvent> FaultProcess::advance_to(SimTime now) {
    std::vector<FaultEvent> out;
    while (auto e = tick(now)) out.push_back(*e);
    return out;
}

std::optional<FaultEvent> FaultProcess::tick(SimTime now) {
    Stream* first = nullptr;
    for (Stream* s : {&nonfatal_, &fatal_}) {
        if (s->next && *s->next <= now && (!first || *s->next < *first->next)) first = s;
    }
    if (!first) return std::nullopt;
    FaultEvent e{*first->next, first->kind};
    first->draw(e.at);
    return e;
}

}  // namespace beamctl
