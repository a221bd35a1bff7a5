// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/clock.hpp"
#include "beamctl/error.hpp"
#include "beamctl/rng.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

namespace beamctl {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::InvalidPath: return "InvalidPath";
    case Errc::InvalidValue: return "InvalidValue";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::NotFound: return "NotFound";
    case Errc::StreamClosed: return "StreamClosed";
    case Errc::FormatError: return "FormatError";
    case Errc::ParseError: return "ParseError";
    case Errc::UnboundVariable: return "UnboundVariable";
    case Errc::DispatchError: return "DispatchError";
    case Errc::NotWaiting: return "NotWaiting";
    case Errc::NotRunning: return "NotRunning";
    case Errc::UnknownComponent: return "UnknownComponent";
    case Errc::IoError: return "IoError";
    case Errc::BadFactors: return "BadFactors";
    case Errc::CorruptPayload: return "CorruptPayload";
    case Errc::NoData: return "NoData";
    case Errc::BindError: return "BindError";
    case Errc::BadRequest: return "BadRequest";
    case Errc::Busy: return "Busy";
    case Errc::Timeout: return "Timeout";
    }
    return "Unknown";
}

// ── time ────────────────────────────────────────────────────────────

SimTime default_epoch() {
    using namespace std::chrono;
    return SimTime{sys_days{year{2002} / May / 15}} + hours{8};
}

std::string format_iso8601(SimTime t) {
    using namespace std::chrono;
    auto day = floor<days>(t);
    year_month_day ymd{day};
    hh_mm_ss hms{t - day};
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:06}Z",
                       static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()), hms.hours().count(),
                       hms.minutes().count(), hms.seconds().count(),
                       hms.subseconds().count());
}

std::optional<SimTime> parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    // YYYY-MM-DDTHH:MM:SS.ffffffZ
    if (s.size() != 27 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
        s[16] != ':' || s[19] != '.' || s[26] != 'Z') {
        return std::nullopt;
    }
    auto num = [&](std::size_t pos, std::size_t len, long long& out) {
        auto r = std::from_chars(s.data() + pos, s.data() + pos + len, out);
        return r.ec == std::errc{} && r.ptr == s.data() + pos + len;
    };
    long long y, mo, d, h, mi, se, us;
    if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, h) ||
        !num(14, 2, mi) || !num(17, 2, se) || !num(20, 6, us)) {
        return std::nullopt;
    }
    year_month_day ymd{year{static_cast<int>(y)}, month{static_cast<unsigned>(mo)},
                       day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 59) return std::nullopt;
    return SimTime{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{se} + microseconds{us};
}

// ── rng ─────────────────────────────────────────────────────────────

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    // Lemire-style rejection to stay unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::exponential(double rate) {
    double u;
    do {
        u = uniform();
    } while (u == 0.0);
    return -std::log(u) / rate;
}

double Rng::normal(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_normal_;
    }
    // Marsaglia polar method.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * m;
    has_spare_ = true;
    return mean + stddev * u * m;
}

std::uint64_t Rng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) {
        // Knuth multiplication.
        const double limit = std::exp(-mean);
        std::uint64_t k = 0;
        double p = uniform();
        while (p > limit) {
            ++k;
            p *= uniform();
        }
        return k;
    }
    // Split large means into independent pieces; Poisson is additive.
    std::uint64_t total = 0;
    double remaining = mean;
    while (remaining >= 30.0) {
        total += poisson(20.0);
        remaining -= 20.0;
    }
    return total + poisson(remaining);
}

}  // namespace beamctl
