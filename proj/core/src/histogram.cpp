// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/histogram.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "beamctl/error.hpp"

namespace beamctl {

Histogram Histogram::zeros(std::vector<std::uint64_t> dims) {
    Histogram h;
    h.counts.assign(cell_count(dims), 0);
    h.dims = std::move(dims);
    return h;
}

std::uint64_t Histogram::cell_count(const std::vector<std::uint64_t>& dims) noexcept {
    if (dims.empty()) return 0;
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::uint64_t Histogram::total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::vector<std::uint64_t> Histogram::project_last_axis() const {
    if (dims.empty()) return {};
    const auto last = dims.back();
    std::vector<std::uint64_t> out(last, 0);
    if (last == 0) return out;
    for (std::size_t i = 0; i < counts.size(); ++i) out[i % last] += counts[i];
    return out;
}

std::string Histogram::to_dat() const {
    std::string out = fmt::format("HIST1 {}", dims.size());
    for (auto d : dims) out += fmt::format(" {}", d);
    char lt[32];
    auto r = std::to_chars(lt, lt + sizeof lt, live_time);
    out += fmt::format("\nmonitor={} live_time={}\n", monitor, std::string_view(lt, r.ptr - lt));
    out.reserve(out.size() + counts.size() * 3);
    for (auto c : counts) {
        out += std::to_string(c);
        out += '\n';
    }
    return out;
}

namespace {

std::string_view next_line(std::string_view text, std::size_t& pos) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) throw Error(Errc::FormatError, "truncated .dat file");
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
}

template <typename T>
T number(std::string_view s) {
    T v{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw Error(Errc::FormatError, "bad number '" + std::string(s) + "' in .dat file");
    }
    return v;
}

}  // namespace

Histogram Histogram::from_dat(std::string_view text) {
    std::size_t pos = 0;
    auto header = next_line(text, pos);
    if (header.substr(0, 6) != "HIST1 ") throw Error(Errc::FormatError, "not a HIST1 file");
    std::vector<std::string_view> words;
    for (std::size_t i = 6; i <= header.size();) {
        auto sp = header.find(' ', i);
        if (sp == std::string_view::npos) sp = header.size();
        words.push_back(header.substr(i, sp - i));
        i = sp + 1;
    }
    const auto ndims = number<std::size_t>(words.at(0));
    if (words.size() != ndims + 1) throw Error(Errc::FormatError, "dimension count mismatch");
    Histogram h;
    for (std::size_t i = 0; i < ndims; ++i) h.dims.push_back(number<std::uint64_t>(words[i + 1]));

    auto meta = next_line(text, pos);
    auto sp = meta.find(' ');
    if (meta.substr(0, 8) != "monitor=" || sp == std::string_view::npos ||
        meta.substr(sp + 1, 10) != "live_time=") {
        throw Error(Errc::FormatError, "bad monitor line");
    }
    h.monitor = number<std::uint64_t>(meta.substr(8, sp - 8));
    h.live_time = number<double>(meta.substr(sp + 11));

    const auto n = cell_count(h.dims);
    h.counts.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) h.counts.push_back(number<std::uint64_t>(next_line(text, pos)));
    if (pos != text.size()) throw Error(Errc::FormatError, "trailing data in .dat file");
    return h;
}

std::vector<std::uint64_t> SpectrumModel::dims() const {
    std::vector<std::uint64_t> d;
    for (const auto& a : axes) d.push_back(a.extent);
    return d;
}

std::uint64_t EventSampler::draw(Rng& rng) const {
    const auto& axes = model_->axes;
    const bool in_peak = rng.uniform() < model_->peak_fraction;
    std::uint64_t index = 0;
    for (const auto& ax : axes) {
        std::uint64_t coord;
        if (in_peak) {
            // Rejection keeps the peak shape; tails outside the axis are redrawn.
            double x;
            do {
                x = std::floor(rng.normal(ax.center, ax.width) + 0.5);
            } while (x < 0.0 || x >= static_cast<double>(ax.extent));
            coord = static_cast<std::uint64_t>(x);
        } else {
            coord = rng.below(ax.extent);
        }
        index = index * ax.extent + coord;
    }
    return index;
}

Histogram synthesize(const SpectrumModel& model, std::uint64_t seed, std::uint64_t events) {
    Histogram h = Histogram::zeros(model.dims());
    if (h.counts.empty()) return h;
    Rng rng(seed);
    EventSampler sampler(model);
    for (std::uint64_t i = 0; i < events; ++i) ++h.counts[sampler.draw(rng)];
    h.live_time = static_cast<double>(events) / model.event_rate;
    h.monitor = static_cast<std::uint64_t>(std::llround(h.live_time * model.monitor_rate));
    return h;
}

SpectrumModel psd_model() {
    SpectrumModel m;
    m.axes = {{64, 31.5, 4.0}, {64, 31.5, 4.0}, {256, 100.0, 12.0}};
    m.peak_fraction = 0.7;
    return m;
}

SpectrumModel tof_model() {
    SpectrumModel m;
    m.axes = {{1024, 400.0, 25.0}};
    m.peak_fraction = 0.6;
    return m;
}

}  // namespace beamctl
