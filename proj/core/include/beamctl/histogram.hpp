// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "beamctl/rng.hpp"

namespace beamctl {

/// N-dimensional detector counts, row-major. A 1-D TOF spectrum has dims
/// {channels}; a PSD image has {x, y, t}.
struct Histogram {
    std::vector<std::uint64_t> dims;
    std::vector<std::uint64_t> counts;
    std::uint64_t monitor = 0;
    double live_time = 0.0;

    static Histogram zeros(std::vector<std::uint64_t> dims);

    /// Product of the extents; zero for an empty dims list.
    static std::uint64_t cell_count(const std::vector<std::uint64_t>& dims) noexcept;
    std::uint64_t cells() const noexcept { return cell_count(dims); }
    std::uint64_t total() const noexcept;

    /// Sum over every axis but the last: the TOF projection.
    std::vector<std::uint64_t> project_last_axis() const;

    /// `<base>.dat` text:
    ///     HIST1 <ndims> <d1> [d2 d3]
    ///     monitor=<n> live_time=<s>
    ///     <one count per line>
    std::string to_dat() const;
    /// Throws Error(FormatError).
    static Histogram from_dat(std::string_view text);

    bool operator==(const Histogram&) const = default;
};

/// Peak position and width along one axis, in channels.
struct AxisProfile {
    std::uint64_t extent = 1;
    double center = 0.0;
    double width = 1.0;
};

/// Flat background plus a Gaussian peak. `peak_fraction` of events fall in
/// the peak, the rest uniformly over the whole histogram.
struct SpectrumModel {
    std::vector<AxisProfile> axes;
    double peak_fraction = 0.6;
    double event_rate = 200.0;   // detector events per live second
    double monitor_rate = 10.0;  // monitor counts per live second

    std::vector<std::uint64_t> dims() const;
};

/// Draws detector cells according to a SpectrumModel.
class EventSampler {
public:
    explicit EventSampler(const SpectrumModel& model) : model_(&model) {}

    /// Flat row-major index of one event.
    std::uint64_t draw(Rng& rng) const;

private:
    const SpectrumModel* model_;
};

/// Fills a histogram with exactly `events` draws. Deterministic in `seed`.
Histogram synthesize(const SpectrumModel& model, std::uint64_t seed, std::uint64_t events);

/// The 64×64×256 PSD model used for the transfer-crossover study.
SpectrumModel psd_model();
/// The 1024-channel TOF model of the default Tofa detector.
SpectrumModel tof_model();

}  // namespace beamctl
