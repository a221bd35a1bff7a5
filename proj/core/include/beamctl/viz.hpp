// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Spectrum transfer: rebin + lossless compression at the source, or raw
// "direct" readout, and a timing model to compare the two over a link.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beamctl/histogram.hpp"

namespace beamctl {
namespace residents {
class DaqResident;
}

namespace viz {

/// Sums blocks of `factors[i]` channels along every axis. Throws
/// Error(BadFactors) unless there is one factor per axis, each >= 1 and
/// dividing its extent.
Histogram rebin(const Histogram& h, std::span<const std::uint64_t> factors);

/// LEB128 unsigned varint.
void put_varint(std::string& out, std::uint64_t v);
/// Advances `pos`. Throws Error(CorruptPayload) on truncation or overflow.
std::uint64_t get_varint(std::string_view in, std::size_t& pos);

/// A zero run is varint(0) varint(length); any other count is varint(count).
std::string encode_counts(std::span<const std::uint64_t> counts);
/// Throws Error(CorruptPayload) unless the payload decodes to exactly `n` cells.
std::vector<std::uint64_t> decode_counts(std::string_view payload, std::uint64_t n);

inline constexpr std::string_view kEncoding = "zrl-leb128";

struct CompressedSpectrum {
    std::vector<std::uint64_t> dims;     // before rebin
    std::vector<std::uint64_t> factors;  // one per axis
    std::string encoding{kEncoding};
    std::uint64_t monitor = 0;
    double live_time = 0.0;
    std::string payload;

    std::vector<std::uint64_t> rebinned_dims() const;

    /// `MAKS1`, then dims, factors, encoding, monitor, live_time as u32-LE
    /// length-prefixed text fields, then a u64-LE payload length and payload.
    std::string to_file() const;
    /// Throws Error(CorruptPayload).
    static CompressedSpectrum from_file(std::string_view bytes);

    bool operator==(const CompressedSpectrum&) const = default;
};

CompressedSpectrum compress(const Histogram& h, std::span<const std::uint64_t> factors);
CompressedSpectrum compress(const Histogram& h);  // factor 1 on every axis
/// Throws Error(CorruptPayload).
Histogram decompress(const CompressedSpectrum& c);

/// Raw histogram memory image: `DRCT1`, u32 ndims, u64 dims, u64 monitor,
/// f64 live_time, then 8 bytes per cell, all little-endian.
std::string serialize_direct(const Histogram& h);
/// Throws Error(CorruptPayload).
Histogram parse_direct(std::string_view bytes);
std::uint64_t direct_header_size(std::size_t ndims) noexcept;

struct LinkModel {
    double bandwidth = 1e6;  // bytes per second, > 0
    double latency = 0.0;    // seconds per transfer, >= 0
};

/// CPU cost of preparing a transfer on the acquisition side, per input cell.
struct CostModel {
    double compress_per_cell = 1e-6;
    double serialize_per_cell = 5e-8;
};

enum class Mode { Compressed, Direct };
std::string_view mode_name(Mode m) noexcept;
/// Throws Error(BadRequest).
Mode parse_mode(std::string_view s);

struct TransferReport {
    Mode mode = Mode::Direct;
    std::uint64_t bytes_sent = 0;
    double prep_time = 0.0;
    double transfer_time = 0.0;  // latency + bytes / bandwidth
    double total_time = 0.0;
};

struct TransferOptions {
    CostModel cost;
    std::vector<std::uint64_t> factors;  // empty: no rebin
    /// Compressed mode writes its intermediate MAKS1 file here when set.
    std::optional<std::filesystem::path> spool_file;
};

/// Throws Error(InvalidValue) for a non-positive bandwidth or negative latency.
TransferReport transfer(const Histogram& h, Mode mode, const LinkModel& link,
                        const TransferOptions& options = {});

struct BenchmarkRow {
    double bandwidth;
    TransferReport compressed;
    TransferReport direct;
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    /// Bandwidth where the total times are equal, if the winner changes
    /// inside the sweep.
    std::optional<double> crossover;
};

/// Log-spaced sweep, 10 kB/s to 100 MB/s, five points per decade.
std::vector<double> default_sweep();

/// Throws Error(InvalidValue) unless the sweep is ascending with >= 2 points.
/// Both modes' totals are affine in 1/bandwidth, so interpolating in
/// 1/bandwidth between the bracketing points gives the exact crossover.
BenchmarkResult crossover_benchmark(const Histogram& h, std::span<const double> sweep,
                                    double latency = 0.0, const TransferOptions& options = {});

/// `bandwidth\tmode\tbytes\tprep\ttransfer\ttotal` rows plus `crossover=`.
std::string format_report(const BenchmarkResult& r);

/// Point-in-time copy of the DAQ histogram memory.
Histogram sample(const residents::DaqResident& daq);

/// Seed and event count of the peaked PSD fixture used for the crossover study.
inline constexpr std::uint64_t kFixtureSeed = 20020515;
inline constexpr std::uint64_t kFixtureEvents = 200000;
Histogram golden_fixture();

}  // namespace viz
}  // namespace beamctl
