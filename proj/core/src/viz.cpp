// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/viz.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "beamctl/error.hpp"
#include "beamctl/residents.hpp"

namespace beamctl::viz {

// ── rebin ───────────────────────────────────────────────────────────

Histogram rebin(const Histogram& h, std::span<const std::uint64_t> factors) {
    if (factors.size() != h.dims.size()) {
        throw Error(Errc::BadFactors, fmt::format("{} rebin factors for {} axes", factors.size(), h.dims.size()));
    }
    std::vector<std::uint64_t> out_dims(h.dims.size());
    for (std::size_t i = 0; i < h.dims.size(); ++i) {
        if (factors[i] == 0 || h.dims[i] % factors[i] != 0) {
            throw Error(Errc::BadFactors,
                        fmt::format("factor {} does not divide extent {} of axis {}", factors[i], h.dims[i], i));
        }
        out_dims[i] = h.dims[i] / factors[i];
    }
    Histogram out = Histogram::zeros(out_dims);
    out.monitor = h.monitor;
    out.live_time = h.live_time;
    if (h.cells() == 0) return out;

    // Walk the input in row-major order keeping a multi-index.
    const std::size_t n = h.dims.size();
    std::vector<std::uint64_t> idx(n, 0);
    for (std::uint64_t flat = 0; flat < h.counts.size(); ++flat) {
        std::uint64_t o = 0;
        for (std::size_t a = 0; a < n; ++a) o = o * out_dims[a] + idx[a] / factors[a];
        out.counts[o] += h.counts[flat];
        for (std::size_t a = n; a-- > 0;) {
            if (++idx[a] < h.dims[a]) break;
            idx[a] = 0;
        }
    }
    return out;
}

// ── codec ───────────────────────────────────────────────────────────

void put_varint(std::string& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<char>((v & 0x7f) | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<char>(v));
}

std::uint64_t get_varint(std::string_view in, std::size_t& pos) {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
        if (pos >= in.size()) throw Error(Errc::CorruptPayload, "truncated varint");
        const auto b = static_cast<std::uint8_t>(in[pos++]);
        if (shift == 63 && (b & 0x7e)) throw Error(Errc::CorruptPayload, "varint overflow");
        v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
        if (!(b & 0x80)) return v;
    }
    throw Error(Errc::CorruptPayload, "varint too long");
}

std::string encode_counts(std::span<const std::uint64_t> counts) {
    std::string out;
    std::size_t i = 0;
    while (i < counts.size()) {
        if (counts[i] != 0) {
            put_varint(out, counts[i++]);
            continue;
        }
        std::size_t j = i;
        while (j < counts.size() && counts[j] == 0) ++j;
        put_varint(out, 0);
        put_varint(out, j - i);
        i = j;
    }
    return out;
}

std::vector<std::uint64_t> decode_counts(std::string_view payload, std::uint64_t n) {
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
    std::size_t pos = 0;
    while (pos < payload.size()) {
        const auto v = get_varint(payload, pos);
        if (v != 0) {
            if (out.size() >= n) throw Error(Errc::CorruptPayload, "payload longer than header dims");
            out.push_back(v);
            continue;
        }
        const auto run = get_varint(payload, pos);
        if (run == 0 || run > n - out.size()) throw Error(Errc::CorruptPayload, "bad zero run");
        out.insert(out.end(), run, 0);
    }
    if (out.size() != n) {
        throw Error(Errc::CorruptPayload, fmt::format("payload holds {} cells, header says {}", out.size(), n));
    }
    return out;
}

// ── MAKS1 file ──────────────────────────────────────────────────────

namespace {

constexpr std::string_view kMagic = "MAKS1";
constexpr std::string_view kDirectMagic = "DRCT1";

template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::endian::native == std::endian::little);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
    if (in.size() - pos < sizeof(T)) throw Error(Errc::CorruptPayload, "truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

std::string join(const std::vector<std::uint64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s.push_back(',');
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<std::uint64_t> split(std::string_view s) {
    std::vector<std::uint64_t> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        auto comma = s.find(',', start);
        auto part = s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start);
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc{} || p != part.data() + part.size() || part.empty()) {
            throw Error(Errc::CorruptPayload, "bad integer list in header");
        }
        out.push_back(v);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

void put_field(std::string& out, std::string_view field) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.size()));
    out += field;
}

std::string_view get_field(std::string_view in, std::size_t& pos) {
    const auto len = get_le<std::uint32_t>(in, pos);
    if (in.size() - pos < len) throw Error(Errc::CorruptPayload, "truncated header field");
    auto f = in.substr(pos, len);
    pos += len;
    return f;
}

std::string real_text(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace

std::vector<std::uint64_t> CompressedSpectrum::rebinned_dims() const {
    std::vector<std::uint64_t> out(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) out[i] = factors[i] ? dims[i] / factors[i] : 0;
    return out;
}

std::string CompressedSpectrum::to_file() const {
    std::string out(kMagic);
    put_field(out, join(dims));
    put_field(out, join(factors));
    put_field(out, encoding);
    put_field(out, std::to_string(monitor));
    put_field(out, real_text(live_time));
    put_le<std::uint64_t>(out, payload.size());
    out += payload;
    return out;
}

CompressedSpectrum CompressedSpectrum::from_file(std::string_view bytes) {
    if (bytes.substr(0, kMagic.size()) != kMagic) throw Error(Errc::CorruptPayload, "not a MAKS1 file");
    std::size_t pos = kMagic.size();
    CompressedSpectrum c;
    c.dims = split(get_field(bytes, pos));
    c.factors = split(get_field(bytes, pos));
    c.encoding = std::string(get_field(bytes, pos));
    auto mon = get_field(bytes, pos);
    auto [p1, e1] = std::from_chars(mon.data(), mon.data() + mon.size(), c.monitor);
    auto lt = get_field(bytes, pos);
    auto [p2, e2] = std::from_chars(lt.data(), lt.data() + lt.size(), c.live_time);
    if (e1 != std::errc{} || p1 != mon.data() + mon.size() || e2 != std::errc{} ||
        p2 != lt.data() + lt.size()) {
        throw Error(Errc::CorruptPayload, "bad monitor or live_time field");
    }
    const auto len = get_le<std::uint64_t>(bytes, pos);
    if (bytes.size() - pos != len) throw Error(Errc::CorruptPayload, "payload length mismatch");
    c.payload = std::string(bytes.substr(pos));
    if (c.dims.size() != c.factors.size()) throw Error(Errc::CorruptPayload, "dims and factors disagree");
    return c;
}

CompressedSpectrum compress(const Histogram& h, std::span<const std::uint64_t> factors) {
    Histogram r = rebin(h, factors);
    CompressedSpectrum c;
    c.dims = h.dims;
    c.factors.assign(factors.begin(), factors.end());
    c.monitor = h.monitor;
    c.live_time = h.live_time;
    c.payload = encode_counts(r.counts);
    return c;
}

CompressedSpectrum compress(const Histogram& h) {
    std::vector<std::uint64_t> ones(h.dims.size(), 1);
    return compress(h, ones);
}

Histogram decompress(const CompressedSpectrum& c) {
    if (c.encoding != kEncoding) throw Error(Errc::CorruptPayload, "unknown encoding " + c.encoding);
    if (c.dims.size() != c.factors.size()) throw Error(Errc::CorruptPayload, "dims and factors disagree");
    for (std::size_t i = 0; i < c.dims.size(); ++i) {
        if (c.factors[i] == 0 || c.dims[i] % c.factors[i] != 0) throw Error(Errc::CorruptPayload, "bad factors");
    }
    Histogram h;
    h.dims = c.rebinned_dims();
    h.counts = decode_counts(c.payload, Histogram::cell_count(h.dims));
    h.monitor = c.monitor;
    h.live_time = c.live_time;
    return h;
}

// ── direct readout ──────────────────────────────────────────────────

std::uint64_t direct_header_size(std::size_t ndims) noexcept {
    return kDirectMagic.size() + 4 + 8 * ndims + 8 + 8;
}

std::string serialize_direct(const Histogram& h) {
    std::string out(kDirectMagic);
    out.reserve(direct_header_size(h.dims.size()) + 8 * h.counts.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.dims.size()));
    for (auto d : h.dims) put_le<std::uint64_t>(out, d);
    put_le<std::uint64_t>(out, h.monitor);
    put_le<double>(out, h.live_time);
    const auto* raw = reinterpret_cast<const char*>(h.counts.data());
    out.append(raw, h.counts.size() * sizeof(std::uint64_t));
    return out;
}

Histogram parse_direct(std::string_view bytes) {
    if (bytes.substr(0, kDirectMagic.size()) != kDirectMagic) throw Error(Errc::CorruptPayload, "not a DRCT1 image");
    std::size_t pos = kDirectMagic.size();
    Histogram h;
    const auto n = get_le<std::uint32_t>(bytes, pos);
    if (n > 16) throw Error(Errc::CorruptPayload, "too many axes");
    for (std::uint32_t i = 0; i < n; ++i) h.dims.push_back(get_le<std::uint64_t>(bytes, pos));
    h.monitor = get_le<std::uint64_t>(bytes, pos);
    h.live_time = get_le<double>(bytes, pos);
    const auto cells = Histogram::cell_count(h.dims);
    if ((bytes.size() - pos) / 8 != cells || (bytes.size() - pos) % 8 != 0) {
        throw Error(Errc::CorruptPayload, "cell data does not match dims");
    }
    h.counts.resize(cells);
    std::memcpy(h.counts.data(), bytes.data() + pos, cells * 8);
    return h;
}

// ── transfer model ──────────────────────────────────────────────────

std::string_view mode_name(Mode m) noexcept { return m == Mode::Compressed ? "compressed" : "direct"; }

Mode parse_mode(std::string_view s) {
    if (s == "compressed") return Mode::Compressed;
    if (s == "direct") return Mode::Direct;
    throw Error(Errc::BadRequest, "unknown spectrum mode '" + std::string(s) + "'");
}

namespace {

void check_link(const LinkModel& link) {
    if (!(link.bandwidth > 0.0) || !std::isfinite(link.bandwidth)) {
        throw Error(Errc::InvalidValue, "bandwidth must be positive");
    }
    if (!(link.latency >= 0.0)) throw Error(Errc::InvalidValue, "latency must not be negative");
}

struct Prepared {
    std::uint64_t bytes;
    double prep;
};

Prepared prepare(const Histogram& h, Mode mode, const TransferOptions& o) {
    const double cells = static_cast<double>(h.cells());
    if (mode == Mode::Direct) {
        return {direct_header_size(h.dims.size()) + 8 * h.cells(), o.cost.serialize_per_cell * cells};
    }
    auto c = o.factors.empty() ? compress(h) : compress(h, o.factors);
    auto file = c.to_file();
    if (o.spool_file) {
        std::ofstream out(*o.spool_file, std::ios::binary | std::ios::trunc);
        out << file;
        if (!out) throw Error(Errc::IoError, "cannot write " + o.spool_file->string());
    }
    return {file.size(), o.cost.compress_per_cell * cells};
}

TransferReport report(Mode mode, const Prepared& p, const LinkModel& link) {
    TransferReport r;
    r.mode = mode;
    r.bytes_sent = p.bytes;
    r.prep_time = p.prep;
    r.transfer_time = link.latency + static_cast<double>(p.bytes) / link.bandwidth;
    r.total_time = r.prep_time + r.transfer_time;
    return r;
}

}  // namespace

TransferReport transfer(const Histogram& h, Mode mode, const LinkModel& link, const TransferOptions& options) {
    check_link(link);
    return report(mode, prepare(h, mode, options), link);
}

std::vector<double> default_sweep() {
    std::vector<double> out;
    for (int i = 0; i <= 20; ++i) out.push_back(std::pow(10.0, 4.0 + i / 5.0));
    return out;
}

BenchmarkResult crossover_benchmark(const Histogram& h, std::span<const double> sweep, double latency,
                                    const TransferOptions& options) {
    if (sweep.size() < 2 || !std::is_sorted(sweep.begin(), sweep.end()) ||
        std::adjacent_find(sweep.begin(), sweep.end()) != sweep.end()) {
        throw Error(Errc::InvalidValue, "sweep must be strictly ascending with at least two points");
    }
    // Preparation does not depend on the link; do it once per mode.
    const Prepared pc = prepare(h, Mode::Compressed, options);
    const Prepared pd = prepare(h, Mode::Direct, options);

    BenchmarkResult result;
    for (double b : sweep) {
        LinkModel link{b, latency};
        check_link(link);
        result.rows.push_back({b, report(Mode::Compressed, pc, link), report(Mode::Direct, pd, link)});
    }
    auto diff = [](const BenchmarkRow& r) { return r.compressed.total_time - r.direct.total_time; };
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        const double d0 = diff(result.rows[i - 1]);
        const double d1 = diff(result.rows[i]);
        if ((d0 < 0.0) == (d1 < 0.0)) continue;
        const double x0 = 1.0 / result.rows[i - 1].bandwidth;
        const double x1 = 1.0 / result.rows[i].bandwidth;
        const double x = x0 + (x1 - x0) * d0 / (d0 - d1);
        result.crossover = 1.0 / x;
        break;
    }
    return result;
}

std::string format_report(const BenchmarkResult& r) {
    std::string out = "bandwidth\tmode\tbytes\tprep\ttransfer\ttotal\n";
    for (const auto& row : r.rows) {
        for (const auto* t : {&row.compressed, &row.direct}) {
            out += fmt::format("{:.6g}\t{}\t{}\t{:.6g}\t{:.6g}\t{:.6g}\n", row.bandwidth, mode_name(t->mode),
                               t->bytes_sent, t->prep_time, t->transfer_time, t->total_time);
        }
    }
    out += r.crossover ? fmt::format("crossover={:.6g}\n", *r.crossover) : std::string("crossover=none\n");
    return out;
}

Histogram sample(const residents::DaqResident& daq) { return daq.sample(); }

Histogram golden_fixture() { return synthesize(psd_model(), kFixtureSeed, kFixtureEvents); }

}  // namespace beamctl::viz
