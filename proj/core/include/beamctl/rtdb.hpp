// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hierarchical, typed, revisioned in-memory variable database. Residents and
// interfaces never talk to each other directly; they read, write and watch
// variables here.

#include <chrono>
#include <compare>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "beamctl/clock.hpp"

namespace beamctl::rtdb {

/// `/daq/tofa/state`. At least one segment, each `[A-Za-z0-9_-]+`.
class VarPath {
public:
    /// Throws Error(InvalidPath).
    static VarPath parse(std::string_view text);
    static bool valid_segment(std::string_view segment) noexcept;

    explicit VarPath(std::vector<std::string> segments);

    const std::vector<std::string>& segments() const noexcept { return segments_; }
    const std::string& str() const noexcept { return rendered_; }

    VarPath child(std::string_view segment) const;
    bool has_prefix(const VarPath& prefix) const noexcept;

    bool operator==(const VarPath& other) const noexcept { return rendered_ == other.rendered_; }
    std::strong_ordering operator<=>(const VarPath& other) const noexcept {
        return rendered_ <=> other.rendered_;
    }

private:
    std::vector<std::string> segments_;
    std::string rendered_;
};

using IntArray = std::vector<std::int64_t>;
using VarValue = std::variant<std::int64_t, double, std::string, IntArray>;

enum class TypeTag : char { Int = 'I', Real = 'R', Text = 'T', IntArray = 'A' };

TypeTag tag_of(const VarValue& v) noexcept;
std::string_view tag_name(TypeTag t) noexcept;

/// Throws Error(InvalidValue) for NaN reals and text containing NUL.
void validate(const VarValue& v);

struct DbEntry {
    VarPath path;
    VarValue value;
    std::uint64_t revision = 0;
    SimTime wall_time{};
    std::string writer;
};

struct SnapshotRecord {
    VarPath path;
    VarValue value;
    std::uint64_t revision = 0;
};

/// Whole-database image. The serialized form is the recovery file format:
///
///     SNIX1 <global_revision> <time of the last change>
///     <path>\t<tag>\t<encoded value>
///     ...
///
/// Text is percent-encoded for TAB, LF and '%'; reals use the shortest
/// round-trip decimal; arrays are comma separated. Records are sorted bytewise
/// by path. Per-record revisions are not part of the file; parsed records carry
/// the header revision.
struct Snapshot {
    static constexpr int kFormatVersion = 1;

    int version = kFormatVersion;
    SimTime created{};
    std::uint64_t revision = 0;
    std::vector<SnapshotRecord> records;

    std::string serialize() const;
    /// Throws Error(FormatError).
    static Snapshot parse(std::string_view text);
};

std::string encode_value(const VarValue& v);
/// Throws Error(FormatError).
VarValue decode_value(TypeTag tag, std::string_view text);

/// Push half of the database contract: every change under a prefix, in
/// revision order, without gaps or duplicates. Delivery is decoupled from the
/// writer through an unbounded queue.
class Subscription {
public:
    explicit Subscription(std::optional<VarPath> prefix) : prefix_(std::move(prefix)) {}

    const std::optional<VarPath>& prefix() const noexcept { return prefix_; }

    std::optional<DbEntry> try_next();
    /// Waits up to `timeout`. Throws Error(StreamClosed) once closed and drained.
    std::optional<DbEntry> next(std::chrono::milliseconds timeout);
    void close();
    bool closed() const;
    std::size_t pending() const;

    // Called by Database under its write lock.
    bool matches(const VarPath& p) const noexcept;
    void push(const DbEntry& e);

private:
    std::optional<VarPath> prefix_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<DbEntry> queue_;
    bool closed_ = false;
};

class Database {
public:
    using TimeSource = std::function<SimTime()>;

    Database();
    explicit Database(TimeSource time_source);
    /// Closes every live subscription.
    ~Database();

    Database(const Database&) = delete;
    Database& operator=(const Database&) = delete;

    /// Returns the fresh revision. Throws TypeMismatch / InvalidValue.
    std::uint64_t set(const VarPath& path, VarValue value, std::string_view writer);
    std::uint64_t set(std::string_view path, VarValue value, std::string_view writer) {
        return set(VarPath::parse(path), std::move(value), writer);
    }

    /// Throws Error(NotFound).
    DbEntry get(const VarPath& path) const;
    DbEntry get(std::string_view path) const { return get(VarPath::parse(path)); }
    std::optional<DbEntry> find(const VarPath& path) const;
    std::optional<DbEntry> find(std::string_view path) const { return find(VarPath::parse(path)); }

    /// Sorted bytewise by rendered path; nullopt lists everything.
    std::vector<VarPath> list(const std::optional<VarPath>& prefix = std::nullopt) const;

    std::shared_ptr<Subscription> subscribe(std::optional<VarPath> prefix);

    Snapshot save() const;
    /// Replaces all content. The revision counter resumes above the snapshot's.
    void restore(const Snapshot& snapshot);

    std::uint64_t revision() const;
    std::size_t size() const;

    // Typed conveniences used by residents and the interpreter.
    std::optional<std::int64_t> get_int(std::string_view path) const;
    std::optional<double> get_real(std::string_view path) const;
    std::optional<std::string> get_text(std::string_view path) const;

private:
    struct Stored {
        VarPath path;
        VarValue value;
        std::uint64_t revision;
        SimTime wall_time;
        std::string writer;
    };

    DbEntry to_entry(const Stored& s) const;

    TimeSource time_source_;
    mutable std::shared_mutex mu_;
    std::map<std::string, Stored, std::less<>> vars_;
    std::uint64_t revision_ = 0;
    SimTime modified_{};
    std::vector<std::weak_ptr<Subscription>> subscribers_;
    std::map<std::string, SimTime, std::less<>> last_write_by_writer_;
};

}  // namespace beamctl::rtdb
