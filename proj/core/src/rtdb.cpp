// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/rtdb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <system_error>

#include "beamctl/error.hpp"

namespace beamctl::rtdb {

// ── VarPath ─────────────────────────────────────────────────────────

bool VarPath::valid_segment(std::string_view s) noexcept {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '-';
    });
}

VarPath::VarPath(std::vector<std::string> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw Error(Errc::InvalidPath, "path needs at least one segment");
    for (const auto& s : segments_) {
        if (!valid_segment(s)) throw Error(Errc::InvalidPath, "invalid path segment '" + s + "'");
        rendered_ += '/';
        rendered_ += s;
    }
}

VarPath VarPath::parse(std::string_view text) {
    if (text.size() < 2 || text.front() != '/') {
        throw Error(Errc::InvalidPath, "invalid path '" + std::string(text) + "'");
    }
    std::vector<std::string> segs;
    std::size_t pos = 1;
    while (true) {
        auto slash = text.find('/', pos);
        segs.emplace_back(text.substr(pos, slash == std::string_view::npos ? slash : slash - pos));
        if (slash == std::string_view::npos) break;
        pos = slash + 1;
    }
    return VarPath(std::move(segs));
}

VarPath VarPath::child(std::string_view segment) const {
    auto segs = segments_;
    segs.emplace_back(segment);
    return VarPath(std::move(segs));
}

bool VarPath::has_prefix(const VarPath& prefix) const noexcept {
    const auto& p = prefix.segments_;
    if (p.size() > segments_.size()) return false;
    return std::equal(p.begin(), p.end(), segments_.begin());
}

// ── values ──────────────────────────────────────────────────────────

TypeTag tag_of(const VarValue& v) noexcept {
    switch (v.index()) {
    case 0: return TypeTag::Int;
    case 1: return TypeTag::Real;
    case 2: return TypeTag::Text;
    default: return TypeTag::IntArray;
    }
}

std::string_view tag_name(TypeTag t) noexcept {
    switch (t) {
    case TypeTag::Int: return "Int";
    case TypeTag::Real: return "Real";
    case TypeTag::Text: return "Text";
    case TypeTag::IntArray: return "IntArray";
    }
    return "?";
}

void validate(const VarValue& v) {
    if (auto* d = std::get_if<double>(&v); d && std::isnan(*d)) {
        throw Error(Errc::InvalidValue, "NaN is not a storable value");
    }
    if (auto* s = std::get_if<std::string>(&v); s && s->find('\0') != std::string::npos) {
        throw Error(Errc::InvalidValue, "text values must not contain NUL");
    }
}

namespace {

std::string percent_encode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '\t': out += "%09"; break;
        case '\n': out += "%0A"; break;
        case '%': out += "%25"; break;
        default: out += c;
        }
    }
    return out;
}

std::string percent_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '%') {
            out += s[i];
            continue;
        }
        if (i + 2 >= s.size()) throw Error(Errc::FormatError, "truncated percent escape");
        unsigned v = 0;
        auto r = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
        if (r.ec != std::errc{} || r.ptr != s.data() + i + 3) {
            throw Error(Errc::FormatError, "bad percent escape");
        }
        out += static_cast<char>(v);
        i += 2;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view s) {
    T v{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || s.empty()) {
        throw Error(Errc::FormatError, "bad number '" + std::string(s) + "'");
    }
    return v;
}

template <typename T>
std::string to_text(T v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace

std::string encode_value(const VarValue& v) {
    switch (tag_of(v)) {
    case TypeTag::Int: return to_text(std::get<std::int64_t>(v));
    case TypeTag::Real: return to_text(std::get<double>(v));
    case TypeTag::Text: return percent_encode(std::get<std::string>(v));
    case TypeTag::IntArray: {
        std::string out;
        for (auto x : std::get<IntArray>(v)) {
            if (!out.empty()) out += ',';
            out += to_text(x);
        }
        return out;
    }
    }
    return {};
}

VarValue decode_value(TypeTag tag, std::string_view text) {
    switch (tag) {
    case TypeTag::Int: return parse_number<std::int64_t>(text);
    case TypeTag::Real: {
        double d = parse_number<double>(text);
        if (std::isnan(d)) throw Error(Errc::FormatError, "NaN in snapshot");
        return d;
    }
    case TypeTag::Text: return percent_decode(text);
    case TypeTag::IntArray: {
        IntArray out;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto comma = text.find(',', pos);
            auto piece = text.substr(pos, comma == std::string_view::npos ? comma : comma - pos);
            out.push_back(parse_number<std::int64_t>(piece));
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
            if (pos == text.size()) throw Error(Errc::FormatError, "trailing comma");
        }
        return out;
    }
    }
    throw Error(Errc::FormatError, "unknown tag");
}

// ── Snapshot ────────────────────────────────────────────────────────

std::string Snapshot::serialize() const {
    std::string out = "SNIX1 " + std::to_string(revision) + " " + format_iso8601(created) + "\n";
    for (const auto& r : records) {
        out += r.path.str();
        out += '\t';
        out += static_cast<char>(tag_of(r.value));
        out += '\t';
        out += encode_value(r.value);
        out += '\n';
    }
    return out;
}

Snapshot Snapshot::parse(std::string_view text) {
    auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw Error(Errc::FormatError, "missing snapshot header");
    std::string_view header = text.substr(0, nl);
    if (header.substr(0, 6) != "SNIX1 ") {
        throw Error(Errc::FormatError, "unsupported snapshot format");
    }
    header.remove_prefix(6);
    auto sp = header.find(' ');
    if (sp == std::string_view::npos) throw Error(Errc::FormatError, "bad snapshot header");
    Snapshot snap;
    snap.revision = parse_number<std::uint64_t>(header.substr(0, sp));
    auto created = parse_iso8601(header.substr(sp + 1));
    if (!created) throw Error(Errc::FormatError, "bad snapshot timestamp");
    snap.created = *created;

    std::size_t pos = nl + 1;
    std::string last_path;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) throw Error(Errc::FormatError, "truncated record");
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string_view::npos || t2 != t1 + 2) {
            throw Error(Errc::FormatError, "malformed record");
        }
        std::string_view path_text = line.substr(0, t1);
        char tag = line[t1 + 1];
        if (tag != 'I' && tag != 'R' && tag != 'T' && tag != 'A') {
            throw Error(Errc::FormatError, "unknown type tag");
        }
        VarPath path = [&] {
            try {
                return VarPath::parse(path_text);
            } catch (const Error&) {
                throw Error(Errc::FormatError, "bad record path");
            }
        }();
        if (!snap.records.empty() && !(last_path < path.str())) {
            throw Error(Errc::FormatError, "records not sorted or duplicated");
        }
        last_path = path.str();
        snap.records.push_back(
            {std::move(path), decode_value(static_cast<TypeTag>(tag), line.substr(t2 + 1)),
             snap.revision});
    }
    return snap;
}

// ── Subscription ────────────────────────────────────────────────────

bool Subscription::matches(const VarPath& p) const noexcept {
    return !prefix_ || p.has_prefix(*prefix_);
}

void Subscription::push(const DbEntry& e) {
    {
        std::lock_guard lk(mu_);
        if (closed_) return;
        queue_.push_back(e);
    }
    cv_.notify_one();
}

std::optional<DbEntry> Subscription::try_next() {
    std::lock_guard lk(mu_);
    if (queue_.empty()) {
        if (closed_) throw Error(Errc::StreamClosed, "subscription closed");
        return std::nullopt;
    }
    DbEntry e = std::move(queue_.front());
    queue_.pop_front();
    return e;
}

std::optional<DbEntry> Subscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) {
        if (closed_) throw Error(Errc::StreamClosed, "subscription closed");
        return std::nullopt;
    }
    DbEntry e = std::move(queue_.front());
    queue_.pop_front();
    return e;
}

void Subscription::close() {
    {
        std::lock_guard lk(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Subscription::closed() const {
    std::lock_guard lk(mu_);
    return closed_;
}

std::size_t Subscription::pending() const {
    std::lock_guard lk(mu_);
    return queue_.size();
}

// ── Database ────────────────────────────────────────────────────────

Database::Database()
    : Database([] {
          return std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now());
      }) {}

Database::Database(TimeSource time_source) : time_source_(std::move(time_source)) {}

Database::~Database() {
    for (auto& w : subscribers_) {
        if (auto sub = w.lock()) sub->close();
    }
}

DbEntry Database::to_entry(const Stored& s) const {
    return DbEntry{s.path, s.value, s.revision, s.wall_time, s.writer};
}

std::uint64_t Database::set(const VarPath& path, VarValue value, std::string_view writer) {
    validate(value);
    SimTime now = time_source_();
    std::unique_lock lk(mu_);
    auto it = vars_.find(path.str());
    if (it != vars_.end() && tag_of(it->second.value) != tag_of(value)) {
        throw Error(Errc::TypeMismatch,
                    path.str() + " holds " + std::string(tag_name(tag_of(it->second.value))) +
                        ", not " + std::string(tag_name(tag_of(value))));
    }
    auto w = last_write_by_writer_.find(writer);
    if (w == last_write_by_writer_.end()) {
        last_write_by_writer_.emplace(std::string(writer), now);
    } else {
        now = std::max(now, w->second);
        w->second = now;
    }
    const std::uint64_t rev = ++revision_;
    modified_ = std::max(modified_, now);
    Stored stored{path, std::move(value), rev, now, std::string(writer)};
    if (it == vars_.end()) {
        it = vars_.emplace(path.str(), std::move(stored)).first;
    } else {
        it->second = std::move(stored);
    }

    DbEntry event = to_entry(it->second);
    std::erase_if(subscribers_, [&](const std::weak_ptr<Subscription>& w) {
        auto sub = w.lock();
        if (!sub || sub->closed()) return true;
        if (sub->matches(event.path)) sub->push(event);
        return false;
    });
    return rev;
}

DbEntry Database::get(const VarPath& path) const {
    if (auto e = find(path)) return *std::move(e);
    throw Error(Errc::NotFound, path.str() + " not found");
}

std::optional<DbEntry> Database::find(const VarPath& path) const {
    std::shared_lock lk(mu_);
    auto it = vars_.find(path.str());
    if (it == vars_.end()) return std::nullopt;
    return to_entry(it->second);
}

std::vector<VarPath> Database::list(const std::optional<VarPath>& prefix) const {
    std::shared_lock lk(mu_);
    std::vector<VarPath> out;
    if (!prefix) {
        out.reserve(vars_.size());
        for (const auto& [_, s] : vars_) out.push_back(s.path);
        return out;
    }
    // Every descendant of /a/b renders as "/a/b" or "/a/b/..."; they form a
    // contiguous run starting at lower_bound("/a/b").
    const std::string& p = prefix->str();
    for (auto it = vars_.lower_bound(p); it != vars_.end(); ++it) {
        const std::string& key = it->first;
        if (key.compare(0, p.size(), p) != 0) break;
        if (it->second.path.has_prefix(*prefix)) out.push_back(it->second.path);
    }
    return out;
}

std::shared_ptr<Subscription> Database::subscribe(std::optional<VarPath> prefix) {
    auto sub = std::make_shared<Subscription>(std::move(prefix));
    std::unique_lock lk(mu_);
    subscribers_.push_back(sub);
    return sub;
}

Snapshot Database::save() const {
    Snapshot snap;
    std::shared_lock lk(mu_);
    snap.created = modified_;
    snap.revision = revision_;
    snap.records.reserve(vars_.size());
    for (const auto& [_, s] : vars_) snap.records.push_back({s.path, s.value, s.revision});
    return snap;
}

void Database::restore(const Snapshot& snapshot) {
    if (snapshot.version != Snapshot::kFormatVersion) {
        throw Error(Errc::FormatError, "unsupported snapshot version");
    }
    std::map<std::string, Stored, std::less<>> fresh;
    for (const auto& r : snapshot.records) {
        validate(r.value);
        auto [_, inserted] = fresh.emplace(
            r.path.str(), Stored{r.path, r.value, r.revision, snapshot.created, "restore"});
        if (!inserted) throw Error(Errc::FormatError, "duplicate path " + r.path.str());
    }
    std::unique_lock lk(mu_);
    vars_ = std::move(fresh);
    revision_ = snapshot.revision;
    modified_ = snapshot.created;
    last_write_by_writer_.clear();
}

std::uint64_t Database::revision() const {
    std::shared_lock lk(mu_);
    return revision_;
}

std::size_t Database::size() const {
    std::shared_lock lk(mu_);
    return vars_.size();
}

std::optional<std::int64_t> Database::get_int(std::string_view path) const {
    auto e = find(path);
    if (!e) return std::nullopt;
    if (auto* v = std::get_if<std::int64_t>(&e->value)) return *v;
    return std::nullopt;
}

std::optional<double> Database::get_real(std::string_view path) const {
    auto e = find(path);
    if (!e) return std::nullopt;
    if (auto* v = std::get_if<double>(&e->value)) return *v;
    return std::nullopt;
}

std::optional<std::string> Database::get_text(std::string_view path) const {
    auto e = find(path);
    if (!e) return std::nullopt;
    if (auto* v = std::get_if<std::string>(&e->value)) return *v;
    return std::nullopt;
}

}  // namespace beamctl::rtdb
