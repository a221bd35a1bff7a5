// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include "beamctl/dpm.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <thread>

#include "beamctl/error.hpp"

namespace beamctl::dpm {

namespace {

std::uint64_t load(std::uint64_t& v) noexcept {
    return std::atomic_ref<std::uint64_t>(v).load(std::memory_order_acquire);
}

void store(std::uint64_t& v, std::uint64_t x) noexcept {
    std::atomic_ref<std::uint64_t>(v).store(x, std::memory_order_release);
}

// Spin briefly, then back off to short sleeps.
void backoff(int& spins) {
    if (++spins < 64) {
        std::this_thread::yield();
    } else {
        std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
}

}  // namespace

// ── Ring ────────────────────────────────────────────────────────────

std::uint64_t& Ring::head() const noexcept { return *reinterpret_cast<std::uint64_t*>(base_); }
std::uint64_t& Ring::tail() const noexcept { return *reinterpret_cast<std::uint64_t*>(base_ + 8); }

std::size_t Ring::used() const noexcept {
    return static_cast<std::size_t>(load(head()) - load(tail()));
}

bool Ring::try_write(std::string_view bytes) noexcept {
    const std::uint64_t h = load(head());
    const std::uint64_t t = load(tail());
    if (kRingCapacity - (h - t) < bytes.size()) return false;
    const std::size_t at = h % kRingCapacity;
    const std::size_t first = std::min(bytes.size(), kRingCapacity - at);
    std::memcpy(data() + at, bytes.data(), first);
    std::memcpy(data(), bytes.data() + first, bytes.size() - first);
    store(head(), h + bytes.size());
    return true;
}

bool Ring::peek(std::size_t offset, std::size_t n, char* out) const noexcept {
    const std::uint64_t t = load(tail());
    const std::uint64_t h = load(head());
    if (h - t < offset + n) return false;
    const std::size_t at = (t + offset) % kRingCapacity;
    const std::size_t first = std::min(n, kRingCapacity - at);
    std::memcpy(out, data() + at, first);
    std::memcpy(out + first, data(), n - first);
    return true;
}

void Ring::consume(std::size_t n) noexcept { store(tail(), load(tail()) + n); }

// ── DpmWindow ───────────────────────────────────────────────────────

DpmWindow::DpmWindow(const std::filesystem::path& file, bool create) : path_(file) {
    fd_ = ::open(file.c_str(), O_RDWR | (create ? O_CREAT | O_TRUNC : 0), 0644);
    if (fd_ < 0) throw Error(Errc::IoError, "cannot open " + file.string() + ": " + std::strerror(errno));
    if (create && ::ftruncate(fd_, static_cast<off_t>(kWindowSize)) != 0) {
        ::close(fd_);
        throw Error(Errc::IoError, "cannot size " + file.string());
    }
    struct stat st {};
    if (::fstat(fd_, &st) != 0 || static_cast<std::size_t>(st.st_size) != kWindowSize) {
        ::close(fd_);
        throw Error(Errc::FormatError, file.string() + " is not a 131072-byte window");
    }
    void* p = ::mmap(nullptr, kWindowSize, PROT_READ | PROT_WRITE, MAP_SHARED, fd_, 0);
    if (p == MAP_FAILED) {
        ::close(fd_);
        throw Error(Errc::IoError, "cannot map " + file.string());
    }
    base_ = static_cast<std::byte*>(p);
}

DpmWindow::~DpmWindow() {
    if (base_) ::munmap(base_, kWindowSize);
    if (fd_ >= 0) ::close(fd_);
}

// ── messages ────────────────────────────────────────────────────────

std::size_t MessageWriter::chunk_count(std::size_t n) noexcept {
    return n == 0 ? 1 : (n + kMaxChunkPayload - 1) / kMaxChunkPayload;
}

bool MessageWriter::send(std::string_view message, std::chrono::milliseconds timeout) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t chunks = chunk_count(message.size());
    std::string frame;
    for (std::size_t i = 0; i < chunks; ++i) {
        auto part = message.substr(i * kMaxChunkPayload, kMaxChunkPayload);
        const auto len = static_cast<std::uint32_t>(part.size());
        const auto seq = static_cast<std::uint16_t>(i);
        const std::uint16_t flags = i + 1 == chunks ? 1 : 0;
        frame.assign(kChunkHeader, '\0');
        std::memcpy(frame.data(), &len, 4);
        std::memcpy(frame.data() + 4, &seq, 2);
        std::memcpy(frame.data() + 6, &flags, 2);
        frame += part;
        int spins = 0;
        while (!ring_.try_write(frame)) {
            if (timeout != std::chrono::milliseconds::max() &&
                std::chrono::steady_clock::now() - start > timeout) {
                return false;
            }
            backoff(spins);
        }
    }
    return true;
}

std::optional<std::string> MessageReader::try_receive() {
    while (true) {
        char hdr[kChunkHeader];
        if (!ring_.peek(0, kChunkHeader, hdr)) return std::nullopt;
        std::uint32_t len;
        std::uint16_t seq;
        std::uint16_t flags;
        std::memcpy(&len, hdr, 4);
        std::memcpy(&seq, hdr + 4, 2);
        std::memcpy(&flags, hdr + 6, 2);
        if (len > kMaxChunkPayload || seq != next_seq_) {
            throw Error(Errc::CorruptPayload, "dual-port ring out of sequence");
        }
        // The writer publishes a whole chunk at once.
        const std::size_t old = partial_.size();
        partial_.resize(old + len);
        if (!ring_.peek(kChunkHeader, len, partial_.data() + old)) {
            partial_.resize(old);
            return std::nullopt;
        }
        ring_.consume(kChunkHeader + len);
        if (flags & 1) {
            next_seq_ = 0;
            return std::exchange(partial_, {});
        }
        ++next_seq_;
    }
}

std::optional<std::string> MessageReader::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int spins = 0;
    while (true) {
        if (auto m = try_receive()) return m;
        if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
        backoff(spins);
    }
}

}  // namespace beamctl::dpm
