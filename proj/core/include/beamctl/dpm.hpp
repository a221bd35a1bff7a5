// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Simulated 128 KiB dual-port memory. The window is a memory-mapped file
// holding two 64 KiB rings, host->kernel at offset 0 and kernel->host at
// offset 65536. Each ring starts with two u64 counters (bytes ever written,
// bytes ever read) followed by the data area. Messages travel as chunks:
//
//     u32 length | u16 sequence | u16 flags (bit 0: final) | payload
//
// Exactly one writer and one reader per ring.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace beamctl::dpm {

inline constexpr std::size_t kWindowSize = 131072;
inline constexpr std::size_t kRingSize = kWindowSize / 2;
inline constexpr std::size_t kRingHeader = 16;
inline constexpr std::size_t kRingCapacity = kRingSize - kRingHeader;
inline constexpr std::size_t kChunkHeader = 8;
inline constexpr std::size_t kMaxChunkPayload = 16384;

/// A byte FIFO over one ring region.
class Ring {
public:
    explicit Ring(std::byte* region) noexcept : base_(region) {}

    std::size_t used() const noexcept;
    std::size_t free_space() const noexcept { return kRingCapacity - used(); }

    /// All or nothing; false when there is not enough room.
    bool try_write(std::string_view bytes) noexcept;
    /// Copies `n` bytes starting `offset` past the read position without consuming.
    bool peek(std::size_t offset, std::size_t n, char* out) const noexcept;
    void consume(std::size_t n) noexcept;

private:
    std::uint64_t& head() const noexcept;
    std::uint64_t& tail() const noexcept;
    std::byte* data() const noexcept { return base_ + kRingHeader; }

    std::byte* base_;
};

/// Owns the mapping.
class DpmWindow {
public:
    /// `create` sizes the file to exactly kWindowSize and zeroes it.
    /// Throws Error(IoError), or Error(FormatError) for a file of the wrong size.
    DpmWindow(const std::filesystem::path& file, bool create);
    ~DpmWindow();

    DpmWindow(const DpmWindow&) = delete;
    DpmWindow& operator=(const DpmWindow&) = delete;

    Ring host_to_kernel() noexcept { return Ring(base_); }
    Ring kernel_to_host() noexcept { return Ring(base_ + kRingSize); }
    std::size_t size() const noexcept { return kWindowSize; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::byte* base_ = nullptr;
};

/// Splits messages into chunks, waiting for room when the ring is full.
class MessageWriter {
public:
    explicit MessageWriter(Ring ring) noexcept : ring_(ring) {}

    /// False if the deadline passed first; the ring then holds a partial
    /// message and the channel must be discarded.
    bool send(std::string_view message,
              std::chrono::milliseconds timeout = std::chrono::milliseconds::max());
    /// Number of chunks `message` will occupy.
    static std::size_t chunk_count(std::size_t message_size) noexcept;

private:
    Ring ring_;
};

class MessageReader {
public:
    explicit MessageReader(Ring ring) noexcept : ring_(ring) {}

    /// Drains whatever chunks are available; returns a message once its
    /// final chunk arrives. Throws Error(CorruptPayload) on a sequence gap.
    std::optional<std::string> try_receive();
    std::optional<std::string> receive(std::chrono::milliseconds timeout);

private:
    Ring ring_;
    std::string partial_;
    std::uint16_t next_seq_ = 0;
};

}  // namespace beamctl::dpm
