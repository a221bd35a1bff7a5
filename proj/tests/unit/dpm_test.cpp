// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <thread>

#include <gtest/gtest.h>

#include "beamctl/dpm.hpp"
#include "beamctl/error.hpp"
#include "beamctl/rng.hpp"
#include "harness.hpp"

namespace beamctl::dpm {
namespace {

using namespace std::chrono_literals;

std::string random_bytes(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::string s(n, '\0');
    for (auto& c : s) c = static_cast<char>(rng.bits() & 0xff);
    return s;
}

TEST(Ring, FifoAndWrap) {
    std::vector<std::byte> mem(kRingSize);
    Ring r(mem.data());
    EXPECT_EQ(r.free_space(), kRingCapacity);
    std::string out(1000, '\0');
    for (int round = 0; round < 200; ++round) {
        auto chunk = random_bytes(1000, round);
        ASSERT_TRUE(r.try_write(chunk));
        ASSERT_TRUE(r.peek(0, 1000, out.data()));
        EXPECT_EQ(out, chunk);
        r.consume(1000);
    }
    EXPECT_EQ(r.used(), 0u);
    EXPECT_FALSE(r.try_write(std::string(kRingCapacity + 1, 'x')));
    EXPECT_TRUE(r.try_write(std::string(kRingCapacity, 'x')));
    EXPECT_FALSE(r.try_write("y"));
}

TEST(Window, SizeAndReopen) {
    auto dir = testing::scratch("window");
    {
        DpmWindow w(dir / "w", true);
        EXPECT_EQ(std::filesystem::file_size(dir / "w"), kWindowSize);
    }
    EXPECT_NO_THROW(DpmWindow(dir / "w", false));
    std::filesystem::resize_file(dir / "w", 100);
    EXPECT_THROW(DpmWindow(dir / "w", false), Error);
    EXPECT_THROW(DpmWindow(dir / "missing", false), Error);
}

TEST(Message, ChunkCount) {
    EXPECT_EQ(MessageWriter::chunk_count(0), 1u);
    EXPECT_EQ(MessageWriter::chunk_count(kMaxChunkPayload), 1u);
    EXPECT_EQ(MessageWriter::chunk_count(kMaxChunkPayload + 1), 2u);
    EXPECT_EQ(MessageWriter::chunk_count(200000), 13u);
}

TEST(Message, LargerThanWindow) {
    auto dir = testing::scratch("large");
    DpmWindow writer_side(dir / "w", true);
    DpmWindow reader_side(dir / "w", false);
    const auto msg = random_bytes(200000, 42);
    ASSERT_GT(msg.size(), kWindowSize);
    std::thread t([&] { EXPECT_TRUE(MessageWriter(writer_side.host_to_kernel()).send(msg, 5s)); });
    MessageReader reader(reader_side.host_to_kernel());
    auto got = reader.receive(5s);
    t.join();
    ASSERT_TRUE(got);
    EXPECT_EQ(*got, msg);
}

TEST(Message, EmptyDeliveredOnce) {
    auto dir = testing::scratch("empty");
    DpmWindow w(dir / "w", true);
    MessageWriter writer(w.kernel_to_host());
    MessageReader reader(w.kernel_to_host());
    ASSERT_TRUE(writer.send("", 1s));
    auto got = reader.try_receive();
    ASSERT_TRUE(got);
    EXPECT_TRUE(got->empty());
    EXPECT_FALSE(reader.try_receive());
}

TEST(Message, FullRingTimesOut) {
    auto dir = testing::scratch("full");
    DpmWindow w(dir / "w", true);
    MessageWriter writer(w.host_to_kernel());
    EXPECT_FALSE(writer.send(std::string(kRingCapacity * 2, 'z'), 50ms));
}

std::string frame(std::uint32_t len, std::uint16_t seq, std::uint16_t flags, char fill) {
    std::string f(kChunkHeader + len, fill);
    std::memcpy(f.data(), &len, 4);
    std::memcpy(f.data() + 4, &seq, 2);
    std::memcpy(f.data() + 6, &flags, 2);
    return f;
}

// A second writer starting its own message inside another one breaks the
// chunk sequence; the reader refuses the stream rather than splice them.
TEST(Message, InterleavedWritersRejected) {
    auto dir = testing::scratch("interleave");
    DpmWindow w(dir / "w", true);
    Ring ring = w.host_to_kernel();
    ASSERT_TRUE(ring.try_write(frame(10, 0, 0, 'a')));  // writer A, first of several
    ASSERT_TRUE(ring.try_write(frame(5, 0, 1, 'b')));   // writer B, whole message
    MessageReader reader(w.host_to_kernel());
    try {
        reader.try_receive();
        FAIL() << "expected CorruptPayload";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::CorruptPayload);
    }
}

}  // namespace
}  // namespace beamctl::dpm
