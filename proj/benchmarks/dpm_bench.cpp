// Copyright 2026 The beamctl Authors
// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include <benchmark/benchmark.h>

#include "beamctl/dpm.hpp"

namespace {

using namespace beamctl::dpm;

// Write then drain one message on a ring held in ordinary memory.
void BM_RingMessage(benchmark::State& state) {
    std::vector<std::byte> mem(kRingSize);
    Ring ring(mem.data());
    MessageWriter writer(ring);
    MessageReader reader(ring);
    const std::string msg(static_cast<std::size_t>(state.range(0)), 'x');
    for (auto _ : state) {
        writer.send(msg);
        benchmark::DoNotOptimize(reader.try_receive());
    }
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RingMessage)->Arg(64)->Arg(4096)->Arg(16384)->Arg(60000);

}  // namespace
