#pragma once

#include <cstdint>

#include "tftl/timeseries.hpp"

namespace tftl {

// Deterministic two-building generator for desk-scale experiments. The source
// building is a smooth, occupancy-driven campus profile; the target building
// is a structurally different site: low base load, evening instead of midday
// peak, rare tall spikes, a slow upward trend, and a channel set that only
// partially overlaps the source's. Default sizes mirror the real dataset's
// train/fine-tune/test row counts.
struct SynthPair {
    TimeSeriesFrame source;
    TimeSeriesFrame target;  // fine-tune pool followed by the test span
    int target_ft_hours = 0;
    int target_test_hours = 0;
};

SynthPair synth_two_buildings(std::uint64_t seed, int source_hours = 13244,
                              int target_ft_hours = 4965, int target_test_hours = 1437);

}  // namespace tftl
