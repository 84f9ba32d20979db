#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tftl/error.hpp"

namespace tftl {

enum class ChannelKind { TargetComponent, UnknownCovariate, KnownCovariate };

const char* channel_kind_name(ChannelKind kind);
ChannelKind channel_kind_from_name(const std::string& name);

struct Channel {
    std::string name;
    ChannelKind kind = ChannelKind::UnknownCovariate;
    bool cumulative = false;
};

// Hourly-gridded multichannel series. Values are stored row-major T x C with
// 0.0 at masked positions; mask is 1 where the value was actually observed
// (or structurally zero after channel alignment).
struct TimeSeriesFrame {
    std::string domain;
    std::int64_t start_epoch_sec = 0;
    std::vector<Channel> channels;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
    // Cells that carry no recoverable information (meter resets): masked like
    // gaps, but never eligible for interpolation. Empty means none.
    std::vector<std::uint8_t> excluded;

    int rows() const {
        return channels.empty() ? 0 : static_cast<int>(values.size() / channels.size());
    }
    int cols() const { return static_cast<int>(channels.size()); }
    double value(int t, int c) const {
        return values[static_cast<std::size_t>(t) * channels.size() + c];
    }
    bool observed(int t, int c) const {
        return mask[static_cast<std::size_t>(t) * channels.size() + c] != 0;
    }
    bool is_excluded(int t, int c) const {
        return !excluded.empty() &&
               excluded[static_cast<std::size_t>(t) * channels.size() + c] != 0;
    }
    int channel_index(const std::string& name) const;
    std::int64_t epoch_at(int t) const { return start_epoch_sec + 3600LL * t; }

    void validate() const;
};

// Irregularly sampled raw input; NaN marks a missing cell.
struct RawSeries {
    std::string domain;
    std::int64_t unused = 0;
    std::vector<Channel> channels;
    std::vector<std::int64_t> timestamps;  // epoch seconds, monotone non-decreasing
    std::vector<double> values;            // N x C
};

struct RowRange {
    int start = 0;
    int end = 0;  // half-open
};

struct ScalerParams {
    struct MinMax {
        double min = 0.0;
        double max = 0.0;
    };
    std::string domain;
    bool fitted_on_training = false;
    std::vector<std::pair<std::string, MinMax>> channels;

    const MinMax* find(const std::string& name) const;
};

struct DropReport {
    struct Entry {
        std::string name;
        double missing_fraction = 0.0;
    };
    std::vector<Entry> dropped;
};

struct AlignReport {
    std::vector<std::string> dropped_extra_channels;
    std::vector<std::string> zero_filled_channels;
};

// Derived aggregate target: the sum of all target-component (electricity
// sub-meter) channels, appended as an unknown covariate so its history also
// feeds the encoder.
inline constexpr const char* kAggregateTargetChannel = "electricity_aggregate";

// --- preprocessing steps --------------------------------------------------

// (1) Mean per hourly bucket; empty buckets masked missing.
TimeSeriesFrame resample_hourly(const RawSeries& raw);

// (2) Linear interpolation across gaps of length <= max_gap_hours, both ends
// observed; longer and leading/trailing gaps stay masked.
TimeSeriesFrame fill_short_gaps(const TimeSeriesFrame& frame, int max_gap_hours = 4);

// (3) Finite differences on channels flagged cumulative; the first step and
// negative differences (meter resets) are masked. Output channels have the
// cumulative flag cleared.
TimeSeriesFrame diff_cumulative(const TimeSeriesFrame& frame);

// (4) Drops channels whose missing fraction strictly exceeds the threshold.
TimeSeriesFrame drop_sparse_channels(const TimeSeriesFrame& frame, double threshold = 0.30,
                                     DropReport* report = nullptr);

// (5) Per-channel min-max over observed entries of the train range. Fitting a
// range that intersects the declared holdout is a leakage error.
ScalerParams fit_scaler(const TimeSeriesFrame& frame, RowRange train_range,
                        std::optional<RowRange> holdout = std::nullopt);
TimeSeriesFrame apply_scaler(const TimeSeriesFrame& frame, const ScalerParams& scaler,
                             bool allow_cross_domain = false);

// Reorders/pads the frame to exactly the canonical channel list: shared
// channels keep their values, absent ones become structural zeros (observed),
// extra ones are dropped and reported.
TimeSeriesFrame align_channels(const TimeSeriesFrame& frame,
                               const std::vector<Channel>& canonical,
                               AlignReport* report = nullptr);

// Canonical channel union: source channels in source order, then channels
// that exist only in the target, in target order.
std::vector<Channel> channel_union(const TimeSeriesFrame& source, const TimeSeriesFrame& target);

// Appends the aggregate electricity channel (sum of target components; masked
// where any component is missing).
TimeSeriesFrame derive_target(const TimeSeriesFrame& frame);

TimeSeriesFrame slice_rows(const TimeSeriesFrame& frame, int start, int len);

}  // namespace tftl
