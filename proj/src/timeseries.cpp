#include "tftl/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace tftl {

const char* channel_kind_name(ChannelKind kind) {
    switch (kind) {
        case ChannelKind::TargetComponent: return "target_component";
        case ChannelKind::UnknownCovariate: return "unknown_covariate";
        case ChannelKind::KnownCovariate: return "known_covariate";
    }
    return "unknown_covariate";
}

ChannelKind channel_kind_from_name(const std::string& name) {
    if (name == "target_component") {
        return ChannelKind::TargetComponent;
    }
    if (name == "unknown_covariate") {
        return ChannelKind::UnknownCovariate;
    }
    if (name == "known_covariate") {
        return ChannelKind::KnownCovariate;
    }
    raise(ErrorKind::Ingestion, "unknown channel kind '" + name + "'");
}

int TimeSeriesFrame::channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].name == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void TimeSeriesFrame::validate() const {
    require(values.size() == mask.size(), ErrorKind::Contract,
            "frame: values/mask size mismatch");
    require(channels.empty() || values.size() % channels.size() == 0, ErrorKind::Contract,
            "frame: values size not a multiple of channel count");
    std::unordered_set<std::string> names;
    for (const Channel& c : channels) {
        require(names.insert(c.name).second, ErrorKind::Contract,
                "frame: duplicate channel name '" + c.name + "'");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (mask[i] && !std::isfinite(values[i])) {
            raise(ErrorKind::Numeric, "frame: non-finite observed value");
        }
    }
}

const ScalerParams::MinMax* ScalerParams::find(const std::string& name) const {
    for (const auto& [channel, mm] : channels) {
        if (channel == name) {
            return &mm;
        }
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// (1) resample
// ---------------------------------------------------------------------------

TimeSeriesFrame resample_hourly(const RawSeries& raw) {
    require(!raw.timestamps.empty(), ErrorKind::Contract, "resample_hourly: empty series");
    require(!raw.channels.empty(), ErrorKind::Contract, "resample_hourly: no channels");
    for (std::size_t i = 1; i < raw.timestamps.size(); ++i) {
        if (raw.timestamps[i] < raw.timestamps[i - 1]) {
            raise(ErrorKind::Ingestion,
                  "resample_hourly: timestamps not monotone at index " + std::to_string(i));
        }
    }
    const int n_channels = static_cast<int>(raw.channels.size());
    const std::int64_t first_hour = raw.timestamps.front() / 3600;
    const std::int64_t last_hour = raw.timestamps.back() / 3600;
    const int n_hours = static_cast<int>(last_hour - first_hour + 1);

    TimeSeriesFrame frame;
    frame.domain = raw.domain;
    frame.start_epoch_sec = first_hour * 3600;
    frame.channels = raw.channels;
    frame.values.assign(static_cast<std::size_t>(n_hours) * n_channels, 0.0);
    frame.mask.assign(frame.values.size(), 0);

    std::vector<double> sums(frame.values.size(), 0.0);
    std::vector<int> counts(frame.values.size(), 0);
    for (std::size_t i = 0; i < raw.timestamps.size(); ++i) {
        const int bucket = static_cast<int>(raw.timestamps[i] / 3600 - first_hour);
        for (int c = 0; c < n_channels; ++c) {
            const double v = raw.values[i * n_channels + c];
            if (std::isfinite(v)) {
                const std::size_t idx = static_cast<std::size_t>(bucket) * n_channels + c;
                sums[idx] += v;
                counts[idx] += 1;
            }
        }
    }
    for (std::size_t idx = 0; idx < sums.size(); ++idx) {
        if (counts[idx] > 0) {
            frame.values[idx] = sums[idx] / counts[idx];
            frame.mask[idx] = 1;
        }
    }
    frame.validate();
    return frame;
}

// ---------------------------------------------------------------------------
// (2) short-gap filling
// ---------------------------------------------------------------------------

TimeSeriesFrame fill_short_gaps(const TimeSeriesFrame& frame, int max_gap_hours) {
    require(max_gap_hours >= 0, ErrorKind::Contract, "fill_short_gaps: negative gap length");
    TimeSeriesFrame out = frame;
    const int T = frame.rows();
    const int C = frame.cols();
    for (int c = 0; c < C; ++c) {
        int t = 0;
        while (t < T) {
            if (frame.observed(t, c)) {
                ++t;
                continue;
            }
            int gap_end = t;
            bool fillable = true;
            while (gap_end < T && !frame.observed(gap_end, c)) {
                fillable = fillable && !frame.is_excluded(gap_end, c);
                ++gap_end;
            }
            const int gap_len = gap_end - t;
            const bool left_anchor = t > 0;
            const bool right_anchor = gap_end < T;
            if (fillable && left_anchor && right_anchor && gap_len <= max_gap_hours) {
                const double lo = frame.value(t - 1, c);
                const double hi = frame.value(gap_end, c);
                for (int k = 0; k < gap_len; ++k) {
                    const double frac = static_cast<double>(k + 1) / (gap_len + 1);
                    const std::size_t idx = static_cast<std::size_t>(t + k) * C + c;
                    out.values[idx] = lo + (hi - lo) * frac;
                    out.mask[idx] = 1;
                }
            }
            t = gap_end;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// (3) cumulative-meter differencing
// ---------------------------------------------------------------------------

TimeSeriesFrame diff_cumulative(const TimeSeriesFrame& frame) {
    TimeSeriesFrame out = frame;
    const int T = frame.rows();
    const int C = frame.cols();
    for (int c = 0; c < C; ++c) {
        if (!frame.channels[static_cast<std::size_t>(c)].cumulative) {
            continue;
        }
        out.channels[static_cast<std::size_t>(c)].cumulative = false;
        if (out.excluded.empty()) {
            out.excluded.assign(out.mask.size(), 0);
        }
        for (int t = T - 1; t >= 0; --t) {
            const std::size_t idx = static_cast<std::size_t>(t) * C + c;
            if (t == 0) {
                out.values[idx] = 0.0;
                out.mask[idx] = 0;
                continue;
            }
            const bool both = frame.observed(t, c) && frame.observed(t - 1, c);
            const double diff = frame.value(t, c) - frame.value(t - 1, c);
            if (both && diff >= 0.0) {
                out.values[idx] = diff;
                out.mask[idx] = 1;
            } else {
                out.values[idx] = 0.0;
                out.mask[idx] = 0;
                if (both) {
                    // Meter reset: the drop carries no consumption information
                    // and must never be interpolated later.
                    out.excluded[idx] = 1;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// (4) sparse-channel removal
// ---------------------------------------------------------------------------

TimeSeriesFrame drop_sparse_channels(const TimeSeriesFrame& frame, double threshold,
                                     DropReport* report) {
    require(threshold >= 0.0 && threshold <= 1.0, ErrorKind::Contract,
            "drop_sparse_channels: threshold outside [0,1]");
    const int T = frame.rows();
    const int C = frame.cols();
    std::vector<int> keep;
    for (int c = 0; c < C; ++c) {
        int missing = 0;
        for (int t = 0; t < T; ++t) {
            missing += frame.observed(t, c) ? 0 : 1;
        }
        const double fraction = T > 0 ? static_cast<double>(missing) / T : 0.0;
        if (fraction > threshold) {
            if (report != nullptr) {
                report->dropped.push_back({frame.channels[static_cast<std::size_t>(c)].name,
                                           fraction});
            }
        } else {
            keep.push_back(c);
        }
    }
    TimeSeriesFrame out;
    out.domain = frame.domain;
    out.start_epoch_sec = frame.start_epoch_sec;
    out.values.reserve(static_cast<std::size_t>(T) * keep.size());
    out.mask.reserve(static_cast<std::size_t>(T) * keep.size());
    for (int c : keep) {
        out.channels.push_back(frame.channels[static_cast<std::size_t>(c)]);
    }
    const bool has_excluded = !frame.excluded.empty();
    if (has_excluded) {
        out.excluded.reserve(static_cast<std::size_t>(T) * keep.size());
    }
    for (int t = 0; t < T; ++t) {
        for (int c : keep) {
            out.values.push_back(frame.value(t, c));
            out.mask.push_back(frame.observed(t, c) ? 1 : 0);
            if (has_excluded) {
                out.excluded.push_back(frame.is_excluded(t, c) ? 1 : 0);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// (5) scaling
// ---------------------------------------------------------------------------

ScalerParams fit_scaler(const TimeSeriesFrame& frame, RowRange train_range,
                        std::optional<RowRange> holdout) {
    require(train_range.start >= 0 && train_range.end <= frame.rows() &&
                train_range.start < train_range.end,
            ErrorKind::Contract, "fit_scaler: train range outside frame");
    if (holdout.has_value()) {
        const bool intersects =
            train_range.start < holdout->end && holdout->start < train_range.end;
        if (intersects) {
            raise(ErrorKind::Leakage,
                  "fit_scaler: train range intersects the declared holdout range");
        }
    }
    ScalerParams scaler;
    scaler.domain = frame.domain;
    scaler.fitted_on_training = true;
    const int C = frame.cols();
    for (int c = 0; c < C; ++c) {
        double lo = 0.0;
        double hi = 0.0;
        bool seen = false;
        for (int t = train_range.start; t < train_range.end; ++t) {
            if (!frame.observed(t, c)) {
                continue;
            }
            const double v = frame.value(t, c);
            if (!seen) {
                lo = hi = v;
                seen = true;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        scaler.channels.push_back({frame.channels[static_cast<std::size_t>(c)].name, {lo, hi}});
    }
    return scaler;
}

TimeSeriesFrame apply_scaler(const TimeSeriesFrame& frame, const ScalerParams& scaler,
                             bool allow_cross_domain) {
    require(scaler.fitted_on_training, ErrorKind::Leakage,
            "apply_scaler: scaler was not fitted on training data");
    if (frame.domain != scaler.domain && !allow_cross_domain) {
        raise(ErrorKind::Leakage, "apply_scaler: scaler fitted on domain '" + scaler.domain +
                                      "' applied to '" + frame.domain +
                                      "'; cross-domain application must be explicit");
    }
    TimeSeriesFrame out = frame;
    const int T = frame.rows();
    const int C = frame.cols();
    for (int c = 0; c < C; ++c) {
        const auto* mm = scaler.find(frame.channels[static_cast<std::size_t>(c)].name);
        require(mm != nullptr, ErrorKind::Contract,
                "apply_scaler: channel '" + frame.channels[static_cast<std::size_t>(c)].name +
                    "' missing from scaler");
        const double span = mm->max - mm->min;
        for (int t = 0; t < T; ++t) {
            const std::size_t idx = static_cast<std::size_t>(t) * C + c;
            if (!frame.mask[idx]) {
                out.values[idx] = 0.0;
                continue;
            }
            out.values[idx] = span > 0.0 ? (frame.values[idx] - mm->min) / span : 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Channel alignment
// ---------------------------------------------------------------------------

TimeSeriesFrame align_channels(const TimeSeriesFrame& frame,
                               const std::vector<Channel>& canonical, AlignReport* report) {
    const int T = frame.rows();
    TimeSeriesFrame out;
    out.domain = frame.domain;
    out.start_epoch_sec = frame.start_epoch_sec;
    out.channels = canonical;
    out.values.assign(static_cast<std::size_t>(T) * canonical.size(), 0.0);
    // Absent channels are structural zeros, not gaps: mask stays observed.
    out.mask.assign(out.values.size(), 1);

    std::unordered_map<std::string, int> canonical_index;
    for (std::size_t i = 0; i < canonical.size(); ++i) {
        canonical_index[canonical[i].name] = static_cast<int>(i);
    }
    std::vector<int> source_col(canonical.size(), -1);
    for (int c = 0; c < frame.cols(); ++c) {
        const std::string& name = frame.channels[static_cast<std::size_t>(c)].name;
        auto it = canonical_index.find(name);
        if (it == canonical_index.end()) {
            if (report != nullptr) {
                report->dropped_extra_channels.push_back(name);
            }
            continue;
        }
        source_col[static_cast<std::size_t>(it->second)] = c;
    }
    for (std::size_t k = 0; k < canonical.size(); ++k) {
        if (source_col[k] < 0 && report != nullptr) {
            report->zero_filled_channels.push_back(canonical[k].name);
        }
    }
    const int K = static_cast<int>(canonical.size());
    if (!frame.excluded.empty()) {
        out.excluded.assign(out.values.size(), 0);
    }
    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < K; ++k) {
            const int c = source_col[static_cast<std::size_t>(k)];
            if (c < 0) {
                continue;
            }
            const std::size_t idx = static_cast<std::size_t>(t) * K + k;
            out.values[idx] = frame.value(t, c);
            out.mask[idx] = frame.observed(t, c) ? 1 : 0;
            if (!out.excluded.empty()) {
                out.excluded[idx] = frame.is_excluded(t, c) ? 1 : 0;
            }
        }
    }
    return out;
}

std::vector<Channel> channel_union(const TimeSeriesFrame& source, const TimeSeriesFrame& target) {
    std::vector<Channel> canonical = source.channels;
    std::unordered_set<std::string> seen;
    for (const Channel& c : canonical) {
        seen.insert(c.name);
    }
    for (const Channel& c : target.channels) {
        if (seen.insert(c.name).second) {
            canonical.push_back(c);
        }
    }
    return canonical;
}

// ---------------------------------------------------------------------------
// Aggregate target derivation
// ---------------------------------------------------------------------------

TimeSeriesFrame derive_target(const TimeSeriesFrame& frame) {
    require(frame.channel_index(kAggregateTargetChannel) < 0, ErrorKind::Contract,
            "derive_target: frame already carries the aggregate channel");
    const int T = frame.rows();
    const int C = frame.cols();
    std::vector<int> components;
    for (int c = 0; c < C; ++c) {
        if (frame.channels[static_cast<std::size_t>(c)].kind == ChannelKind::TargetComponent) {
            components.push_back(c);
        }
    }
    require(!components.empty(), ErrorKind::Contract,
            "derive_target: frame has no target_component channels");

    TimeSeriesFrame out;
    out.domain = frame.domain;
    out.start_epoch_sec = frame.start_epoch_sec;
    out.channels = frame.channels;
    out.channels.push_back({kAggregateTargetChannel, ChannelKind::UnknownCovariate, false});
    const int K = C + 1;
    out.values.assign(static_cast<std::size_t>(T) * K, 0.0);
    out.mask.assign(out.values.size(), 0);
    if (!frame.excluded.empty()) {
        out.excluded.assign(out.values.size(), 0);
    }
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < C; ++c) {
            out.values[static_cast<std::size_t>(t) * K + c] = frame.value(t, c);
            out.mask[static_cast<std::size_t>(t) * K + c] = frame.observed(t, c) ? 1 : 0;
            if (!out.excluded.empty()) {
                out.excluded[static_cast<std::size_t>(t) * K + c] =
                    frame.is_excluded(t, c) ? 1 : 0;
            }
        }
        double total = 0.0;
        bool complete = true;
        for (int c : components) {
            if (!frame.observed(t, c)) {
                complete = false;
                break;
            }
            total += frame.value(t, c);
        }
        const std::size_t idx = static_cast<std::size_t>(t) * K + C;
        out.values[idx] = complete ? total : 0.0;
        out.mask[idx] = complete ? 1 : 0;
    }
    return out;
}

TimeSeriesFrame slice_rows(const TimeSeriesFrame& frame, int start, int len) {
    require(start >= 0 && len > 0 && start + len <= frame.rows(), ErrorKind::Contract,
            "slice_rows: range outside frame");
    TimeSeriesFrame out;
    out.domain = frame.domain;
    out.start_epoch_sec = frame.start_epoch_sec + 3600LL * start;
    out.channels = frame.channels;
    const int C = frame.cols();
    out.values.assign(frame.values.begin() + static_cast<std::size_t>(start) * C,
                      frame.values.begin() + static_cast<std::size_t>(start + len) * C);
    out.mask.assign(frame.mask.begin() + static_cast<std::size_t>(start) * C,
                    frame.mask.begin() + static_cast<std::size_t>(start + len) * C);
    if (!frame.excluded.empty()) {
        out.excluded.assign(frame.excluded.begin() + static_cast<std::size_t>(start) * C,
                            frame.excluded.begin() + static_cast<std::size_t>(start + len) * C);
    }
    return out;
}

}  // namespace tftl
