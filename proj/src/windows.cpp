#include "tftl/windows.hpp"

#include <cmath>

#include "tftl/timeutil.hpp"

namespace tftl {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

void calendar_features(std::int64_t epoch_sec, double* out6) {
    const std::int64_t days = epoch_sec / 86400;
    const int hour = static_cast<int>((epoch_sec / 3600) % 24);
    const int dow = static_cast<int>((days + 4) % 7);  // 1970-01-01 was a Thursday
    int year = 0;
    unsigned month = 0;
    unsigned day = 0;
    civil_from_days(days, &year, &month, &day);
    out6[0] = std::sin(kTwoPi * hour / 24.0);
    out6[1] = std::cos(kTwoPi * hour / 24.0);
    out6[2] = std::sin(kTwoPi * dow / 7.0);
    out6[3] = std::cos(kTwoPi * dow / 7.0);
    out6[4] = std::sin(kTwoPi * (month - 1) / 12.0);
    out6[5] = std::cos(kTwoPi * (month - 1) / 12.0);
}

std::vector<WindowBatch> make_windows(const TimeSeriesFrame& frame, int lookback, int horizon,
                                      int stride, const std::vector<double>& static_covariates) {
    require(lookback > 0 && horizon > 0 && stride > 0, ErrorKind::Contract,
            "make_windows: lookback, horizon and stride must be positive");
    const int target_col = frame.channel_index(kAggregateTargetChannel);
    require(target_col >= 0, ErrorKind::Contract,
            "make_windows: frame lacks the aggregate target channel; run derive_target first");

    std::vector<int> unknown_cols;
    std::vector<int> known_cols;
    for (int c = 0; c < frame.cols(); ++c) {
        if (frame.channels[static_cast<std::size_t>(c)].kind == ChannelKind::KnownCovariate) {
            known_cols.push_back(c);
        } else {
            unknown_cols.push_back(c);
        }
    }
    const int n_unknown = static_cast<int>(unknown_cols.size());
    const int n_known = kCalendarFeatures + static_cast<int>(known_cols.size());

    std::vector<WindowBatch> windows;
    const int T = frame.rows();
    const int span = lookback + horizon;
    if (T < span) {
        return windows;
    }
    windows.reserve(static_cast<std::size_t>((T - span) / stride + 1));
    for (int start = 0; start + span <= T; start += stride) {
        WindowBatch w;
        w.lookback = lookback;
        w.horizon = horizon;
        w.n_unknown = n_unknown;
        w.n_known = n_known;
        w.start_row = start;
        w.start_epoch_sec = frame.epoch_at(start);
        w.static_covariates = static_covariates;
        w.encoder_unknown.resize(static_cast<std::size_t>(lookback) * n_unknown);
        w.encoder_known.resize(static_cast<std::size_t>(lookback) * n_known);
        w.decoder_known.resize(static_cast<std::size_t>(horizon) * n_known);
        w.target.resize(static_cast<std::size_t>(horizon));
        w.loss_mask.resize(static_cast<std::size_t>(horizon));
        double cal[kCalendarFeatures];
        for (int t = 0; t < lookback; ++t) {
            const int row = start + t;
            for (int i = 0; i < n_unknown; ++i) {
                w.encoder_unknown[static_cast<std::size_t>(t) * n_unknown + i] =
                    frame.value(row, unknown_cols[static_cast<std::size_t>(i)]);
            }
            calendar_features(frame.epoch_at(row), cal);
            double* known = w.encoder_known.data() + static_cast<std::size_t>(t) * n_known;
            for (int i = 0; i < kCalendarFeatures; ++i) {
                known[i] = cal[i];
            }
            for (std::size_t i = 0; i < known_cols.size(); ++i) {
                known[kCalendarFeatures + i] = frame.value(row, known_cols[i]);
            }
        }
        for (int h = 0; h < horizon; ++h) {
            const int row = start + lookback + h;
            calendar_features(frame.epoch_at(row), cal);
            double* known = w.decoder_known.data() + static_cast<std::size_t>(h) * n_known;
            for (int i = 0; i < kCalendarFeatures; ++i) {
                known[i] = cal[i];
            }
            for (std::size_t i = 0; i < known_cols.size(); ++i) {
                known[kCalendarFeatures + i] = frame.value(row, known_cols[i]);
            }
            w.target[static_cast<std::size_t>(h)] = frame.value(row, target_col);
            w.loss_mask[static_cast<std::size_t>(h)] = frame.observed(row, target_col) ? 1 : 0;
        }
        windows.push_back(std::move(w));
    }
    return windows;
}

}  // namespace tftl
