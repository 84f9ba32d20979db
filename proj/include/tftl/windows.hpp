#pragma once

#include <cstdint>
#include <vector>

#include "tftl/timeseries.hpp"

namespace tftl {

// One (lookback, horizon) training/eval sample. Row-major layouts:
//   encoder_unknown  L x C   (target components + unknown covariates)
//   encoder_known    L x K   (calendar features first, then known channels)
//   decoder_known    H x K
//   target           H       (aggregate channel, already normalized)
//   loss_mask        H       (0 where the target sits in an unfilled gap)
struct WindowBatch {
    int lookback = 0;
    int horizon = 0;
    int n_unknown = 0;
    int n_known = 0;
    int start_row = 0;  // frame row of the first encoder step
    std::int64_t start_epoch_sec = 0;
    std::vector<double> encoder_unknown;
    std::vector<double> encoder_known;
    std::vector<double> decoder_known;
    std::vector<double> static_covariates;
    std::vector<double> target;
    std::vector<std::uint8_t> loss_mask;

    std::int64_t target_epoch_at(int h) const {
        return start_epoch_sec + 3600LL * (lookback + h);
    }
};

// Cyclical calendar encodings derived from the timestamp: hour-of-day,
// day-of-week and month, each as sin/cos.
inline constexpr int kCalendarFeatures = 6;
void calendar_features(std::int64_t epoch_sec, double* out6);

// One window per start row (stride apart); gap steps inside the encoder stay
// zero-filled, target steps in unfilled gaps get loss_mask = 0.
std::vector<WindowBatch> make_windows(const TimeSeriesFrame& frame, int lookback, int horizon,
                                      int stride, const std::vector<double>& static_covariates);

}  // namespace tftl
