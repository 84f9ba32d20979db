#include "tftl/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace tftl {

double percentile(std::vector<double> sample, double pct) {
    require(!sample.empty(), ErrorKind::Contract, "percentile: empty sample");
    std::sort(sample.begin(), sample.end());
    const double rank = pct / 100.0 * static_cast<double>(sample.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, sample.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sample[lo] + (sample[hi] - sample[lo]) * frac;
}

IntervalForecast mc_dropout_predict(const TFTLiteParams& params, const WindowBatch& window,
                                    const MCDropoutConfig& config) {
    config.validate();
    const int horizon = params.config.horizon;
    const int median = params.config.median_index();
    const int n = config.n_passes;

    // passes x horizon matrix of per-pass median-quantile predictions.
    std::vector<std::vector<double>> passes;
    passes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        RngStream rng(config.base_seed + static_cast<std::uint64_t>(i));
        QuantileForecast f = tft_forward(params, window, ForwardMode::EvalMC, rng);
        passes.push_back(f.series(median));
    }

    IntervalForecast out;
    out.model_id = "mc_dropout";
    out.n_passes = n;
    out.base_seed = config.base_seed;
    out.steps.resize(static_cast<std::size_t>(horizon));
    out.target_epochs.resize(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
        std::vector<double> sample(static_cast<std::size_t>(n));
        double mean = 0.0;
        for (int i = 0; i < n; ++i) {
            sample[static_cast<std::size_t>(i)] = passes[static_cast<std::size_t>(i)]
                                                       [static_cast<std::size_t>(h)];
            mean += sample[static_cast<std::size_t>(i)];
        }
        mean /= n;
        double var = 0.0;
        for (double v : sample) {
            var += (v - mean) * (v - mean);
        }
        var /= (n - 1);
        IntervalForecast::Step& step = out.steps[static_cast<std::size_t>(h)];
        step.mean = mean;
        step.std = std::sqrt(var);
        step.lower = percentile(sample, config.lower_percentile);
        step.upper = percentile(sample, config.upper_percentile);
        out.target_epochs[static_cast<std::size_t>(h)] = window.target_epoch_at(h);
    }
    return out;
}

double picp(const std::vector<IntervalForecast>& intervals,
            const std::vector<std::vector<double>>& truths,
            const std::vector<std::vector<std::uint8_t>>& masks) {
    require(intervals.size() == truths.size(), ErrorKind::Dimension,
            "picp: interval/truth count mismatch");
    require(masks.empty() || masks.size() == intervals.size(), ErrorKind::Dimension,
            "picp: mask count mismatch");
    std::int64_t covered = 0;
    std::int64_t valid = 0;
    for (std::size_t w = 0; w < intervals.size(); ++w) {
        const auto& steps = intervals[w].steps;
        require(truths[w].size() == steps.size(), ErrorKind::Dimension,
                "picp: truth length mismatch");
        for (std::size_t h = 0; h < steps.size(); ++h) {
            if (!masks.empty() && !masks[w][h]) {
                continue;
            }
            ++valid;
            const double y = truths[w][h];
            if (y >= steps[h].lower && y <= steps[h].upper) {
                ++covered;
            }
        }
    }
    require(valid > 0, ErrorKind::Contract, "picp: no valid points");
    return static_cast<double>(covered) / static_cast<double>(valid);
}

double miw(const std::vector<IntervalForecast>& intervals) {
    double total = 0.0;
    std::int64_t n = 0;
    for (const IntervalForecast& f : intervals) {
        for (const auto& step : f.steps) {
            total += step.upper - step.lower;
            ++n;
        }
    }
    require(n > 0, ErrorKind::Contract, "miw: no intervals");
    return total / static_cast<double>(n);
}

}  // namespace tftl
