#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tftl/model.hpp"

namespace tftl {

struct MCDropoutConfig {
    int n_passes = 50;
    double lower_percentile = 2.5;
    double upper_percentile = 97.5;
    std::uint64_t base_seed = 0;

    void validate() const {
        require(n_passes >= 2, ErrorKind::Contract, "mc_dropout: n_passes must be at least 2");
        require(lower_percentile > 0.0 && lower_percentile < upper_percentile &&
                    upper_percentile < 100.0,
                ErrorKind::Contract, "mc_dropout: percentiles must satisfy 0 < lo < hi < 100");
    }
};

// Per-horizon-step interval summary of the MC ensemble. lower <= upper always;
// the mean is not forced inside the band (empirical percentiles can cross the
// mean under skew).
struct IntervalForecast {
    struct Step {
        double mean = 0.0;
        double lower = 0.0;
        double upper = 0.0;
        double std = 0.0;
    };
    std::vector<Step> steps;
    std::vector<std::int64_t> target_epochs;
    std::string model_id;
    int n_passes = 0;
    std::uint64_t base_seed = 0;
};

// Runs n_passes stochastic forwards (dropout active, pass i seeded
// base_seed+i) and aggregates the per-pass median-quantile series: mean,
// sample std, and empirical percentiles per step.
IntervalForecast mc_dropout_predict(const TFTLiteParams& params, const WindowBatch& window,
                                    const MCDropoutConfig& config);

// Fraction of true values inside [lower, upper], boundaries inclusive; steps
// with a false mask entry are excluded.
double picp(const std::vector<IntervalForecast>& intervals,
            const std::vector<std::vector<double>>& truths,
            const std::vector<std::vector<std::uint8_t>>& masks = {});

double miw(const std::vector<IntervalForecast>& intervals);

// Empirical percentile with linear interpolation between order statistics.
double percentile(std::vector<double> sample, double pct);

}  // namespace tftl
