#include "tftl/synthetic.hpp"

#include <cmath>

#include "tftl/rng.hpp"
#include "tftl/windows.hpp"

namespace tftl {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::int64_t kSourceStartEpoch = 1651363200;  // 2022-05-01T00:00:00Z
constexpr std::int64_t kTargetStartEpoch = 1696118400;  // 2023-10-01T00:00:00Z

// Gaussian bump over the circular 24-hour axis, peak 1 at hour mu.
double bump(double h, double mu, double sigma) {
    double d = std::fmod(h - mu + 36.0, 24.0) - 12.0;
    return std::exp(-0.5 * (d / sigma) * (d / sigma));
}

struct Clock {
    std::int64_t epoch;
    double hour;       // 0..23
    double day_of_year;
    bool weekend;
};

Clock clock_at(std::int64_t start_epoch, int t) {
    Clock c;
    c.epoch = start_epoch + 3600LL * t;
    c.hour = static_cast<double>((c.epoch / 3600) % 24);
    const std::int64_t days = c.epoch / 86400;
    const int dow = static_cast<int>((days + 4) % 7);
    c.weekend = dow == 0 || dow == 6;
    c.day_of_year = static_cast<double>(days % 365);
    return c;
}

void push_channel(TimeSeriesFrame* frame, const Channel& channel,
                  const std::vector<double>& series) {
    frame->channels.push_back(channel);
    const int T = static_cast<int>(series.size());
    const int C = frame->cols();
    std::vector<double> values(static_cast<std::size_t>(T) * C, 0.0);
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < C - 1; ++c) {
            values[static_cast<std::size_t>(t) * C + c] =
                frame->values[static_cast<std::size_t>(t) * (C - 1) + c];
        }
        values[static_cast<std::size_t>(t) * C + (C - 1)] = series[static_cast<std::size_t>(t)];
    }
    frame->values = std::move(values);
    frame->mask.assign(frame->values.size(), 1);
}

std::vector<double> source_temperature(std::uint64_t seed, int hours) {
    RngStream rng(seed, "synth.source.temp_out");
    std::vector<double> s(static_cast<std::size_t>(hours));
    for (int t = 0; t < hours; ++t) {
        const Clock c = clock_at(kSourceStartEpoch, t);
        s[static_cast<std::size_t>(t)] = 9.0 + 7.0 * std::sin(kTwoPi * (c.day_of_year - 110.0) / 365.0) +
                                         4.0 * std::sin(kTwoPi * (c.hour - 14.0) / 24.0) +
                                         rng.normal(0.0, 1.2);
    }
    return s;
}

std::vector<double> target_temperature(std::uint64_t seed, int hours) {
    RngStream rng(seed, "synth.target.temp_out");
    std::vector<double> s(static_cast<std::size_t>(hours));
    for (int t = 0; t < hours; ++t) {
        const Clock c = clock_at(kTargetStartEpoch, t);
        s[static_cast<std::size_t>(t)] = 5.0 + 9.0 * std::sin(kTwoPi * (c.day_of_year - 120.0) / 365.0) +
                                         5.0 * std::sin(kTwoPi * (c.hour - 15.0) / 24.0) +
                                         rng.normal(0.0, 1.0);
    }
    return s;
}

TimeSeriesFrame build_source(std::uint64_t seed, int hours) {
    TimeSeriesFrame frame;
    frame.domain = "campus_a";
    frame.start_epoch_sec = kSourceStartEpoch;

    const std::vector<double> temp = source_temperature(seed, hours);

    auto series = [&](const char* name, auto fn) {
        RngStream rng(seed, std::string("synth.source.") + name);
        std::vector<double> s(static_cast<std::size_t>(hours));
        for (int t = 0; t < hours; ++t) {
            const Clock c = clock_at(kSourceStartEpoch, t);
            s[static_cast<std::size_t>(t)] =
                std::max(0.0, fn(c, temp[static_cast<std::size_t>(t)], rng));
        }
        return s;
    };

    auto occupancy = [](const Clock& c) {
        const double base = bump(c.hour, 10.0, 2.5) + 0.8 * bump(c.hour, 15.0, 3.0);
        return c.weekend ? 0.25 * base : base;
    };

    push_channel(&frame, {"elec_lab", ChannelKind::TargetComponent, false},
                 series("elec_lab", [&](const Clock& c, double, RngStream& rng) {
                     return 20.0 + 55.0 * occupancy(c) + rng.normal(0.0, 1.5);
                 }));
    push_channel(&frame, {"elec_hvac", ChannelKind::TargetComponent, false},
                 series("elec_hvac", [&](const Clock& c, double temp_c, RngStream& rng) {
                     const double fans = 30.0 * bump(c.hour, 13.0, 4.0) * (c.weekend ? 0.5 : 1.0);
                     return 25.0 + fans + 1.2 * std::max(0.0, temp_c - 18.0) + rng.normal(0.0, 1.5);
                 }));
    push_channel(&frame, {"elec_lighting", ChannelKind::TargetComponent, false},
                 series("elec_lighting", [&](const Clock& c, double, RngStream& rng) {
                     const double dark = 1.0 - bump(c.hour, 13.0, 4.5);
                     return 8.0 + 22.0 * dark * (c.weekend ? 0.6 : 1.0) + rng.normal(0.0, 0.8);
                 }));
    push_channel(&frame, {"heat_main", ChannelKind::UnknownCovariate, false},
                 series("heat_main", [&](const Clock& c, double temp_c, RngStream& rng) {
                     return 2.5 * std::max(0.0, 17.0 - temp_c) + 5.0 * occupancy(c) +
                            rng.normal(0.0, 1.0);
                 }));
    push_channel(&frame, {"heat_aux", ChannelKind::UnknownCovariate, false},
                 series("heat_aux", [&](const Clock&, double temp_c, RngStream& rng) {
                     return 1.2 * std::max(0.0, 15.0 - temp_c) + rng.normal(0.0, 0.7);
                 }));
    push_channel(&frame, {"dhw_main", ChannelKind::UnknownCovariate, false},
                 series("dhw_main", [&](const Clock& c, double, RngStream& rng) {
                     const double use = 5.0 * bump(c.hour, 8.0, 1.5) + 4.0 * bump(c.hour, 12.0, 1.5) +
                                        3.0 * bump(c.hour, 17.0, 2.0);
                     return use * (c.weekend ? 0.4 : 1.0) + rng.normal(0.0, 0.5);
                 }));
    push_channel(&frame, {"temp_out", ChannelKind::KnownCovariate, false}, temp);
    frame.validate();
    return frame;
}

TimeSeriesFrame build_target(std::uint64_t seed, int hours) {
    TimeSeriesFrame frame;
    frame.domain = "campus_b";
    frame.start_epoch_sec = kTargetStartEpoch;

    const std::vector<double> temp = target_temperature(seed, hours);
    // Slow load growth across the whole target span; it makes later
    // fine-tuning data genuinely more informative about the test period.
    auto trend = [hours](int t) { return 1.0 + 0.35 * static_cast<double>(t) / hours; };

    auto series = [&](const char* name, auto fn) {
        RngStream rng(seed, std::string("synth.target.") + name);
        std::vector<double> s(static_cast<std::size_t>(hours));
        for (int t = 0; t < hours; ++t) {
            const Clock c = clock_at(kTargetStartEpoch, t);
            s[static_cast<std::size_t>(t)] =
                std::max(0.0, fn(t, c, temp[static_cast<std::size_t>(t)], rng));
        }
        return s;
    };

    push_channel(&frame, {"elec_hvac", ChannelKind::TargetComponent, false},
                 series("elec_hvac", [&](int t, const Clock& c, double, RngStream& rng) {
                     const double evening = 7.0 * bump(c.hour, 19.0, 3.0);
                     const double wk = c.weekend ? 1.0 : 0.75;
                     return (3.0 + evening) * wk * trend(t) + rng.normal(0.0, 0.35);
                 }));
    push_channel(&frame, {"elec_lighting", ChannelKind::TargetComponent, false},
                 series("elec_lighting", [&](int t, const Clock& c, double, RngStream& rng) {
                     const double dark = 1.0 - bump(c.hour, 14.0, 4.0);
                     return (2.0 + 5.0 * dark) * trend(t) + rng.normal(0.0, 0.25);
                 }));
    {
        // Kitchen line: meal-time bumps plus rare tall spikes. The spikes set
        // the channel's (and the aggregate's) max, so the normalized bulk of
        // the target series sits low in [0,1].
        RngStream rng(seed, "synth.target.elec_kitchen");
        std::vector<double> s(static_cast<std::size_t>(hours));
        int spike_left = 0;
        double spike_amp = 0.0;
        for (int t = 0; t < hours; ++t) {
            const Clock c = clock_at(kTargetStartEpoch, t);
            double v = 1.0 + 6.0 * bump(c.hour, 12.0, 1.2) + 5.0 * bump(c.hour, 19.0, 1.5);
            if (spike_left == 0 && rng.uniform() < 0.006) {
                spike_left = 1 + static_cast<int>(rng.uniform_index(3));
                spike_amp = rng.uniform(25.0, 60.0);
            }
            if (spike_left > 0) {
                v += spike_amp;
                --spike_left;
            }
            s[static_cast<std::size_t>(t)] =
                std::max(0.0, v * trend(t) + rng.normal(0.0, 0.3));
        }
        push_channel(&frame, {"elec_kitchen", ChannelKind::TargetComponent, false}, s);
    }
    push_channel(&frame, {"dhw_main", ChannelKind::UnknownCovariate, false},
                 series("dhw_main", [&](int t, const Clock& c, double, RngStream& rng) {
                     const double use = 1.5 * bump(c.hour, 7.0, 1.0) + 1.2 * bump(c.hour, 20.0, 1.5);
                     return use * trend(t) + rng.normal(0.0, 0.2);
                 }));
    push_channel(&frame, {"dhw_solar", ChannelKind::UnknownCovariate, false},
                 series("dhw_solar", [&](int, const Clock& c, double, RngStream& rng) {
                     return 2.0 * bump(c.hour, 13.0, 3.0) + rng.normal(0.0, 0.3);
                 }));
    push_channel(&frame, {"temp_out", ChannelKind::KnownCovariate, false}, temp);
    frame.validate();
    return frame;
}

}  // namespace

SynthPair synth_two_buildings(std::uint64_t seed, int source_hours, int target_ft_hours,
                              int target_test_hours) {
    require(source_hours > 0 && target_ft_hours > 0 && target_test_hours > 0,
            ErrorKind::Contract, "synth_two_buildings: all spans must be positive");
    SynthPair pair;
    pair.source = build_source(seed, source_hours);
    pair.target = build_target(seed, target_ft_hours + target_test_hours);
    pair.target_ft_hours = target_ft_hours;
    pair.target_test_hours = target_test_hours;
    return pair;
}

}  // namespace tftl
