#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tftl/error.hpp"

namespace tftl {

inline constexpr double kTriEpsilon = 1e-8;

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    double r_squared = 0.0;
    bool r_squared_defined = true;  // false on zero-variance truth
    std::optional<double> tri;
    std::optional<double> picp;
    std::optional<double> miw;
    std::int64_t n_points = 0;
    std::string domain;
    std::string model_id;
};

// Standard point metrics over mask-selected entries. All-masked input is a
// contract error; zero-variance truth reports R^2 as an undefined sentinel.
double mae(const std::vector<double>& pred, const std::vector<double>& truth,
           const std::vector<std::uint8_t>& mask = {});
double rmse(const std::vector<double>& pred, const std::vector<double>& truth,
            const std::vector<std::uint8_t>& mask = {});
double r_squared(const std::vector<double>& pred, const std::vector<double>& truth,
                 const std::vector<std::uint8_t>& mask = {}, bool* defined = nullptr);

MetricsReport compute_point_metrics(const std::vector<double>& pred,
                                    const std::vector<double>& truth,
                                    const std::vector<std::uint8_t>& mask,
                                    const std::string& model_id, const std::string& domain);

// Transfer Robustness Index: source-validation MAE over target-test MAE, with
// a fixed epsilon floor. Both MAEs must be computed on their own domain's
// normalized scale.
double compute_tri(double mae_source_val, double mae_target_test);

// One aggregate table row per model; TRI stays empty ("--") for baselines
// that do not transfer a source model.
struct TableRow {
    std::string model;
    double mae = 0.0;
    double rmse = 0.0;
    double r_squared = 0.0;
    bool r_squared_defined = true;
    bool transfer = false;  // TRI applies only to transfer rows
};

std::string build_table(const std::vector<TableRow>& rows, double mae_source_val);

}  // namespace tftl
