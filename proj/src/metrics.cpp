#include "tftl/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace tftl {

namespace {

void check_lengths(const std::vector<double>& pred, const std::vector<double>& truth,
                   const std::vector<std::uint8_t>& mask) {
    require(pred.size() == truth.size(), ErrorKind::Dimension,
            "metrics: pred/truth length mismatch");
    require(mask.empty() || mask.size() == truth.size(), ErrorKind::Dimension,
            "metrics: mask length mismatch");
}

std::int64_t count_valid(const std::vector<std::uint8_t>& mask, std::size_t n) {
    if (mask.empty()) {
        return static_cast<std::int64_t>(n);
    }
    std::int64_t c = 0;
    for (std::uint8_t m : mask) {
        c += m ? 1 : 0;
    }
    return c;
}

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

double mae(const std::vector<double>& pred, const std::vector<double>& truth,
           const std::vector<std::uint8_t>& mask) {
    check_lengths(pred, truth, mask);
    const std::int64_t n = count_valid(mask, truth.size());
    require(n > 0, ErrorKind::Contract, "mae: no valid points");
    double total = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.empty() || mask[i]) {
            total += std::abs(truth[i] - pred[i]);
        }
    }
    return total / static_cast<double>(n);
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth,
            const std::vector<std::uint8_t>& mask) {
    check_lengths(pred, truth, mask);
    const std::int64_t n = count_valid(mask, truth.size());
    require(n > 0, ErrorKind::Contract, "rmse: no valid points");
    double total = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.empty() || mask[i]) {
            const double e = truth[i] - pred[i];
            total += e * e;
        }
    }
    return std::sqrt(total / static_cast<double>(n));
}

double r_squared(const std::vector<double>& pred, const std::vector<double>& truth,
                 const std::vector<std::uint8_t>& mask, bool* defined) {
    check_lengths(pred, truth, mask);
    const std::int64_t n = count_valid(mask, truth.size());
    require(n > 0, ErrorKind::Contract, "r_squared: no valid points");
    double mean_truth = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.empty() || mask[i]) {
            mean_truth += truth[i];
        }
    }
    mean_truth /= static_cast<double>(n);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.empty() || mask[i]) {
            const double e = truth[i] - pred[i];
            ss_res += e * e;
            const double d = truth[i] - mean_truth;
            ss_tot += d * d;
        }
    }
    if (ss_tot == 0.0) {
        // Zero-variance truth: R^2 undefined; report a sentinel, do not abort.
        if (defined != nullptr) {
            *defined = false;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (defined != nullptr) {
        *defined = true;
    }
    return 1.0 - ss_res / ss_tot;
}

MetricsReport compute_point_metrics(const std::vector<double>& pred,
                                    const std::vector<double>& truth,
                                    const std::vector<std::uint8_t>& mask,
                                    const std::string& model_id, const std::string& domain) {
    MetricsReport report;
    report.mae = mae(pred, truth, mask);
    report.rmse = rmse(pred, truth, mask);
    report.r_squared = r_squared(pred, truth, mask, &report.r_squared_defined);
    report.n_points = count_valid(mask, truth.size());
    report.model_id = model_id;
    report.domain = domain;
    return report;
}

double compute_tri(double mae_source_val, double mae_target_test) {
    require(mae_source_val >= 0.0 && mae_target_test >= 0.0, ErrorKind::Contract,
            "compute_tri: MAE inputs must be non-negative");
    return mae_source_val / (mae_target_test + kTriEpsilon);
}

std::string build_table(const std::vector<TableRow>& rows, double mae_source_val) {
    std::ostringstream out;
    out << "model,mae,rmse,r_squared,tri\n";
    for (const TableRow& row : rows) {
        out << row.model << ',' << format_metric(row.mae) << ',' << format_metric(row.rmse)
            << ',';
        if (row.r_squared_defined) {
            out << format_metric(row.r_squared);
        } else {
            out << "nan";
        }
        out << ',';
        if (row.transfer) {
            out << format_metric(compute_tri(mae_source_val, row.mae));
        } else {
            out << "--";
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace tftl
