#pragma once

// Central finite-difference gradient oracle. Stays independent of the
// autodiff path: it only re-runs the caller's forward closure with perturbed
// parameter values and never touches tapes or gradients.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tftl/tensor.hpp"

namespace tftl::test {

struct GradCheckReport {
    double max_abs_diff = 0.0;
    double worst_rel_err = 0.0;
    int checked = 0;
    int failed = 0;
    std::string worst_location;
};

// Compares analytic gradients (already accumulated on `params`) against
// central differences of `loss_fn`. A component passes when
//   |fd - ad| <= max(abs_floor, rel_tol * max(|fd|, |ad|)).
inline GradCheckReport check_gradients(const std::function<double()>& loss_fn,
                                       const std::vector<Tensor>& params, double h = 1e-5,
                                       double rel_tol = 1e-4, double abs_floor = 1e-7) {
    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        const std::vector<double> analytic =
            p.has_grad() ? p.grad() : std::vector<double>(p.values().size(), 0.0);
        for (std::size_t j = 0; j < p.values().size(); ++j) {
            const double original = p.values()[j];
            p.values_mut()[j] = original + h;
            const double up = loss_fn();
            p.values_mut()[j] = original - h;
            const double down = loss_fn();
            p.values_mut()[j] = original;
            const double fd = (up - down) / (2.0 * h);
            const double ad = analytic[j];
            const double diff = std::abs(fd - ad);
            const double scale = std::max(std::abs(fd), std::abs(ad));
            ++report.checked;
            report.max_abs_diff = std::max(report.max_abs_diff, diff);
            const double rel = scale > 0.0 ? diff / scale : 0.0;
            if (diff > std::max(abs_floor, rel_tol * scale)) {
                ++report.failed;
                if (rel >= report.worst_rel_err) {
                    report.worst_location =
                        "param " + std::to_string(pi) + " element " + std::to_string(j);
                }
            }
            if (rel > report.worst_rel_err && diff > abs_floor) {
                report.worst_rel_err = rel;
            }
        }
    }
    return report;
}

}  // namespace tftl::test
