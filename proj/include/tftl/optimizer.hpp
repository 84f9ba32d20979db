#pragma once

#include <vector>

#include "tftl/tensor.hpp"

namespace tftl {

// Adam with bias correction. The engine always builds the optimizer over the
// trainable parameter set only, so frozen parameters are never touched and
// their moments never advance.
struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
  public:
    AdamState() = default;
    explicit AdamState(const std::vector<Tensor>& params, AdamConfig config = {});

    // Applies one update to exactly the parameter list the state was built
    // over; parameters without an accumulated gradient are treated as g = 0.
    void step(const std::vector<Tensor>& params, double lr);

    int steps_taken() const { return step_count_; }

  private:
    struct Slot {
        const void* node;
        std::vector<double> m;
        std::vector<double> v;
    };
    AdamConfig config_;
    std::vector<Slot> slots_;
    int step_count_ = 0;
};

// Global L2-norm gradient clipping over the given parameter set. Scales every
// gradient by max_norm/norm when norm exceeds max_norm; returns the applied
// scale (1.0 when no clipping happened, including the all-zero case).
double grad_clip_global(const std::vector<Tensor>& params, double max_norm);

}  // namespace tftl
