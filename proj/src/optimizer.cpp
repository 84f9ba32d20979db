#include "tftl/optimizer.hpp"

#include <cmath>

namespace tftl {

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig config) : config_(config) {
    slots_.reserve(params.size());
    for (const Tensor& p : params) {
        Slot slot;
        slot.node = p.node_id();
        slot.m.assign(p.values().size(), 0.0);
        slot.v.assign(p.values().size(), 0.0);
        slots_.push_back(std::move(slot));
    }
}

void AdamState::step(const std::vector<Tensor>& params, double lr) {
    require(lr > 0.0, ErrorKind::Contract, "adam_step: lr must be positive");
    require(params.size() == slots_.size(), ErrorKind::Contract,
            "adam_step: parameter list does not match optimizer state");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, step_count_);
    const double bc2 = 1.0 - std::pow(config_.beta2, step_count_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        Slot& slot = slots_[i];
        require(p.node_id() == slot.node, ErrorKind::Contract,
                "adam_step: parameter list does not match optimizer state");
        const double* g = p.has_grad() ? p.grad().data() : nullptr;
        double* values = p.values_mut().data();
        for (std::size_t j = 0; j < slot.m.size(); ++j) {
            const double gj = g != nullptr ? g[j] : 0.0;
            slot.m[j] = config_.beta1 * slot.m[j] + (1.0 - config_.beta1) * gj;
            slot.v[j] = config_.beta2 * slot.v[j] + (1.0 - config_.beta2) * gj * gj;
            const double m_hat = slot.m[j] / bc1;
            const double v_hat = slot.v[j] / bc2;
            values[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

double grad_clip_global(const std::vector<Tensor>& params, double max_norm) {
    require(max_norm > 0.0, ErrorKind::Contract, "grad_clip_global: max_norm must be positive");
    double sq = 0.0;
    for (const Tensor& p : params) {
        if (!p.has_grad()) {
            continue;
        }
        for (double g : p.grad()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) {
        return 1.0;
    }
    const double scale = max_norm / norm;
    for (Tensor p : params) {
        if (!p.has_grad()) {
            continue;
        }
        for (double& g : p.grad_mut()) {
            g *= scale;
        }
    }
    return scale;
}

}  // namespace tftl
