#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tftl/error.hpp"
#include "tftl/rng.hpp"

namespace tftl {

// Dense row-major tensor of 64-bit floats, rank 0..3. Tensors are shared
// handles: ops produce new tensors and never mutate their inputs. The only
// post-construction mutation is gradient accumulation (driven by the owning
// tape during backward) and in-place parameter updates by the optimizer,
// which happen strictly between tapes.
using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
};
}  // namespace detail

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor constant(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor random_uniform(Shape shape, double lo, double hi, RngStream& rng,
                                 bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->values.size()); }

    const std::vector<double>& values() const { return node_->values; }
    // Mutable access is for construction and optimizer steps only; never call
    // on a tensor that is an input of a live tape. Tensor is a shared handle,
    // so mutators are const: they touch the pointee, not the handle.
    std::vector<double>& values_mut() const { return node_->values; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) const { node_->requires_grad = flag; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& grad_mut() const { return node_->grad; }
    void zero_grad() const;
    void accumulate_grad(const double* g, std::size_t n) const;

    double item() const;
    double at(int i) const;
    double at(int i, int j) const;
    double at(int i, int j, int k) const;

    // Identity of the underlying storage; used to assert aliasing contracts.
    const void* node_id() const { return node_.get(); }

  private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

// Define-by-run tape: ops append their backward rule as they execute, so the
// recorded order is topological by construction. backward() seeds d(loss)=1
// and replays the rules in strict reverse order exactly once; accumulation
// into parameter gradients is additive.
class Tape {
  public:
    void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }
    void backward(const Tensor& loss);
    std::size_t size() const { return rules_.size(); }
    void clear() { rules_.clear(); }

  private:
    std::vector<std::function<void()>> rules_;
};

Tape* active_tape();

class TapeScope {
  public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* previous_;
};

// ---------------------------------------------------------------------------
// Primitives. Shapes are validated per the rules documented on each op;
// violations throw ErrorKind::Dimension naming the primitive. Any op whose
// output contains a non-finite value throws ErrorKind::Numeric.
// ---------------------------------------------------------------------------

// matmul: [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// matmul3: [B,m,k] x [k,n] -> [B,m,n] (shared right operand)
Tensor matmul3(const Tensor& a, const Tensor& w);
// bmm: [B,m,k] x [B,k,p] -> [B,m,p]
Tensor bmm(const Tensor& a, const Tensor& b);
// bmm_nt: [B,m,k] x [B,p,k] -> [B,m,p]  (right operand transposed)
Tensor bmm_nt(const Tensor& a, const Tensor& b);

// Elementwise; both operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
// add_rowvec: v (length n) broadcast over the last axis of a [..., n].
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor scale(const Tensor& a, double c);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor elu(const Tensor& x);  // alpha = 1

// softmax over the last axis. The masked variant takes a 0/1 validity mask
// covering the trailing dims (tiled over leading rows); every masked row must
// keep at least one valid entry, and masked entries get probability 0 and no
// gradient flow.
Tensor softmax(const Tensor& x);
Tensor softmax_masked(const Tensor& x, const std::vector<std::uint8_t>& valid);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor transpose(const Tensor& x);  // 2D

// Inverted dropout: scales kept activations by 1/(1-rate) so the expected
// output equals the input; the same path serves train-time dropout and
// MC-dropout inference. Inactive or rate==0 returns x unchanged.
Tensor dropout(const Tensor& x, double rate, RngStream& rng, bool active);

// layer_norm over the last axis with learnable gain/bias of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar

// Per-variable linear embedding, fused: x [B,V], w [V,d], b [V,d]
//   out[r, v*d + j] = x[r,v] * w[v,j] + b[v,j]        -> [B, V*d]
Tensor channel_embed(const Tensor& x, const Tensor& w, const Tensor& b);

// Variable-selection mixdown, fused: flat [B,V*d], weights [B,V]
//   out[r,j] = sum_v weights[r,v] * flat[r, v*d + j]  -> [B, d]
Tensor varsel_combine(const Tensor& flat, const Tensor& weights, int embed_dim);

// Stack T step tensors of shape [B,d] into [B,T,d].
Tensor stack_steps(const std::vector<Tensor>& steps);

// Masked pinball (quantile) loss, fused over the whole batch:
//   pred [B,H,Q] or [H,Q]; target/valid flattened length B*H.
//   loss = sum_{b,h,q} valid[b,h] * rho_q(target - pred) / (Q * sum(valid));
// an all-masked batch yields 0 with no gradient.
Tensor pinball_loss(const Tensor& pred, const std::vector<double>& target,
                    const std::vector<std::uint8_t>& valid, const std::vector<double>& quantiles);

// Masked mean absolute error: pred [B,H] or [H]; target/valid length B*H.
Tensor mae_loss(const Tensor& pred, const std::vector<double>& target,
                const std::vector<std::uint8_t>& valid);

}  // namespace tftl
