#include "tftl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace tftl {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            raise(ErrorKind::Numeric, std::string(op) + ": non-finite value produced");
        }
    }
}

void require_rank(const char* op, const Tensor& t, int rank) {
    if (t.rank() != rank) {
        raise(ErrorKind::Dimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                        ", got shape " + shape_str(t.shape()));
    }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        raise(ErrorKind::Dimension, std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
    }
}

bool grad_needed(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) {
        return false;
    }
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) {
            return true;
        }
    }
    return false;
}

// C += A (m x k) * B (k x n), row-major, C pre-zeroed by caller.
void gemm(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ar = a + static_cast<std::size_t>(i) * k;
        double* cr = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                cr[j] += av * br[j];
            }
        }
    }
}

// ga += gy (m x n) * B^T (n x k) i.e. ga[i,p] += sum_j gy[i,j] * b[p,j]
void gemm_nt_accum(const double* gy, const double* b, double* ga, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* gr = gy + static_cast<std::size_t>(i) * n;
        double* gar = ga + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* br = b + static_cast<std::size_t>(p) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
                s += gr[j] * br[j];
            }
            gar[p] += s;
        }
    }
}

// gb += A^T (k x m) * gy (m x n) i.e. gb[p,j] += sum_i a[i,p] * gy[i,j]
void gemm_tn_accum(const double* a, const double* gy, double* gb, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ar = a + static_cast<std::size_t>(i) * k;
        const double* gr = gy + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = ar[p];
            if (av == 0.0) {
                continue;
            }
            double* gbr = gb + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) {
                gbr[j] += av * gr[j];
            }
        }
    }
}

// Splits a shape at `axis` into (outer, len, inner) extents for strided copies.
void split_extents(const Shape& shape, int axis, std::int64_t* outer, std::int64_t* inner) {
    *outer = 1;
    *inner = 1;
    for (int i = 0; i < axis; ++i) {
        *outer *= shape[static_cast<std::size_t>(i)];
    }
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
        *inner *= shape[i];
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape / Tensor / Tape
// ---------------------------------------------------------------------------

std::int64_t shape_size(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    for (int d : shape) {
        if (d <= 0) {
            raise(ErrorKind::Dimension, "tensor: non-positive dimension in " + shape_str(shape));
        }
    }
    if (shape_size(shape) != static_cast<std::int64_t>(values.size())) {
        raise(ErrorKind::Dimension, "tensor: shape " + shape_str(shape) + " does not match " +
                                        std::to_string(values.size()) + " values");
    }
    check_finite("tensor construction", values);
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(shape_size(shape)), 0.0);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::constant(Shape shape, double value, bool requires_grad) {
    if (!std::isfinite(value)) {
        raise(ErrorKind::Numeric, "tensor construction: non-finite value produced");
    }
    std::vector<double> v(static_cast<std::size_t>(shape_size(shape)), value);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value) { return constant({}, value); }

Tensor Tensor::random_uniform(Shape shape, double lo, double hi, RngStream& rng,
                              bool requires_grad) {
    std::vector<double> v(static_cast<std::size_t>(shape_size(shape)));
    for (double& x : v) {
        x = rng.uniform(lo, hi);
    }
    return from(std::move(shape), std::move(v), requires_grad);
}

void Tensor::zero_grad() const {
    if (node_->grad.empty()) {
        return;
    }
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(const double* g, std::size_t n) const {
    if (n != node_->values.size()) {
        raise(ErrorKind::Dimension, "accumulate_grad: gradient size mismatch");
    }
    if (node_->grad.empty()) {
        node_->grad.assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        node_->grad[i] += g[i];
    }
}

double Tensor::item() const {
    if (size() != 1) {
        raise(ErrorKind::Contract, "item: tensor has " + std::to_string(size()) + " elements");
    }
    return node_->values[0];
}

double Tensor::at(int i) const { return node_->values[static_cast<std::size_t>(i)]; }

double Tensor::at(int i, int j) const {
    return node_->values[static_cast<std::size_t>(i) * dim(1) + j];
}

double Tensor::at(int i, int j, int k) const {
    return node_->values[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        raise(ErrorKind::Contract, "backward: loss must be a scalar tensor");
    }
    const double one = 1.0;
    loss.accumulate_grad(&one, 1);
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) {
        (*it)();
    }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const int m = a.dim(0);
    const int k = a.dim(1);
    const int n = b.dim(1);
    if (b.dim(0) != k) {
        raise(ErrorKind::Dimension, "matmul: inner dimensions differ: " + shape_str(a.shape()) +
                                        " x " + shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    gemm(a.values().data(), b.values().data(), out.data(), m, k, n);
    check_finite("matmul", out);
    Tensor y = Tensor::from({m, n}, std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, b, y, m, k, n]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (a.requires_grad()) {
                std::vector<double> ga(static_cast<std::size_t>(m) * k, 0.0);
                gemm_nt_accum(gy, b.values().data(), ga.data(), m, k, n);
                a.accumulate_grad(ga.data(), ga.size());
            }
            if (b.requires_grad()) {
                std::vector<double> gb(static_cast<std::size_t>(k) * n, 0.0);
                gemm_tn_accum(a.values().data(), gy, gb.data(), m, k, n);
                b.accumulate_grad(gb.data(), gb.size());
            }
        });
    }
    return y;
}

Tensor matmul3(const Tensor& a, const Tensor& w) {
    require_rank("matmul3", a, 3);
    require_rank("matmul3", w, 2);
    const int batch = a.dim(0);
    const int m = a.dim(1);
    const int k = a.dim(2);
    const int n = w.dim(1);
    if (w.dim(0) != k) {
        raise(ErrorKind::Dimension, "matmul3: inner dimensions differ: " + shape_str(a.shape()) +
                                        " x " + shape_str(w.shape()));
    }
    const int rows = batch * m;
    std::vector<double> out(static_cast<std::size_t>(rows) * n, 0.0);
    gemm(a.values().data(), w.values().data(), out.data(), rows, k, n);
    check_finite("matmul3", out);
    Tensor y = Tensor::from({batch, m, n}, std::move(out));
    if (grad_needed({&a, &w})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, w, y, rows, k, n]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (a.requires_grad()) {
                std::vector<double> ga(static_cast<std::size_t>(rows) * k, 0.0);
                gemm_nt_accum(gy, w.values().data(), ga.data(), rows, k, n);
                a.accumulate_grad(ga.data(), ga.size());
            }
            if (w.requires_grad()) {
                std::vector<double> gw(static_cast<std::size_t>(k) * n, 0.0);
                gemm_tn_accum(a.values().data(), gy, gw.data(), rows, k, n);
                w.accumulate_grad(gw.data(), gw.size());
            }
        });
    }
    return y;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    require_rank("bmm", a, 3);
    require_rank("bmm", b, 3);
    const int batch = a.dim(0);
    const int m = a.dim(1);
    const int k = a.dim(2);
    const int p = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
        raise(ErrorKind::Dimension, "bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                                        shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(batch) * m * p, 0.0);
    for (int bb = 0; bb < batch; ++bb) {
        gemm(a.values().data() + static_cast<std::size_t>(bb) * m * k,
             b.values().data() + static_cast<std::size_t>(bb) * k * p,
             out.data() + static_cast<std::size_t>(bb) * m * p, m, k, p);
    }
    check_finite("bmm", out);
    Tensor y = Tensor::from({batch, m, p}, std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, b, y, batch, m, k, p]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (a.requires_grad()) {
                std::vector<double> ga(static_cast<std::size_t>(batch) * m * k, 0.0);
                for (int bb = 0; bb < batch; ++bb) {
                    gemm_nt_accum(gy + static_cast<std::size_t>(bb) * m * p,
                                  b.values().data() + static_cast<std::size_t>(bb) * k * p,
                                  ga.data() + static_cast<std::size_t>(bb) * m * k, m, k, p);
                }
                a.accumulate_grad(ga.data(), ga.size());
            }
            if (b.requires_grad()) {
                std::vector<double> gb(static_cast<std::size_t>(batch) * k * p, 0.0);
                for (int bb = 0; bb < batch; ++bb) {
                    gemm_tn_accum(a.values().data() + static_cast<std::size_t>(bb) * m * k,
                                  gy + static_cast<std::size_t>(bb) * m * p,
                                  gb.data() + static_cast<std::size_t>(bb) * k * p, m, k, p);
                }
                b.accumulate_grad(gb.data(), gb.size());
            }
        });
    }
    return y;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
    require_rank("bmm_nt", a, 3);
    require_rank("bmm_nt", b, 3);
    const int batch = a.dim(0);
    const int m = a.dim(1);
    const int k = a.dim(2);
    const int p = b.dim(1);
    if (b.dim(0) != batch || b.dim(2) != k) {
        raise(ErrorKind::Dimension, "bmm_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                                        shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(batch) * m * p, 0.0);
    for (int bb = 0; bb < batch; ++bb) {
        const double* ab = a.values().data() + static_cast<std::size_t>(bb) * m * k;
        const double* bbp = b.values().data() + static_cast<std::size_t>(bb) * p * k;
        double* ob = out.data() + static_cast<std::size_t>(bb) * m * p;
        for (int i = 0; i < m; ++i) {
            const double* ar = ab + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < p; ++j) {
                const double* br = bbp + static_cast<std::size_t>(j) * k;
                double s = 0.0;
                for (int q = 0; q < k; ++q) {
                    s += ar[q] * br[q];
                }
                ob[static_cast<std::size_t>(i) * p + j] = s;
            }
        }
    }
    check_finite("bmm_nt", out);
    Tensor y = Tensor::from({batch, m, p}, std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, b, y, batch, m, k, p]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (a.requires_grad()) {
                // ga[b,i,:] += sum_j gy[b,i,j] * b[b,j,:]
                std::vector<double> ga(static_cast<std::size_t>(batch) * m * k, 0.0);
                for (int bb = 0; bb < batch; ++bb) {
                    gemm(gy + static_cast<std::size_t>(bb) * m * p,
                         b.values().data() + static_cast<std::size_t>(bb) * p * k,
                         ga.data() + static_cast<std::size_t>(bb) * m * k, m, p, k);
                }
                a.accumulate_grad(ga.data(), ga.size());
            }
            if (b.requires_grad()) {
                // gb[b,j,:] += sum_i gy[b,i,j] * a[b,i,:]
                std::vector<double> gb(static_cast<std::size_t>(batch) * p * k, 0.0);
                for (int bb = 0; bb < batch; ++bb) {
                    const double* gyb = gy + static_cast<std::size_t>(bb) * m * p;
                    const double* ab = a.values().data() + static_cast<std::size_t>(bb) * m * k;
                    double* gbb = gb.data() + static_cast<std::size_t>(bb) * p * k;
                    for (int i = 0; i < m; ++i) {
                        const double* ar = ab + static_cast<std::size_t>(i) * k;
                        for (int j = 0; j < p; ++j) {
                            const double g = gyb[static_cast<std::size_t>(i) * p + j];
                            if (g == 0.0) {
                                continue;
                            }
                            double* gbr = gbb + static_cast<std::size_t>(j) * k;
                            for (int q = 0; q < k; ++q) {
                                gbr[q] += g * ar[q];
                            }
                        }
                    }
                }
                b.accumulate_grad(gb.data(), gb.size());
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd bwd) {
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fwd(x.values()[i]);
    }
    check_finite(name, out);
    Tensor y = Tensor::from(x.shape(), std::move(out));
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y, bwd]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size());
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] = y.grad()[i] * bwd(x.values()[i], y.values()[i]);
            }
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] + b.values()[i];
    }
    check_finite("add", out);
    Tensor y = Tensor::from(a.shape(), std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, b, y]() {
            if (!y.has_grad()) {
                return;
            }
            if (a.requires_grad()) {
                a.accumulate_grad(y.grad().data(), y.grad().size());
            }
            if (b.requires_grad()) {
                b.accumulate_grad(y.grad().data(), y.grad().size());
            }
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] - b.values()[i];
    }
    check_finite("sub", out);
    Tensor y = Tensor::from(a.shape(), std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, b, y]() {
            if (!y.has_grad()) {
                return;
            }
            if (a.requires_grad()) {
                a.accumulate_grad(y.grad().data(), y.grad().size());
            }
            if (b.requires_grad()) {
                std::vector<double> gb(y.grad().size());
                for (std::size_t i = 0; i < gb.size(); ++i) {
                    gb[i] = -y.grad()[i];
                }
                b.accumulate_grad(gb.data(), gb.size());
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] * b.values()[i];
    }
    check_finite("mul", out);
    Tensor y = Tensor::from(a.shape(), std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, b, y]() {
            if (!y.has_grad()) {
                return;
            }
            const std::size_t n = y.grad().size();
            if (a.requires_grad()) {
                std::vector<double> ga(n);
                for (std::size_t i = 0; i < n; ++i) {
                    ga[i] = y.grad()[i] * b.values()[i];
                }
                a.accumulate_grad(ga.data(), n);
            }
            if (b.requires_grad()) {
                std::vector<double> gb(n);
                for (std::size_t i = 0; i < n; ++i) {
                    gb[i] = y.grad()[i] * a.values()[i];
                }
                b.accumulate_grad(gb.data(), n);
            }
        });
    }
    return y;
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    require_same_shape("maximum", a, b);
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] >= b.values()[i] ? a.values()[i] : b.values()[i];
    }
    check_finite("maximum", out);
    Tensor y = Tensor::from(a.shape(), std::move(out));
    if (grad_needed({&a, &b})) {
        y.set_requires_grad(true);
        // Ties route the gradient to the first operand.
        g_active_tape->record([a, b, y]() {
            if (!y.has_grad()) {
                return;
            }
            const std::size_t n = y.grad().size();
            if (a.requires_grad()) {
                std::vector<double> ga(n, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (a.values()[i] >= b.values()[i]) {
                        ga[i] = y.grad()[i];
                    }
                }
                a.accumulate_grad(ga.data(), n);
            }
            if (b.requires_grad()) {
                std::vector<double> gb(n, 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (a.values()[i] < b.values()[i]) {
                        gb[i] = y.grad()[i];
                    }
                }
                b.accumulate_grad(gb.data(), n);
            }
        });
    }
    return y;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    require_rank("add_rowvec", v, 1);
    if (a.rank() < 1 || a.dim(a.rank() - 1) != v.dim(0)) {
        raise(ErrorKind::Dimension, "add_rowvec: last axis of " + shape_str(a.shape()) +
                                        " does not match vector " + shape_str(v.shape()));
    }
    const std::size_t n = static_cast<std::size_t>(v.dim(0));
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] + v.values()[i % n];
    }
    check_finite("add_rowvec", out);
    Tensor y = Tensor::from(a.shape(), std::move(out));
    if (grad_needed({&a, &v})) {
        y.set_requires_grad(true);
        g_active_tape->record([a, v, y, n]() {
            if (!y.has_grad()) {
                return;
            }
            if (a.requires_grad()) {
                a.accumulate_grad(y.grad().data(), y.grad().size());
            }
            if (v.requires_grad()) {
                std::vector<double> gv(n, 0.0);
                for (std::size_t i = 0; i < y.grad().size(); ++i) {
                    gv[i % n] += y.grad()[i];
                }
                v.accumulate_grad(gv.data(), n);
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        "scale", a, [c](double x) { return x * c; },
        [c](double, double) { return c; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor elu(const Tensor& x) {
    return unary_op(
        "elu", x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
        [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<std::uint8_t>* valid) {
    if (x.rank() < 1) {
        raise(ErrorKind::Dimension, "softmax: scalar input");
    }
    const int n = x.dim(x.rank() - 1);
    const std::size_t rows = x.values().size() / static_cast<std::size_t>(n);
    std::size_t mask_rows = 0;
    if (valid != nullptr) {
        if (valid->empty() || valid->size() % static_cast<std::size_t>(n) != 0 ||
            (rows * n) % valid->size() != 0) {
            raise(ErrorKind::Dimension, "softmax: mask size " + std::to_string(valid->size()) +
                                            " does not tile rows of length " + std::to_string(n));
        }
        mask_rows = valid->size() / static_cast<std::size_t>(n);
    }
    std::vector<double> out(x.values().size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * n;
        double* yr = out.data() + r * n;
        const std::uint8_t* mr =
            valid != nullptr ? valid->data() + (r % mask_rows) * n : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (mr == nullptr || mr[j]) {
                mx = std::max(mx, xr[j]);
            }
        }
        if (!std::isfinite(mx)) {
            raise(ErrorKind::Contract, "softmax: masked row has no valid entries");
        }
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            if (mr == nullptr || mr[j]) {
                yr[j] = std::exp(xr[j] - mx);
                z += yr[j];
            }
        }
        for (int j = 0; j < n; ++j) {
            yr[j] /= z;
        }
    }
    check_finite("softmax", out);
    Tensor y = Tensor::from(x.shape(), std::move(out));
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y, n, rows]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size(), 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* pr = y.values().data() + r * n;
                const double* gr = y.grad().data() + r * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) {
                    dot += pr[j] * gr[j];
                }
                double* gxr = gx.data() + r * n;
                for (int j = 0; j < n; ++j) {
                    gxr[j] = pr[j] * (gr[j] - dot);
                }
            }
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

}  // namespace

Tensor softmax(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor softmax_masked(const Tensor& x, const std::vector<std::uint8_t>& valid) {
    return softmax_impl(x, &valid);
}

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) {
        raise(ErrorKind::Contract, "concat: no inputs");
    }
    const int rank = parts[0].rank();
    if (axis < 0 || axis >= rank) {
        raise(ErrorKind::Dimension, "concat: axis " + std::to_string(axis) + " out of range");
    }
    Shape out_shape = parts[0].shape();
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != rank) {
            raise(ErrorKind::Dimension, "concat: rank mismatch");
        }
        for (int i = 0; i < rank; ++i) {
            if (i != axis && p.dim(i) != out_shape[static_cast<std::size_t>(i)]) {
                raise(ErrorKind::Dimension, "concat: shape mismatch " + shape_str(p.shape()) +
                                                " vs " + shape_str(parts[0].shape()));
            }
        }
        total += p.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;

    std::int64_t outer = 0;
    std::int64_t inner = 0;
    split_extents(out_shape, axis, &outer, &inner);
    std::vector<double> out(static_cast<std::size_t>(shape_size(out_shape)));
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
        const std::int64_t len = p.dim(axis);
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = p.values().data() + o * len * inner;
            double* dst = out.data() + (o * total + offset) * inner;
            std::copy(src, src + len * inner, dst);
        }
        offset += len;
    }
    Tensor y = Tensor::from(out_shape, std::move(out));

    bool track = false;
    for (const Tensor& p : parts) {
        if (grad_needed({&p})) {
            track = true;
            break;
        }
    }
    if (track) {
        y.set_requires_grad(true);
        g_active_tape->record([parts, y, axis, outer, inner, total]() {
            if (!y.has_grad()) {
                return;
            }
            std::int64_t offset = 0;
            for (const Tensor& p : parts) {
                const std::int64_t len = p.dim(axis);
                if (p.requires_grad()) {
                    std::vector<double> gp(p.values().size());
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const double* src = y.grad().data() + (o * total + offset) * inner;
                        std::copy(src, src + len * inner, gp.data() + o * len * inner);
                    }
                    p.accumulate_grad(gp.data(), gp.size());
                }
                offset += len;
            }
        });
    }
    return y;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    const int rank = x.rank();
    if (axis < 0 || axis >= rank) {
        raise(ErrorKind::Dimension, "slice: axis " + std::to_string(axis) + " out of range");
    }
    if (start < 0 || len <= 0 || start + len > x.dim(axis)) {
        raise(ErrorKind::Dimension, "slice: range [" + std::to_string(start) + "," +
                                        std::to_string(start + len) + ") exceeds axis size " +
                                        std::to_string(x.dim(axis)));
    }
    Shape out_shape = x.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    std::int64_t outer = 0;
    std::int64_t inner = 0;
    split_extents(x.shape(), axis, &outer, &inner);
    const std::int64_t full = x.dim(axis);
    std::vector<double> out(static_cast<std::size_t>(shape_size(out_shape)));
    for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = x.values().data() + (o * full + start) * inner;
        std::copy(src, src + static_cast<std::int64_t>(len) * inner,
                  out.data() + o * len * inner);
    }
    Tensor y = Tensor::from(out_shape, std::move(out));
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y, outer, inner, full, start, len]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size(), 0.0);
            for (std::int64_t o = 0; o < outer; ++o) {
                const double* src = y.grad().data() + o * len * inner;
                std::copy(src, src + static_cast<std::int64_t>(len) * inner,
                          gx.data() + (o * full + start) * inner);
            }
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

Tensor transpose(const Tensor& x) {
    require_rank("transpose", x, 2);
    const int m = x.dim(0);
    const int n = x.dim(1);
    std::vector<double> out(x.values().size());
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out[static_cast<std::size_t>(j) * m + i] = x.values()[static_cast<std::size_t>(i) * n + j];
        }
    }
    Tensor y = Tensor::from({n, m}, std::move(out));
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y, m, n]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size());
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    gx[static_cast<std::size_t>(i) * n + j] =
                        y.grad()[static_cast<std::size_t>(j) * m + i];
                }
            }
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Dropout / layer norm
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, double rate, RngStream& rng, bool active) {
    if (rate < 0.0 || rate >= 1.0) {
        raise(ErrorKind::Contract, "dropout: rate must lie in [0,1)");
    }
    if (!active || rate == 0.0) {
        return x;
    }
    const double inv_keep = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(x.values().size());
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool keep = rng.uniform() >= rate;
        (*mask)[i] = keep ? 1 : 0;
        out[i] = keep ? x.values()[i] * inv_keep : 0.0;
    }
    check_finite("dropout", out);
    Tensor y = Tensor::from(x.shape(), std::move(out));
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y, mask, inv_keep]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size(), 0.0);
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if ((*mask)[i]) {
                    gx[i] = y.grad()[i] * inv_keep;
                }
            }
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank("layer_norm", gain, 1);
    require_rank("layer_norm", bias, 1);
    if (x.rank() < 1) {
        raise(ErrorKind::Dimension, "layer_norm: scalar input");
    }
    const int n = x.dim(x.rank() - 1);
    if (gain.dim(0) != n || bias.dim(0) != n) {
        raise(ErrorKind::Dimension, "layer_norm: gain/bias length must match last axis " +
                                        std::to_string(n));
    }
    const std::size_t rows = x.values().size() / static_cast<std::size_t>(n);
    std::vector<double> out(x.values().size());
    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto invstd = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + r * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) {
            mu += xr[j];
        }
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = xr[j] - mu;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*invstd)[r] = is;
        for (int j = 0; j < n; ++j) {
            const double h = (xr[j] - mu) * is;
            (*xhat)[r * n + j] = h;
            out[r * n + j] = h * gain.values()[static_cast<std::size_t>(j)] +
                             bias.values()[static_cast<std::size_t>(j)];
        }
    }
    check_finite("layer_norm", out);
    Tensor y = Tensor::from(x.shape(), std::move(out));
    if (grad_needed({&x, &gain, &bias})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, gain, bias, y, xhat, invstd, n, rows]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (bias.requires_grad()) {
                std::vector<double> gb(static_cast<std::size_t>(n), 0.0);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (int j = 0; j < n; ++j) {
                        gb[static_cast<std::size_t>(j)] += gy[r * n + j];
                    }
                }
                bias.accumulate_grad(gb.data(), gb.size());
            }
            if (gain.requires_grad()) {
                std::vector<double> gg(static_cast<std::size_t>(n), 0.0);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (int j = 0; j < n; ++j) {
                        gg[static_cast<std::size_t>(j)] += gy[r * n + j] * (*xhat)[r * n + j];
                    }
                }
                gain.accumulate_grad(gg.data(), gg.size());
            }
            if (x.requires_grad()) {
                std::vector<double> gx(x.values().size());
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dh = gy[r * n + j] * gain.values()[static_cast<std::size_t>(j)];
                        mean_dh += dh;
                        mean_dh_h += dh * (*xhat)[r * n + j];
                    }
                    mean_dh /= n;
                    mean_dh_h /= n;
                    for (int j = 0; j < n; ++j) {
                        const double dh = gy[r * n + j] * gain.values()[static_cast<std::size_t>(j)];
                        gx[r * n + j] =
                            (*invstd)[r] * (dh - mean_dh - (*xhat)[r * n + j] * mean_dh_h);
                    }
                }
                x.accumulate_grad(gx.data(), gx.size());
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    if (!std::isfinite(s)) {
        raise(ErrorKind::Numeric, "sum: non-finite value produced");
    }
    Tensor y = Tensor::from({}, {s});
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size(), y.grad()[0]);
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.values().size());
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    s *= inv;
    if (!std::isfinite(s)) {
        raise(ErrorKind::Numeric, "mean: non-finite value produced");
    }
    Tensor y = Tensor::from({}, {s});
    if (grad_needed({&x})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, y, inv]() {
            if (!y.has_grad() || !x.requires_grad()) {
                return;
            }
            std::vector<double> gx(x.values().size(), y.grad()[0] * inv);
            x.accumulate_grad(gx.data(), gx.size());
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Fused model ops
// ---------------------------------------------------------------------------

Tensor channel_embed(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank("channel_embed", x, 2);
    require_rank("channel_embed", w, 2);
    require_rank("channel_embed", b, 2);
    const int rows = x.dim(0);
    const int n_vars = x.dim(1);
    const int d = w.dim(1);
    if (w.dim(0) != n_vars || b.dim(0) != n_vars || b.dim(1) != d) {
        raise(ErrorKind::Dimension, "channel_embed: incompatible shapes x=" + shape_str(x.shape()) +
                                        " w=" + shape_str(w.shape()) + " b=" + shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(rows) * n_vars * d);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.values().data() + static_cast<std::size_t>(r) * n_vars;
        double* orow = out.data() + static_cast<std::size_t>(r) * n_vars * d;
        for (int v = 0; v < n_vars; ++v) {
            const double xv = xr[v];
            const double* wr = w.values().data() + static_cast<std::size_t>(v) * d;
            const double* br = b.values().data() + static_cast<std::size_t>(v) * d;
            double* od = orow + static_cast<std::size_t>(v) * d;
            for (int j = 0; j < d; ++j) {
                od[j] = xv * wr[j] + br[j];
            }
        }
    }
    check_finite("channel_embed", out);
    Tensor y = Tensor::from({rows, n_vars * d}, std::move(out));
    if (grad_needed({&x, &w, &b})) {
        y.set_requires_grad(true);
        g_active_tape->record([x, w, b, y, rows, n_vars, d]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (x.requires_grad()) {
                std::vector<double> gx(x.values().size(), 0.0);
                for (int r = 0; r < rows; ++r) {
                    for (int v = 0; v < n_vars; ++v) {
                        const double* wr = w.values().data() + static_cast<std::size_t>(v) * d;
                        const double* gr =
                            gy + (static_cast<std::size_t>(r) * n_vars + v) * d;
                        double s = 0.0;
                        for (int j = 0; j < d; ++j) {
                            s += gr[j] * wr[j];
                        }
                        gx[static_cast<std::size_t>(r) * n_vars + v] = s;
                    }
                }
                x.accumulate_grad(gx.data(), gx.size());
            }
            if (w.requires_grad() || b.requires_grad()) {
                std::vector<double> gw(w.values().size(), 0.0);
                std::vector<double> gb(b.values().size(), 0.0);
                for (int r = 0; r < rows; ++r) {
                    const double* xr = x.values().data() + static_cast<std::size_t>(r) * n_vars;
                    for (int v = 0; v < n_vars; ++v) {
                        const double xv = xr[v];
                        const double* gr =
                            gy + (static_cast<std::size_t>(r) * n_vars + v) * d;
                        double* gwr = gw.data() + static_cast<std::size_t>(v) * d;
                        double* gbr = gb.data() + static_cast<std::size_t>(v) * d;
                        for (int j = 0; j < d; ++j) {
                            gwr[j] += xv * gr[j];
                            gbr[j] += gr[j];
                        }
                    }
                }
                if (w.requires_grad()) {
                    w.accumulate_grad(gw.data(), gw.size());
                }
                if (b.requires_grad()) {
                    b.accumulate_grad(gb.data(), gb.size());
                }
            }
        });
    }
    return y;
}

Tensor varsel_combine(const Tensor& flat, const Tensor& weights, int embed_dim) {
    require_rank("varsel_combine", flat, 2);
    require_rank("varsel_combine", weights, 2);
    const int rows = flat.dim(0);
    const int n_vars = weights.dim(1);
    if (weights.dim(0) != rows || flat.dim(1) != n_vars * embed_dim) {
        raise(ErrorKind::Dimension, "varsel_combine: incompatible shapes flat=" +
                                        shape_str(flat.shape()) + " weights=" +
                                        shape_str(weights.shape()) + " d=" +
                                        std::to_string(embed_dim));
    }
    const int d = embed_dim;
    std::vector<double> out(static_cast<std::size_t>(rows) * d, 0.0);
    for (int r = 0; r < rows; ++r) {
        const double* fr = flat.values().data() + static_cast<std::size_t>(r) * n_vars * d;
        const double* wr = weights.values().data() + static_cast<std::size_t>(r) * n_vars;
        double* orow = out.data() + static_cast<std::size_t>(r) * d;
        for (int v = 0; v < n_vars; ++v) {
            const double wv = wr[v];
            const double* fv = fr + static_cast<std::size_t>(v) * d;
            for (int j = 0; j < d; ++j) {
                orow[j] += wv * fv[j];
            }
        }
    }
    check_finite("varsel_combine", out);
    Tensor y = Tensor::from({rows, d}, std::move(out));
    if (grad_needed({&flat, &weights})) {
        y.set_requires_grad(true);
        g_active_tape->record([flat, weights, y, rows, n_vars, d]() {
            if (!y.has_grad()) {
                return;
            }
            const double* gy = y.grad().data();
            if (flat.requires_grad()) {
                std::vector<double> gf(flat.values().size(), 0.0);
                for (int r = 0; r < rows; ++r) {
                    const double* wr =
                        weights.values().data() + static_cast<std::size_t>(r) * n_vars;
                    const double* gr = gy + static_cast<std::size_t>(r) * d;
                    for (int v = 0; v < n_vars; ++v) {
                        const double wv = wr[v];
                        double* gfv =
                            gf.data() + (static_cast<std::size_t>(r) * n_vars + v) * d;
                        for (int j = 0; j < d; ++j) {
                            gfv[j] = wv * gr[j];
                        }
                    }
                }
                flat.accumulate_grad(gf.data(), gf.size());
            }
            if (weights.requires_grad()) {
                std::vector<double> gw(weights.values().size(), 0.0);
                for (int r = 0; r < rows; ++r) {
                    const double* fr =
                        flat.values().data() + static_cast<std::size_t>(r) * n_vars * d;
                    const double* gr = gy + static_cast<std::size_t>(r) * d;
                    for (int v = 0; v < n_vars; ++v) {
                        const double* fv = fr + static_cast<std::size_t>(v) * d;
                        double s = 0.0;
                        for (int j = 0; j < d; ++j) {
                            s += fv[j] * gr[j];
                        }
                        gw[static_cast<std::size_t>(r) * n_vars + v] = s;
                    }
                }
                weights.accumulate_grad(gw.data(), gw.size());
            }
        });
    }
    return y;
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
    if (steps.empty()) {
        raise(ErrorKind::Contract, "stack_steps: no inputs");
    }
    require_rank("stack_steps", steps[0], 2);
    const int batch = steps[0].dim(0);
    const int d = steps[0].dim(1);
    const int n_steps = static_cast<int>(steps.size());
    for (const Tensor& s : steps) {
        if (s.rank() != 2 || s.dim(0) != batch || s.dim(1) != d) {
            raise(ErrorKind::Dimension, "stack_steps: step shape mismatch");
        }
    }
    std::vector<double> out(static_cast<std::size_t>(batch) * n_steps * d);
    for (int t = 0; t < n_steps; ++t) {
        const double* src = steps[static_cast<std::size_t>(t)].values().data();
        for (int r = 0; r < batch; ++r) {
            std::copy(src + static_cast<std::size_t>(r) * d, src + static_cast<std::size_t>(r + 1) * d,
                      out.data() + (static_cast<std::size_t>(r) * n_steps + t) * d);
        }
    }
    Tensor y = Tensor::from({batch, n_steps, d}, std::move(out));
    bool track = false;
    for (const Tensor& s : steps) {
        if (grad_needed({&s})) {
            track = true;
            break;
        }
    }
    if (track) {
        y.set_requires_grad(true);
        g_active_tape->record([steps, y, batch, d, n_steps]() {
            if (!y.has_grad()) {
                return;
            }
            for (int t = 0; t < n_steps; ++t) {
                const Tensor& s = steps[static_cast<std::size_t>(t)];
                if (!s.requires_grad()) {
                    continue;
                }
                std::vector<double> gs(s.values().size());
                for (int r = 0; r < batch; ++r) {
                    const double* src =
                        y.grad().data() + (static_cast<std::size_t>(r) * n_steps + t) * d;
                    std::copy(src, src + d, gs.data() + static_cast<std::size_t>(r) * d);
                }
                s.accumulate_grad(gs.data(), gs.size());
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// Fused losses
// ---------------------------------------------------------------------------

Tensor pinball_loss(const Tensor& pred, const std::vector<double>& target,
                    const std::vector<std::uint8_t>& valid,
                    const std::vector<double>& quantiles) {
    if (pred.rank() != 2 && pred.rank() != 3) {
        raise(ErrorKind::Dimension, "pinball_loss: pred must be [H,Q] or [B,H,Q], got " +
                                        shape_str(pred.shape()));
    }
    const int n_q = pred.dim(pred.rank() - 1);
    if (static_cast<int>(quantiles.size()) != n_q) {
        raise(ErrorKind::Dimension, "pinball_loss: quantile count mismatch");
    }
    const std::size_t n_points = pred.values().size() / static_cast<std::size_t>(n_q);
    if (target.size() != n_points || (!valid.empty() && valid.size() != n_points)) {
        raise(ErrorKind::Dimension, "pinball_loss: target/mask length mismatch");
    }
    double denom = 0.0;
    if (valid.empty()) {
        denom = static_cast<double>(n_points);
    } else {
        for (std::uint8_t m : valid) {
            denom += m ? 1.0 : 0.0;
        }
    }
    double loss = 0.0;
    if (denom > 0.0) {
        for (std::size_t p = 0; p < n_points; ++p) {
            if (!valid.empty() && !valid[p]) {
                continue;
            }
            const double t = target[p];
            const double* pr = pred.values().data() + p * n_q;
            for (int q = 0; q < n_q; ++q) {
                const double e = t - pr[q];
                const double qq = quantiles[static_cast<std::size_t>(q)];
                loss += std::max(qq * e, (qq - 1.0) * e);
            }
        }
        loss /= denom * n_q;
    }
    if (!std::isfinite(loss)) {
        raise(ErrorKind::Numeric, "pinball_loss: non-finite value produced");
    }
    Tensor y = Tensor::from({}, {loss});
    if (grad_needed({&pred}) && denom > 0.0) {
        y.set_requires_grad(true);
        const double inv = 1.0 / (denom * n_q);
        g_active_tape->record([pred, y, target, valid, quantiles, n_q, n_points, inv]() {
            if (!y.has_grad() || !pred.requires_grad()) {
                return;
            }
            const double g0 = y.grad()[0] * inv;
            std::vector<double> gp(pred.values().size(), 0.0);
            for (std::size_t p = 0; p < n_points; ++p) {
                if (!valid.empty() && !valid[p]) {
                    continue;
                }
                const double t = target[p];
                const double* pr = pred.values().data() + p * n_q;
                double* gr = gp.data() + p * n_q;
                for (int q = 0; q < n_q; ++q) {
                    const double e = t - pr[q];
                    const double qq = quantiles[static_cast<std::size_t>(q)];
                    // d/dpred of max(q e, (q-1) e); ties take the first branch.
                    gr[q] = (qq * e >= (qq - 1.0) * e ? -qq : 1.0 - qq) * g0;
                }
            }
            pred.accumulate_grad(gp.data(), gp.size());
        });
    }
    return y;
}

Tensor mae_loss(const Tensor& pred, const std::vector<double>& target,
                const std::vector<std::uint8_t>& valid) {
    const std::size_t n_points = pred.values().size();
    if (target.size() != n_points || (!valid.empty() && valid.size() != n_points)) {
        raise(ErrorKind::Dimension, "mae_loss: target/mask length mismatch");
    }
    double denom = 0.0;
    if (valid.empty()) {
        denom = static_cast<double>(n_points);
    } else {
        for (std::uint8_t m : valid) {
            denom += m ? 1.0 : 0.0;
        }
    }
    double loss = 0.0;
    if (denom > 0.0) {
        for (std::size_t p = 0; p < n_points; ++p) {
            if (!valid.empty() && !valid[p]) {
                continue;
            }
            loss += std::abs(target[p] - pred.values()[p]);
        }
        loss /= denom;
    }
    if (!std::isfinite(loss)) {
        raise(ErrorKind::Numeric, "mae_loss: non-finite value produced");
    }
    Tensor y = Tensor::from({}, {loss});
    if (grad_needed({&pred}) && denom > 0.0) {
        y.set_requires_grad(true);
        const double inv = 1.0 / denom;
        g_active_tape->record([pred, y, target, valid, n_points, inv]() {
            if (!y.has_grad() || !pred.requires_grad()) {
                return;
            }
            const double g0 = y.grad()[0] * inv;
            std::vector<double> gp(n_points, 0.0);
            for (std::size_t p = 0; p < n_points; ++p) {
                if (!valid.empty() && !valid[p]) {
                    continue;
                }
                const double e = target[p] - pred.values()[p];
                gp[p] = (e > 0.0 ? -1.0 : (e < 0.0 ? 1.0 : 0.0)) * g0;
            }
            pred.accumulate_grad(gp.data(), gp.size());
        });
    }
    return y;
}

}  // namespace tftl
