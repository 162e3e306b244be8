#include "vqmpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vqmpt {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

std::int64_t numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
}

std::vector<std::int64_t> row_major_strides(const std::vector<int>& shape) {
    std::vector<std::int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * shape[i + 1];
    return st;
}

NodePtr make_node(std::vector<int> shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data.assign(static_cast<std::size_t>(numel(n->shape)), 0.0);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->data.size(), 0.0);
    return n;
}

void check_positive_extents(const std::vector<int>& shape) {
    for (int e : shape)
        if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
}

bool any_grad(const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
        if (t.requires_grad()) return true;
    return false;
}

// Result node whose parents are the inputs that track gradients.
Tensor make_result(std::vector<int> shape, const std::vector<Tensor>& inputs,
                   std::function<void(TensorNode&)> backward_fn) {
    bool rg = any_grad(inputs);
    auto n = make_node(std::move(shape), rg);
    if (rg) {
        for (const auto& t : inputs) n->parents.push_back(t.handle());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(n);
}

std::vector<int> broadcast_shapes(const std::vector<int>& a, const std::vector<int>& b,
                                  const char* op) {
    std::size_t r = std::max(a.size(), b.size());
    std::vector<int> out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        int ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
        int eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a) + " and " +
                                 shape_to_string(b) + " do not broadcast");
        out[i] = std::max(ea, eb);
    }
    return out;
}

// Maps a flat index in `out_shape` to the flat index in `in_shape`
// (broadcast semantics: size-1 extents pin to index 0).
struct BroadcastMap {
    std::vector<int> out_shape;
    std::vector<std::int64_t> out_strides;
    std::vector<std::int64_t> in_strides;  // 0 where the input extent is 1
    BroadcastMap(const std::vector<int>& out, const std::vector<int>& in)
        : out_shape(out), out_strides(row_major_strides(out)) {
        std::size_t off = out.size() - in.size();
        auto ist = row_major_strides(in);
        in_strides.assign(out.size(), 0);
        for (std::size_t i = 0; i < in.size(); ++i)
            in_strides[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : ist[i];
    }
    std::int64_t operator()(std::int64_t flat) const {
        std::int64_t in = 0;
        for (std::size_t d = 0; d < out_shape.size(); ++d) {
            std::int64_t idx = flat / out_strides[d];
            flat -= idx * out_strides[d];
            in += idx * in_strides[d];
        }
        return in;
    }
};

// Elementwise binary op with broadcasting. dfa/dfb give d(out)/d(a,b) at
// each element.
template <class F, class DFA, class DFB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DFA dfa, DFB dfb) {
    auto out_shape = broadcast_shapes(a.shape(), b.shape(), name);
    BroadcastMap ma(out_shape, a.shape()), mb(out_shape, b.shape());
    const auto& ad = a.data();
    const auto& bd = b.data();
    Tensor out = make_result(
        out_shape, {a, b}, [ma, mb, f, dfa, dfb](TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(self.data.size()); ++i) {
                double g = self.grad[i];
                std::int64_t ia = ma(i), ib = mb(i);
                double av = pa.data[ia], bv = pb.data[ib];
                if (pa.requires_grad) pa.grad[ia] += g * dfa(av, bv);
                if (pb.requires_grad) pb.grad[ib] += g * dfb(av, bv);
            }
        });
    auto& od = out.data();
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(od.size()); ++i)
        od[i] = f(ad[ma(i)], bd[mb(i)]);
    return out;
}

// Elementwise unary op; df is evaluated at the input value.
template <class F, class DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
    Tensor out = make_result(a.shape(), {a}, [df](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < self.data.size(); ++i)
            p.grad[i] += self.grad[i] * df(p.data[i]);
    });
    const auto& ad = a.data();
    auto& od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = f(ad[i]);
    return out;
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

// ---- Tensor basics ----

Tensor::Tensor() = default;

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
    check_positive_extents(shape);
    return Tensor(make_node(shape, requires_grad));
}

Tensor Tensor::full(const std::vector<int>& shape, double value, bool requires_grad) {
    Tensor t = zeros(shape, requires_grad);
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

Tensor Tensor::from_data(const std::vector<int>& shape, std::vector<double> data,
                         bool requires_grad) {
    check_positive_extents(shape);
    if (static_cast<std::int64_t>(data.size()) != numel(shape))
        throw DimensionError("from_data: " + std::to_string(data.size()) +
                             " values for shape " + shape_to_string(shape));
    auto n = make_node(shape, requires_grad);
    n->data = std::move(data);
    return Tensor(n);
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }
std::int64_t Tensor::size() const { return static_cast<std::int64_t>(node_->data.size()); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
std::vector<double>& Tensor::data() { return node_->data; }
const std::vector<double>& Tensor::data() const { return node_->data; }

const std::vector<double>& Tensor::grad() const {
    if (!node_->requires_grad)
        throw std::logic_error("grad() on a tensor without gradient tracking");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar " + shape_str());
    return node_->data[0];
}

double Tensor::at(int i) const { return node_->data.at(static_cast<std::size_t>(i)); }

double Tensor::at(int r, int c) const {
    if (rank() != 2) throw DimensionError("at(r,c) on " + shape_str());
    return node_->data.at(static_cast<std::size_t>(r) * shape()[1] + c);
}

bool Tensor::all_finite() const {
    for (double v : node_->data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape()); }

// ---- backward ----

void backward(const Tensor& root) {
    if (root.size() != 1) throw DimensionError("backward() requires a scalar root");
    TensorNode* r = root.node();
    if (!r->requires_grad) return;

    // Deterministic iterative postorder over parents.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(r, 0);
    visited.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    r->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

Tensor detach(const Tensor& x) {
    auto n = make_node(x.shape(), false);
    n->data = x.data();
    return Tensor(n);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "add", [](double x, double y) { return x + y; },
                     [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "sub", [](double x, double y) { return x - y; },
                     [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(a, b, "mul", [](double x, double y) { return x * y; },
                     [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x * s; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
    return unary_op(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor exp_(const Tensor& a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor log_(const Tensor& a) {
    return unary_op(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

// ---- activations ----

Tensor softplus(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double x) {
                        double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 - s);
                    });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary_op(
        a,
        [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [=](double x) {
            double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            return phi + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

// ---- softmax family ----

namespace {

// Iterates the tensor as (outer, axis_len, inner) slices for a given axis.
struct AxisView {
    std::int64_t outer, len, inner;
    AxisView(const std::vector<int>& shape, int axis) {
        outer = 1;
        for (int i = 0; i < axis; ++i) outer *= shape[i];
        len = shape[axis];
        inner = 1;
        for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    }
    std::int64_t index(std::int64_t o, std::int64_t k, std::int64_t in) const {
        return (o * len + k) * inner + in;
    }
};

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
    if (axis < 0 || axis >= a.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + a.shape_str());
    AxisView v(a.shape(), axis);
    Tensor out = make_result(a.shape(), {a}, [v](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::int64_t o = 0; o < v.outer; ++o)
            for (std::int64_t in = 0; in < v.inner; ++in) {
                double dot = 0.0;
                for (std::int64_t k = 0; k < v.len; ++k) {
                    std::int64_t i = v.index(o, k, in);
                    dot += self.grad[i] * self.data[i];
                }
                for (std::int64_t k = 0; k < v.len; ++k) {
                    std::int64_t i = v.index(o, k, in);
                    p.grad[i] += self.data[i] * (self.grad[i] - dot);
                }
            }
    });
    const auto& ad = a.data();
    auto& od = out.data();
    for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t in = 0; in < v.inner; ++in) {
            double mx = -HUGE_VAL;
            for (std::int64_t k = 0; k < v.len; ++k)
                mx = std::max(mx, ad[v.index(o, k, in)]);
            double denom = 0.0;
            for (std::int64_t k = 0; k < v.len; ++k) {
                std::int64_t i = v.index(o, k, in);
                od[i] = std::exp(ad[i] - mx);
                denom += od[i];
            }
            for (std::int64_t k = 0; k < v.len; ++k) od[v.index(o, k, in)] /= denom;
        }
    return out;
}

Tensor log_softmax(const Tensor& a) {
    int axis = a.rank() - 1;
    AxisView v(a.shape(), axis);
    Tensor out = make_result(a.shape(), {a}, [v](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::int64_t o = 0; o < v.outer; ++o)
            for (std::int64_t in = 0; in < v.inner; ++in) {
                double gsum = 0.0;
                for (std::int64_t k = 0; k < v.len; ++k)
                    gsum += self.grad[v.index(o, k, in)];
                for (std::int64_t k = 0; k < v.len; ++k) {
                    std::int64_t i = v.index(o, k, in);
                    p.grad[i] += self.grad[i] - std::exp(self.data[i]) * gsum;
                }
            }
    });
    const auto& ad = a.data();
    auto& od = out.data();
    for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t in = 0; in < v.inner; ++in) {
            double mx = -HUGE_VAL;
            for (std::int64_t k = 0; k < v.len; ++k)
                mx = std::max(mx, ad[v.index(o, k, in)]);
            double denom = 0.0;
            for (std::int64_t k = 0; k < v.len; ++k)
                denom += std::exp(ad[v.index(o, k, in)] - mx);
            double lse = mx + std::log(denom);
            for (std::int64_t k = 0; k < v.len; ++k) {
                std::int64_t i = v.index(o, k, in);
                od[i] = ad[i] - lse;
            }
        }
    return out;
}

// ---- layernorm ----

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    int d = x.shape().back();
    if (gain.size() != d || bias.size() != d)
        throw DimensionError("layernorm: affine shapes " + gain.shape_str() + "/" +
                             bias.shape_str() + " vs feature dim " + std::to_string(d));
    std::int64_t rows = x.size() / d;
    Tensor out = make_result(x.shape(), {x, gain, bias}, [d, rows, eps](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = px.data.data() + r * d;
            double mu = 0.0;
            for (int j = 0; j < d; ++j) mu += xr[j];
            mu /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= d;
            double inv = 1.0 / std::sqrt(var + eps);
            const double* go = self.grad.data() + r * d;
            // dxhat = g * gain; dx via the standard centered formula
            double m1 = 0.0, m2 = 0.0;
            for (int j = 0; j < d; ++j) {
                double xhat = (xr[j] - mu) * inv;
                double dxh = go[j] * pg.data[j];
                m1 += dxh;
                m2 += dxh * xhat;
            }
            m1 /= d;
            m2 /= d;
            for (int j = 0; j < d; ++j) {
                double xhat = (xr[j] - mu) * inv;
                if (px.requires_grad)
                    px.grad[r * d + j] += inv * (go[j] * pg.data[j] - m1 - xhat * m2);
                if (pg.requires_grad) pg.grad[j] += go[j] * xhat;
                if (pb.requires_grad) pb.grad[j] += go[j];
            }
        }
    });
    const auto& xd = x.data();
    auto& od = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= d;
        double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j)
            od[r * d + j] = (xr[j] - mu) * inv * gain.data()[j] + bias.data()[j];
    }
    return out;
}

Tensor l2_normalize(const Tensor& x) {
    int d = x.shape().back();
    std::int64_t rows = x.size() / d;
    const auto& xd = x.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += xd[r * d + j] * xd[r * d + j];
        if (s == 0.0) throw NumericDomainError("l2_normalize: zero-norm vector at row " +
                                               std::to_string(r));
    }
    Tensor out = make_result(x.shape(), {x}, [d, rows](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = p.data.data() + r * d;
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += xr[j] * xr[j];
            double n = std::sqrt(s);
            const double* y = self.data.data() + r * d;
            const double* g = self.grad.data() + r * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += y[j] * g[j];
            for (int j = 0; j < d; ++j) p.grad[r * d + j] += (g[j] - y[j] * dot) / n;
        }
    });
    auto& od = out.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += xd[r * d + j] * xd[r * d + j];
        double inv = 1.0 / std::sqrt(s);
        for (int j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] * inv;
    }
    return out;
}

// ---- matmul ----

namespace {

// C(m,n) += A(m,k) * B(k,n), optionally transposing either operand view.
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n,
              bool trans_a, bool trans_b) {
    // i-k-j ordering keeps the inner loop contiguous on B and C.
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < k; ++l) {
            double av = trans_a ? a[l * m + i] : a[i * k + l];
            if (av == 0.0) continue;
            const double* brow = trans_b ? nullptr : b + l * n;
            double* crow = c + i * n;
            if (!trans_b) {
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) crow[j] += av * b[j * k + l];
            }
        }
    }
}

struct MatmulPlan {
    std::vector<int> out_shape;     // broadcast batch extents + (m, n)
    int m, k, n;
    BroadcastMap map_a, map_b;      // over batch-flat indices
    std::int64_t batches;
    MatmulPlan(const std::vector<int>& as, const std::vector<int>& bs)
        : m(0), k(0), n(0), map_a({1}, {1}), map_b({1}, {1}), batches(1) {
        if (as.size() < 2 || bs.size() < 2)
            throw DimensionError("matmul: operands must have rank >= 2, got " +
                                 shape_to_string(as) + " and " + shape_to_string(bs));
        m = as[as.size() - 2];
        k = as[as.size() - 1];
        int kb = bs[bs.size() - 2];
        n = bs[bs.size() - 1];
        if (k != kb)
            throw DimensionError("matmul: inner extents disagree for shapes " +
                                 shape_to_string(as) + " and " + shape_to_string(bs));
        std::vector<int> ab(as.begin(), as.end() - 2), bb(bs.begin(), bs.end() - 2);
        std::vector<int> batch_shape = broadcast_shapes(ab, bb, "matmul");
        out_shape = batch_shape;
        out_shape.push_back(m);
        out_shape.push_back(n);
        if (batch_shape.empty()) batch_shape = {1};
        if (ab.empty()) ab = {1};
        if (bb.empty()) bb = {1};
        map_a = BroadcastMap(batch_shape, ab);
        map_b = BroadcastMap(batch_shape, bb);
        batches = numel(batch_shape);
    }
};

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    MatmulPlan plan(a.shape(), b.shape());
    const std::vector<int>& out_shape = plan.out_shape;
    const int m = plan.m, k = plan.k, n = plan.n;
    Tensor out = make_result(out_shape, {a, b}, [plan, m, k, n](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::int64_t t = 0; t < plan.batches; ++t) {
            const double* go = self.grad.data() + t * static_cast<std::int64_t>(m) * n;
            std::int64_t ia = plan.map_a(t) * static_cast<std::int64_t>(m) * k;
            std::int64_t ib = plan.map_b(t) * static_cast<std::int64_t>(k) * n;
            if (pa.requires_grad)  // dA = dC * B^T
                gemm_acc(go, pb.data.data() + ib, pa.grad.data() + ia, m, n, k, false, true);
            if (pb.requires_grad)  // dB = A^T * dC
                gemm_acc(pa.data.data() + ia, go, pb.grad.data() + ib, k, m, n, true, false);
        }
    });
    auto& od = out.data();
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::int64_t t = 0; t < plan.batches; ++t) {
        gemm_acc(ad.data() + plan.map_a(t) * static_cast<std::int64_t>(m) * k,
                 bd.data() + plan.map_b(t) * static_cast<std::int64_t>(k) * n,
                 od.data() + t * static_cast<std::int64_t>(m) * n, m, k, n, false, false);
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() < 2) throw DimensionError("transpose: rank-" + std::to_string(a.rank()) + " input");
    auto shape = a.shape();
    int r = a.rank();
    std::swap(shape[r - 2], shape[r - 1]);
    int rows = a.shape()[r - 2], cols = a.shape()[r - 1];
    std::int64_t batches = a.size() / (static_cast<std::int64_t>(rows) * cols);
    Tensor out = make_result(shape, {a}, [rows, cols, batches](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::int64_t t = 0; t < batches; ++t) {
            double* pg = p.grad.data() + t * rows * cols;
            const double* g = self.grad.data() + t * rows * cols;
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) pg[i * cols + j] += g[j * rows + i];
        }
    });
    const auto& ad = a.data();
    auto& od = out.data();
    for (std::int64_t t = 0; t < batches; ++t) {
        const double* src = ad.data() + t * rows * cols;
        double* dst = od.data() + t * rows * cols;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
    }
    return out;
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
    Tensor out = make_result({1}, {a}, [](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        double g = self.grad[0];
        for (auto& v : p.grad) v += g;
    });
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc;
    return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// ---- slicing / concatenation ----

namespace {
void check_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw DimensionError(std::string(op) + ": rank-2 tensor required, got " + a.shape_str());
}
}  // namespace

Tensor slice_rows(const Tensor& a, int start, int count) {
    check_rank2(a, "slice_rows");
    int rows = a.shape()[0], cols = a.shape()[1];
    if (start < 0 || count <= 0 || start + count > rows)
        throw DimensionError("slice_rows: [" + std::to_string(start) + "," +
                             std::to_string(start + count) + ") out of " + a.shape_str());
    Tensor out = make_result({count, cols}, {a}, [start, count, cols](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (int i = 0; i < count; ++i)
            for (int j = 0; j < cols; ++j)
                p.grad[(start + i) * cols + j] += self.grad[i * cols + j];
    });
    const auto& ad = a.data();
    std::copy(ad.begin() + static_cast<std::size_t>(start) * cols,
              ad.begin() + static_cast<std::size_t>(start + count) * cols, out.data().begin());
    return out;
}

Tensor slice_cols(const Tensor& a, int start, int count) {
    check_rank2(a, "slice_cols");
    int rows = a.shape()[0], cols = a.shape()[1];
    if (start < 0 || count <= 0 || start + count > cols)
        throw DimensionError("slice_cols: [" + std::to_string(start) + "," +
                             std::to_string(start + count) + ") out of " + a.shape_str());
    Tensor out = make_result({rows, count}, {a}, [start, count, rows, cols](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < count; ++j)
                p.grad[i * cols + start + j] += self.grad[i * count + j];
    });
    const auto& ad = a.data();
    auto& od = out.data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < count; ++j) od[i * count + j] = ad[i * cols + start + j];
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    int cols = parts[0].shape()[1];
    int rows = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat_rows");
        if (p.shape()[1] != cols)
            throw DimensionError("concat_rows: column mismatch " + p.shape_str() + " vs " +
                                 parts[0].shape_str());
        rows += p.shape()[0];
    }
    bool rg = any_grad(parts);
    auto n = make_node({rows, cols}, rg);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        std::copy(p.data().begin(), p.data().end(), n->data.begin() + static_cast<std::size_t>(off) * cols);
        off += p.shape()[0];
    }
    if (rg) {
        for (const auto& p : parts) n->parents.push_back(p.handle());
        n->backward_fn = [offsets, cols](TensorNode& self) {
            for (std::size_t t = 0; t < self.parents.size(); ++t) {
                auto& p = *self.parents[t];
                if (!p.requires_grad) continue;
                std::size_t base = static_cast<std::size_t>(offsets[t]) * cols;
                for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += self.grad[base + i];
            }
        };
    }
    return Tensor(n);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    int rows = parts[0].shape()[0];
    int cols = 0;
    for (const auto& p : parts) {
        check_rank2(p, "concat_cols");
        if (p.shape()[0] != rows)
            throw DimensionError("concat_cols: row mismatch " + p.shape_str() + " vs " +
                                 parts[0].shape_str());
        cols += p.shape()[1];
    }
    bool rg = any_grad(parts);
    auto n = make_node({rows, cols}, rg);
    std::vector<int> offsets;
    int off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        int pc = p.shape()[1];
        for (int i = 0; i < rows; ++i)
            std::copy(p.data().begin() + static_cast<std::size_t>(i) * pc,
                      p.data().begin() + static_cast<std::size_t>(i + 1) * pc,
                      n->data.begin() + static_cast<std::size_t>(i) * cols + off);
        off += pc;
    }
    if (rg) {
        for (const auto& p : parts) n->parents.push_back(p.handle());
        n->backward_fn = [offsets, rows, cols](TensorNode& self) {
            for (std::size_t t = 0; t < self.parents.size(); ++t) {
                auto& p = *self.parents[t];
                if (!p.requires_grad) continue;
                int pc = static_cast<int>(p.data.size()) / rows;
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < pc; ++j)
                        p.grad[i * pc + j] += self.grad[i * cols + offsets[t] + j];
            }
        };
    }
    return Tensor(n);
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& indices) {
    check_rank2(table, "gather_rows");
    int rows = table.shape()[0], cols = table.shape()[1];
    if (indices.empty()) throw DimensionError("gather_rows: empty index list");
    for (int ix : indices)
        if (ix < 0 || ix >= rows)
            throw DimensionError("gather_rows: index " + std::to_string(ix) + " out of " +
                                 table.shape_str());
    Tensor out = make_result({static_cast<int>(indices.size()), cols}, {table},
                             [indices, cols](TensorNode& self) {
                                 auto& p = *self.parents[0];
                                 if (!p.requires_grad) return;
                                 for (std::size_t i = 0; i < indices.size(); ++i)
                                     for (int j = 0; j < cols; ++j)
                                         p.grad[static_cast<std::size_t>(indices[i]) * cols + j] +=
                                             self.grad[i * cols + j];
                             });
    const auto& td = table.data();
    auto& od = out.data();
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy(td.begin() + static_cast<std::size_t>(indices[i]) * cols,
                  td.begin() + static_cast<std::size_t>(indices[i] + 1) * cols,
                  od.begin() + i * cols);
    return out;
}

Tensor pick(const Tensor& a, const std::vector<int>& cols) {
    check_rank2(a, "pick");
    int rows = a.shape()[0], width = a.shape()[1];
    if (static_cast<int>(cols.size()) != rows)
        throw DimensionError("pick: " + std::to_string(cols.size()) + " column picks for " +
                             a.shape_str());
    for (int c : cols)
        if (c < 0 || c >= width)
            throw DimensionError("pick: column " + std::to_string(c) + " out of " + a.shape_str());
    Tensor out = make_result({rows}, {a}, [cols, width](TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < cols.size(); ++i)
            p.grad[i * width + cols[i]] += self.grad[i];
    });
    auto& od = out.data();
    const auto& ad = a.data();
    for (int i = 0; i < rows; ++i) od[i] = ad[static_cast<std::size_t>(i) * width + cols[i]];
    return out;
}

}  // namespace vqmpt
