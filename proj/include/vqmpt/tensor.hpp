#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vqmpt/errors.hpp"

namespace vqmpt {

namespace detail {
struct TensorNode;
}

// Reverse-mode autodiff tensor: a shared handle to a graph node holding a
// dense row-major double array, its shape, and (for gradient-tracking nodes)
// an accumulated gradient of the same shape. Ops build the graph; calling
// backward() on a scalar result fills .grad() on every reachable node with
// requires_grad set. Copying a Tensor copies the handle, not the storage.
class Tensor {
public:
    Tensor();  // null handle

    static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
    static Tensor full(const std::vector<int>& shape, double value, bool requires_grad = false);
    static Tensor from_data(const std::vector<int>& shape, std::vector<double> data,
                            bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const;
    int rank() const;
    std::int64_t size() const;
    bool requires_grad() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    double item() const;                     // scalar tensors only
    double at(int i) const;                  // flat index
    double at(int r, int c) const;           // rank-2 convenience

    bool all_finite() const;

    std::string shape_str() const;

    detail::TensorNode* node() const { return node_.get(); }
    std::shared_ptr<detail::TensorNode> handle() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {
struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized like data iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;  // pushes self.grad into parents
};
}  // namespace detail

// ---- graph execution ----

// Runs reverse-mode accumulation from a scalar root. Gradients accumulate
// (+=) into every requires_grad node; call zero_grad on parameters between
// steps.
void backward(const Tensor& root);

// Copy of values with the graph and gradient tracking severed.
Tensor detach(const Tensor& x);

// ---- elementwise / broadcast ----

Tensor add(const Tensor& a, const Tensor& b);   // numpy-style broadcasting
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);

// ---- activations / normalizations ----

Tensor softplus(const Tensor& a);          // ln(1+e^x), overflow-safe
Tensor gelu(const Tensor& a);              // x * Phi(x), exact erf form
Tensor sigmoid(const Tensor& a);

// Stabilized softmax along `axis` (max subtraction before exponentiation).
Tensor softmax(const Tensor& a, int axis);

// log softmax over the last axis.
Tensor log_softmax(const Tensor& a);

// Per-row layer normalization over the last axis with affine (gain, bias),
// both of shape (last_dim). epsilon sits inside the square root.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

// Normalizes each last-axis vector to unit Euclidean norm. Throws
// NumericDomainError when a vector norm underflows to zero.
Tensor l2_normalize(const Tensor& x);

// ---- contractions and structure ----

// Matrix product over the trailing two axes; leading (batch) axes broadcast.
// Rank-1 operands are not accepted.
Tensor matmul(const Tensor& a, const Tensor& b);

// Swap of the trailing two axes.
Tensor transpose(const Tensor& a);

Tensor sum(const Tensor& a);    // scalar
Tensor mean(const Tensor& a);   // scalar

// Row slicing / joining for rank-2 tensors.
Tensor slice_rows(const Tensor& a, int start, int count);
Tensor slice_cols(const Tensor& a, int start, int count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Embedding-style lookup: rows of `table` (rank-2) selected by index;
// backward scatter-adds into the table.
Tensor gather_rows(const Tensor& table, const std::vector<int>& indices);

// out[i] = a(i, cols[i]) for a rank-2 input; used for per-row target picks.
Tensor pick(const Tensor& a, const std::vector<int>& cols);

// ---- utility ----

std::string shape_to_string(const std::vector<int>& shape);

}  // namespace vqmpt
