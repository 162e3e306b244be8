#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vqmpt/rng.hpp"
#include "vqmpt/tensor.hpp"

namespace vqmpt {

// Boolean attention mask: blocked(i, j) == true means query position i must
// receive exactly zero weight on key position j.
class AttentionMask {
public:
    AttentionMask(int n_q, int n_k) : n_q_(n_q), n_k_(n_k), blocked_(static_cast<std::size_t>(n_q) * n_k, 0) {}

    static AttentionMask causal(int n) {
        AttentionMask m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) m.block(i, j);
        return m;
    }

    void block(int i, int j) { blocked_[static_cast<std::size_t>(i) * n_k_ + j] = 1; }
    bool is_blocked(int i, int j) const { return blocked_[static_cast<std::size_t>(i) * n_k_ + j] != 0; }
    int n_q() const { return n_q_; }
    int n_k() const { return n_k_; }

private:
    int n_q_, n_k_;
    std::vector<std::uint8_t> blocked_;
};

// Scaled dot-product attention over rank-2 operands: Q (n_q x d_q),
// K (n_k x d_q), V (n_k x d_v). Scores are scaled by 1/sqrt(d_v) and blocked
// positions are pushed to -inf before the stabilized softmax, so their
// weights underflow to exactly zero. When weights_out is given it receives
// the (n_q x n_k) weight matrix.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionMask* mask = nullptr, Tensor* weights_out = nullptr);

// Named parameter registry. Models register their tensors once; the
// optimizer and checkpoint writer consume the same ordered list.
class ParamSet {
public:
    Tensor add(const std::string& name, Tensor t) {
        names_.push_back(name);
        params_.push_back(t);
        return t;
    }
    const std::vector<Tensor>& tensors() const { return params_; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return params_.size(); }
    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> params_;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(int fan_in, int fan_out, Pcg32& rng);

// Small-scale normal init for embeddings and static encodings.
Tensor normal_init(const std::vector<int>& shape, double stddev, Pcg32& rng);

// y = x W + b with W (in x out) and b (out).
struct Linear {
    Tensor w, b;
    Linear() = default;
    Linear(int in, int out, Pcg32& rng, ParamSet& ps, const std::string& name);
    Tensor operator()(const Tensor& x) const;
    int out_dim() const { return w.shape()[1]; }
};

struct MhaParams {
    Linear wq, wk, wv, wo;
    int heads = 1;
    MhaParams() = default;
    MhaParams(int model_dim, int heads, Pcg32& rng, ParamSet& ps, const std::string& name);
};

// Multi-headed attention: per-head slices of the q/k/v projections run
// through attention() and the concatenated heads go through the output
// projection. model_dim must be divisible by the head count.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaParams& p, const AttentionMask* mask = nullptr);

struct LayerNormParams {
    Tensor gain, bias;
    LayerNormParams() = default;
    LayerNormParams(int dim, ParamSet& ps, const std::string& name);
    Tensor operator()(const Tensor& x) const { return layernorm(x, gain, bias); }
};

// Prenorm transformer block: x + Attn(LN(x)) followed by x + MLP(LN(x)).
// For cross-attention, keys/values come from a separate context sequence
// and only the query stream is normalized.
struct PrenormBlock {
    MhaParams mha;
    LayerNormParams ln_attn, ln_mlp;
    Linear mlp_in, mlp_out;
    PrenormBlock() = default;
    PrenormBlock(int model_dim, int heads, int mlp_dim, Pcg32& rng, ParamSet& ps,
                 const std::string& name);
    Tensor operator()(const Tensor& x, const AttentionMask* mask = nullptr) const;
    Tensor cross(const Tensor& x, const Tensor& context) const;
};

// Fixed sinusoidal position table (max_len x dim), not a parameter.
Tensor sinusoidal_positions(int max_len, int dim);

// Gradient clipping by global L2 norm; returns the pre-clip norm.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace vqmpt
