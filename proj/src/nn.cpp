#include "vqmpt/nn.hpp"

#include <cmath>

namespace vqmpt {

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionMask* mask, Tensor* weights_out) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw DimensionError("attention: rank-2 operands required, got " + q.shape_str() + ", " +
                             k.shape_str() + ", " + v.shape_str());
    int n_q = q.shape()[0], d_q = q.shape()[1];
    int n_k = k.shape()[0];
    if (k.shape()[1] != d_q)
        throw DimensionError("attention: query dim " + q.shape_str() + " vs key dim " +
                             k.shape_str());
    if (v.shape()[0] != n_k)
        throw DimensionError("attention: key rows " + k.shape_str() + " vs value rows " +
                             v.shape_str());
    int d_v = v.shape()[1];
    if (mask && (mask->n_q() != n_q || mask->n_k() != n_k))
        throw DimensionError("attention: mask " + std::to_string(mask->n_q()) + "x" +
                             std::to_string(mask->n_k()) + " vs scores " + std::to_string(n_q) +
                             "x" + std::to_string(n_k));

    Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d_v)));
    if (mask) {
        // -1e30 underflows to zero weight after the stabilized softmax.
        std::vector<double> bias(static_cast<std::size_t>(n_q) * n_k, 0.0);
        for (int i = 0; i < n_q; ++i)
            for (int j = 0; j < n_k; ++j)
                if (mask->is_blocked(i, j)) bias[static_cast<std::size_t>(i) * n_k + j] = -1e30;
        scores = add(scores, Tensor::from_data({n_q, n_k}, std::move(bias)));
    }
    Tensor weights = softmax(scores, 1);
    if (weights_out) *weights_out = weights;
    return matmul(weights, v);
}

Tensor xavier_uniform(int fan_in, int fan_out, Pcg32& rng) {
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> data(static_cast<std::size_t>(fan_in) * fan_out);
    for (auto& x : data) x = rng.uniform(-a, a);
    return Tensor::from_data({fan_in, fan_out}, std::move(data), true);
}

Tensor normal_init(const std::vector<int>& shape, double stddev, Pcg32& rng) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& x : data) x = stddev * rng.gaussian();
    return Tensor::from_data(shape, std::move(data), true);
}

Linear::Linear(int in, int out, Pcg32& rng, ParamSet& ps, const std::string& name) {
    w = ps.add(name + ".w", xavier_uniform(in, out, rng));
    b = ps.add(name + ".b", Tensor::zeros({out}, true));
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, w), b); }

MhaParams::MhaParams(int model_dim, int head_count, Pcg32& rng, ParamSet& ps,
                     const std::string& name)
    : heads(head_count) {
    if (heads < 1 || model_dim % heads != 0)
        throw DimensionError("multi_head_attention: model dim " + std::to_string(model_dim) +
                             " not divisible by " + std::to_string(heads) + " heads");
    wq = Linear(model_dim, model_dim, rng, ps, name + ".wq");
    wk = Linear(model_dim, model_dim, rng, ps, name + ".wk");
    wv = Linear(model_dim, model_dim, rng, ps, name + ".wv");
    wo = Linear(model_dim, model_dim, rng, ps, name + ".wo");
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaParams& p, const AttentionMask* mask) {
    int d = p.wq.w.shape()[0];
    if (q.shape()[1] != d || k.shape()[1] != d || v.shape()[1] != d)
        throw DimensionError("multi_head_attention: inputs " + q.shape_str() + "/" +
                             k.shape_str() + "/" + v.shape_str() + " vs model dim " +
                             std::to_string(d));
    if (d % p.heads != 0)
        throw DimensionError("multi_head_attention: model dim " + std::to_string(d) +
                             " not divisible by " + std::to_string(p.heads) + " heads");
    int dh = d / p.heads;
    Tensor pq = p.wq(q), pk = p.wk(k), pv = p.wv(v);
    std::vector<Tensor> head_outs;
    head_outs.reserve(p.heads);
    for (int h = 0; h < p.heads; ++h) {
        Tensor qh = slice_cols(pq, h * dh, dh);
        Tensor kh = slice_cols(pk, h * dh, dh);
        Tensor vh = slice_cols(pv, h * dh, dh);
        head_outs.push_back(attention(qh, kh, vh, mask));
    }
    Tensor pooled = p.heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return p.wo(pooled);
}

LayerNormParams::LayerNormParams(int dim, ParamSet& ps, const std::string& name) {
    gain = ps.add(name + ".gain", Tensor::full({dim}, 1.0, true));
    bias = ps.add(name + ".bias", Tensor::zeros({dim}, true));
}

PrenormBlock::PrenormBlock(int model_dim, int heads, int mlp_dim, Pcg32& rng, ParamSet& ps,
                           const std::string& name)
    : mha(model_dim, heads, rng, ps, name + ".attn"),
      ln_attn(model_dim, ps, name + ".ln_attn"),
      ln_mlp(model_dim, ps, name + ".ln_mlp"),
      mlp_in(model_dim, mlp_dim, rng, ps, name + ".mlp_in"),
      mlp_out(mlp_dim, model_dim, rng, ps, name + ".mlp_out") {}

Tensor PrenormBlock::operator()(const Tensor& x, const AttentionMask* mask) const {
    Tensor nx = ln_attn(x);
    Tensor h = add(x, multi_head_attention(nx, nx, nx, mha, mask));
    return add(h, mlp_out(gelu(mlp_in(ln_mlp(h)))));
}

Tensor PrenormBlock::cross(const Tensor& x, const Tensor& context) const {
    Tensor h = add(x, multi_head_attention(ln_attn(x), context, context, mha));
    return add(h, mlp_out(gelu(mlp_in(ln_mlp(h)))));
}

Tensor sinusoidal_positions(int max_len, int dim) {
    std::vector<double> data(static_cast<std::size_t>(max_len) * dim, 0.0);
    for (int pos = 0; pos < max_len; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
            data[static_cast<std::size_t>(pos) * dim + i] = std::sin(pos * rate);
            if (i + 1 < dim)
                data[static_cast<std::size_t>(pos) * dim + i + 1] = std::cos(pos * rate);
        }
    }
    return Tensor::from_data({max_len, dim}, std::move(data));
}

double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad()) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (const auto& p : params)
            for (auto& g : p.node()->grad) g *= s;
    }
    return norm;
}

}  // namespace vqmpt
