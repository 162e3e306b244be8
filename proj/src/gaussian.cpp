#include "vqmpt/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace vqmpt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Forward substitution for unit-lower L: y solves L y = r.
void solve_unit_lower(const double* L, int n, const double* r, double* y) {
    for (int i = 0; i < n; ++i) {
        double acc = r[i];
        for (int j = 0; j < i; ++j) acc -= L[i * n + j] * y[j];
        y[i] = acc;
    }
}

// Back substitution for L^T: s solves L^T s = w.
void solve_unit_lower_t(const double* L, int n, const double* w, double* s) {
    for (int i = n - 1; i >= 0; --i) {
        double acc = w[i];
        for (int j = i + 1; j < n; ++j) acc -= L[j * n + i] * s[j];
        s[i] = acc;
    }
}

void check_diag(const double* d, int n) {
    for (int i = 0; i < n; ++i)
        if (!(d[i] > 0.0))
            throw NumericDomainError("gaussian: diagonal entry " + std::to_string(i) +
                                     " is not positive (" + std::to_string(d[i]) + ")");
}

}  // namespace

std::vector<double> unit_lower_from_packed(const std::vector<double>& packed, int n) {
    std::size_t need = static_cast<std::size_t>(n) * (n - 1) / 2;
    if (packed.size() != need)
        throw DimensionError("unit_lower_from_packed: " + std::to_string(packed.size()) +
                             " entries for n=" + std::to_string(n));
    std::vector<double> L(static_cast<std::size_t>(n) * n, 0.0);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) L[static_cast<std::size_t>(i) * n + j] = packed[k++];
        L[static_cast<std::size_t>(i) * n + i] = 1.0;
    }
    return L;
}

std::vector<double> GaussianParams::covariance() const {
    int n = dim();
    // Sigma = L D L^T
    std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k <= std::min(i, j); ++k)
                acc += lower[i * n + k] * diag[k] * lower[j * n + k];
            out[static_cast<std::size_t>(i) * n + j] = acc;
        }
    return out;
}

double gaussian_nll(const std::vector<double>& q, const GaussianParams& p) {
    int n = p.dim();
    if (static_cast<int>(q.size()) != n)
        throw DimensionError("gaussian_nll: point dim " + std::to_string(q.size()) + " vs " +
                             std::to_string(n));
    check_diag(p.diag.data(), n);
    std::vector<double> r(n), y(n);
    for (int i = 0; i < n; ++i) r[i] = q[i] - p.mu[i];
    solve_unit_lower(p.lower.data(), n, r.data(), y.data());
    double quad = 0.0, logdet = 0.0;
    for (int i = 0; i < n; ++i) {
        quad += y[i] * y[i] / p.diag[i];
        logdet += std::log(p.diag[i]);
    }
    return 0.5 * (n * kLog2Pi + logdet + quad);
}

double gaussian_density(const std::vector<double>& q, const GaussianParams& p) {
    return std::exp(-gaussian_nll(q, p));
}

Tensor gaussian_nll_fused(const std::vector<double>& points, int m, int n, const Tensor& mu,
                          const Tensor& lvec, const Tensor& dvec, bool take_mean) {
    if (static_cast<int>(points.size()) != m * n)
        throw DimensionError("gaussian_nll_fused: point buffer size " +
                             std::to_string(points.size()) + " vs " + std::to_string(m) + "x" +
                             std::to_string(n));
    int k = n * (n - 1) / 2;
    if (mu.size() != n || dvec.size() != n || lvec.size() != k)
        throw DimensionError("gaussian_nll_fused: parameter shapes " + mu.shape_str() + "/" +
                             lvec.shape_str() + "/" + dvec.shape_str() + " for dim " +
                             std::to_string(n));
    check_diag(dvec.data().data(), n);

    std::vector<double> L = unit_lower_from_packed(lvec.data(), n);
    double w = take_mean ? 1.0 / static_cast<double>(m) : 1.0;

    double acc = 0.0;
    std::vector<double> r(n), y(n);
    for (int t = 0; t < m; ++t) {
        for (int i = 0; i < n; ++i) r[i] = points[t * n + i] - mu.at(i);
        solve_unit_lower(L.data(), n, r.data(), y.data());
        double quad = 0.0;
        for (int i = 0; i < n; ++i) quad += y[i] * y[i] / dvec.at(i);
        acc += 0.5 * quad;
    }
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(dvec.at(i));
    double value = w * (acc + m * 0.5 * (n * kLog2Pi + logdet));

    auto node = std::make_shared<detail::TensorNode>();
    node->shape = {1};
    node->data = {value};
    bool rg = mu.requires_grad() || lvec.requires_grad() || dvec.requires_grad();
    node->requires_grad = rg;
    if (rg) {
        node->grad = {0.0};
        node->parents = {mu.handle(), lvec.handle(), dvec.handle()};
        node->backward_fn = [points, m, n, w](detail::TensorNode& self) {
            auto& pmu = *self.parents[0];
            auto& plv = *self.parents[1];
            auto& pdv = *self.parents[2];
            double go = self.grad[0] * w;
            std::vector<double> L = unit_lower_from_packed(plv.data, n);
            std::vector<double> r(n), y(n), wv(n), s(n);
            for (int t = 0; t < m; ++t) {
                for (int i = 0; i < n; ++i) r[i] = points[t * n + i] - pmu.data[i];
                solve_unit_lower(L.data(), n, r.data(), y.data());
                for (int i = 0; i < n; ++i) wv[i] = y[i] / pdv.data[i];
                solve_unit_lower_t(L.data(), n, wv.data(), s.data());
                if (pmu.requires_grad)
                    for (int i = 0; i < n; ++i) pmu.grad[i] -= go * s[i];
                if (plv.requires_grad) {
                    std::size_t kk = 0;
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < i; ++j) plv.grad[kk++] -= go * s[i] * y[j];
                }
                if (pdv.requires_grad)
                    for (int i = 0; i < n; ++i)
                        pdv.grad[i] += go * 0.5 * (1.0 / pdv.data[i] - y[i] * y[i] / (pdv.data[i] * pdv.data[i]));
            }
        };
    }
    return Tensor(node);
}

Gmm::Gmm(std::vector<GaussianParams> components) : components_(std::move(components)) {
    if (components_.empty())
        throw NumericDomainError("gmm: at least one component required");
}

double Gmm::density(const std::vector<double>& q) const {
    double acc = 0.0;
    for (const auto& c : components_) acc += gaussian_density(q, c);
    return acc / static_cast<double>(components_.size());
}

std::vector<double> Gmm::sample(Pcg32& rng) const {
    std::size_t pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::uint64_t>(components_.size()) - 1));
    const auto& c = components_[pick];
    int n = c.dim();
    std::vector<double> xi(n), out(n);
    for (int i = 0; i < n; ++i) xi[i] = std::sqrt(c.diag[i]) * rng.gaussian();
    for (int i = 0; i < n; ++i) {
        double acc = xi[i];  // unit diagonal of L
        for (int j = 0; j < i; ++j) acc += c.lower[i * n + j] * xi[j];
        out[i] = c.mu[i] + acc;
    }
    return out;
}

std::vector<double> Gmm::mean() const {
    int n = components_[0].dim();
    std::vector<double> m(n, 0.0);
    for (const auto& c : components_)
        for (int i = 0; i < n; ++i) m[i] += c.mu[i];
    for (auto& v : m) v /= static_cast<double>(components_.size());
    return m;
}

}  // namespace vqmpt
