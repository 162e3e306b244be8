#pragma once

#include <vector>

#include "vqmpt/rng.hpp"
#include "vqmpt/tensor.hpp"

namespace vqmpt {

// Root-free factorization of a covariance: Sigma = L diag(D) L^T with L unit
// lower triangular and D strictly positive, so Sigma is positive definite by
// construction.
struct GaussianParams {
    std::vector<double> mu;    // n
    std::vector<double> lower; // n x n row-major, unit diagonal
    std::vector<double> diag;  // n, all > 0

    int dim() const { return static_cast<int>(mu.size()); }
    std::vector<double> covariance() const;  // dense Sigma, for callers that need it
};

// Expands packed strictly-lower entries (row-major: (1,0),(2,0),(2,1),...)
// into a unit-lower-triangular n x n matrix.
std::vector<double> unit_lower_from_packed(const std::vector<double>& packed, int n);

// Negative log density of N(mu, L D L^T) at q, computed through the factors:
// log det = sum(log D_i), and the quadratic form uses two triangular solves.
// Throws NumericDomainError when any D_i <= 0.
double gaussian_nll(const std::vector<double>& q, const GaussianParams& p);

double gaussian_density(const std::vector<double>& q, const GaussianParams& p);

// Autodiff NLL over a fixed set of evaluation points. `points` is an m x n
// constant; mu (n), lvec (n(n-1)/2 packed strictly-lower), dvec (n, positive)
// are graph tensors. Returns the scalar sum (or mean) of the m NLL values.
Tensor gaussian_nll_fused(const std::vector<double>& points, int m, int n, const Tensor& mu,
                          const Tensor& lvec, const Tensor& dvec, bool take_mean);

// Uniform-weight Gaussian mixture used as the planner sampling distribution.
class Gmm {
public:
    explicit Gmm(std::vector<GaussianParams> components);

    double density(const std::vector<double>& q) const;
    std::vector<double> sample(Pcg32& rng) const;

    const std::vector<GaussianParams>& components() const { return components_; }
    std::vector<double> mean() const;

private:
    std::vector<GaussianParams> components_;
};

}  // namespace vqmpt
