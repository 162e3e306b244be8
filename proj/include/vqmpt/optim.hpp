#pragma once

#include <cstdint>
#include <vector>

#include "vqmpt/tensor.hpp"

namespace vqmpt {

// Bias-corrected Adam moments for a fixed parameter list. Defaults follow
// the training setup used throughout this project.
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m, v;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-9;

    static AdamState for_params(const std::vector<Tensor>& params, double beta1 = 0.9,
                                double beta2 = 0.98, double epsilon = 1e-9);
};

// One Adam update from the gradients currently stored on the parameters.
// Deterministic: identical inputs produce bit-identical outputs.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

// Inverse-square-root warmup schedule:
//   lr(step) = d^-0.5 * min(step^-0.5, step * warmup^-1.5)
// increasing up to `warmup_steps` and decaying afterwards.
struct LRSchedule {
    int model_dim;
    int warmup_steps;
    LRSchedule(int model_dim, int warmup_steps);
};

double lr_at(const LRSchedule& schedule, std::int64_t step);

}  // namespace vqmpt
