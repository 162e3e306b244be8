#include "vqmpt/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace vqmpt {

AdamState AdamState::for_params(const std::vector<Tensor>& params, double beta1, double beta2,
                                double epsilon) {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw NumericDomainError("adam: betas must lie in (0,1)");
    if (!(epsilon > 0.0)) throw NumericDomainError("adam: epsilon must be positive");
    AdamState s;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
    if (params.size() != state.m.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs state of " +
                             std::to_string(state.m.size()));
    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& data = params[t].data();
        const auto& grad = params[t].grad();
        auto& m = state.m[t];
        auto& v = state.v[t];
        if (m.size() != data.size())
            throw DimensionError("adam_step: state shape drifted for parameter " + std::to_string(t));
        for (std::size_t i = 0; i < data.size(); ++i) {
            double g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            double mh = m[i] / bc1;
            double vh = v[i] / bc2;
            data[i] -= lr * mh / (std::sqrt(vh) + state.epsilon);
        }
    }
}

LRSchedule::LRSchedule(int model_dim, int warmup_steps)
    : model_dim(model_dim), warmup_steps(warmup_steps) {
    if (model_dim <= 0 || warmup_steps <= 0)
        throw NumericDomainError("lr schedule: model_dim and warmup_steps must be positive");
}

double lr_at(const LRSchedule& schedule, std::int64_t step) {
    if (step < 1) throw NumericDomainError("lr_at: step must be >= 1");
    double s = static_cast<double>(step);
    double w = static_cast<double>(schedule.warmup_steps);
    return std::pow(static_cast<double>(schedule.model_dim), -0.5) *
           std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

}  // namespace vqmpt
