#include <doctest.h>

#include <cmath>

#include "vqmpt/optim.hpp"

using namespace vqmpt;

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    std::vector<Tensor> params{p};
    AdamState state = AdamState::for_params(params);
    std::vector<double> before = p.data();
    adam_step(params, state, 0.01);
    CHECK(p.data() == before);
    CHECK(state.step == 1);
}

TEST_CASE("first adam step moves by -lr * sign(grad) up to epsilon effects") {
    Tensor p = Tensor::from_data({3}, {0.0, 0.0, 0.0}, true);
    std::vector<Tensor> params{p};
    AdamState state = AdamState::for_params(params);
    p.node()->grad = {0.5, -2.0, 1e-3};
    adam_step(params, state, 0.01);
    // mhat = g, vhat = g^2, update = lr * g / (|g| + eps) ~= lr * sign(g)
    CHECK(p.at(0) == doctest::Approx(-0.01).epsilon(1e-5));
    CHECK(p.at(1) == doctest::Approx(0.01).epsilon(1e-5));
    CHECK(p.at(2) == doctest::Approx(-0.01).epsilon(1e-3));
}

TEST_CASE("adam is deterministic") {
    auto run = [] {
        Tensor p = Tensor::from_data({2}, {0.3, -0.7}, true);
        std::vector<Tensor> params{p};
        AdamState state = AdamState::for_params(params);
        for (int i = 0; i < 5; ++i) {
            p.node()->grad = {0.1 * (i + 1), -0.2};
            adam_step(params, state, 0.05);
        }
        return p.data();
    };
    CHECK(run() == run());  // bit-identical
}

TEST_CASE("adam validates hyperparameters") {
    Tensor p = Tensor::from_data({1}, {0.0}, true);
    CHECK_THROWS_AS(AdamState::for_params({p}, 1.0, 0.98), NumericDomainError);
    CHECK_THROWS_AS(AdamState::for_params({p}, 0.9, 0.98, 0.0), NumericDomainError);
}

TEST_CASE("warmup schedule closed-form values") {
    LRSchedule s(64, 400);
    CHECK(lr_at(s, 400) == doctest::Approx(0.00625));
    CHECK(lr_at(s, 1) == doctest::Approx(std::pow(64.0, -0.5) * std::pow(400.0, -1.5)));
    CHECK_THROWS_AS(lr_at(s, 0), NumericDomainError);
}

TEST_CASE("warmup peak is the global maximum") {
    LRSchedule s(32, 200);
    double peak = lr_at(s, 200);
    for (std::int64_t step : {1, 10, 50, 150, 199, 201, 300, 1000, 100000}) {
        CHECK(lr_at(s, step) <= peak);
        CHECK(lr_at(s, step) > 0.0);
    }
    // increasing before warmup, decreasing after
    for (int step = 2; step <= 200; ++step) CHECK(lr_at(s, step) >= lr_at(s, step - 1));
    for (int step = 201; step < 400; ++step) CHECK(lr_at(s, step) <= lr_at(s, step - 1));
}
