#pragma once

#include "corridor_twin/autodiff/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ctwin::ad {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed parameter set. `step` consumes and
/// clears the accumulated gradients.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig config);

    void step();

    std::size_t step_count() const noexcept { return steps_; }
    const AdamConfig& config() const noexcept { return config_; }
    std::span<Parameter* const> parameters() const noexcept { return params_; }
    const Tensor& first_moment(std::size_t i) const { return first_.at(i); }
    const Tensor& second_moment(std::size_t i) const { return second_.at(i); }

private:
    std::vector<Parameter*> params_;
    AdamConfig config_;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
    std::size_t steps_ = 0;
};

}  // namespace ctwin::ad
