#include "corridor_twin/autodiff/adam.hpp"

#include "corridor_twin/errors.hpp"

#include <cmath>

namespace ctwin::ad {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config)
{
    if (!(config_.learning_rate > 0.0))
        throw ContractError("adam: learning rate must be positive");
    if (!(config_.beta1 > 0.0 && config_.beta1 < 1.0 && config_.beta2 > 0.0 && config_.beta2 < 1.0))
        throw ContractError("adam: beta1 and beta2 must lie in (0, 1)");
    if (!(config_.epsilon > 0.0))
        throw ContractError("adam: epsilon must be positive");
    for (auto* p : params_) {
        if (!p)
            throw ContractError("adam: null parameter");
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
    }
}

void Adam::step()
{
    for (auto* p : params_)
        if (!p->has_grad)
            throw ContractError("adam: parameter '" + p->name + "' has no gradient");

    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        if (p.grad.shape() != p.value.shape())
            throw ContractError("adam: gradient shape mismatch for '" + p.name + "'");
        auto m = first_[i].data();
        auto v = second_[i].data();
        auto g = p.grad.data();
        auto w = p.value.data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            w[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
        p.zero_grad();
    }
}

}  // namespace ctwin::ad
