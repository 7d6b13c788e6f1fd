#pragma once

#include <cmath>
#include <vector>

#include "actseq/errors.hpp"
#include "actseq/tensor.hpp"

namespace actseq::optim {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // decoupled, applied directly to the weights
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;
};

// One Adam update with decoupled weight decay over a fixed parameter list.
// Parameters whose gradients were not populated by the last backward pass
// are treated as having zero gradient.
inline void adam_step(std::vector<ad::Tensor>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), 0.0);
            state.v[i].assign(params[i].size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam: state/parameter count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& values = params[i].mutable_value();
        if (state.m[i].size() != values.size()) throw ShapeError("adam: parameter shape changed");
        const auto& grad = params[i].grad();
        const bool has_grad = grad.size() == values.size();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double g = has_grad ? grad[j] : 0.0;
            state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * g;
            state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * g * g;
            const double mhat = state.m[i][j] / bc1;
            const double vhat = state.v[i][j] / bc2;
            values[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * values[j]);
        }
    }
}

}  // namespace actseq::optim
