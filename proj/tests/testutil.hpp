#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "actseq/core.hpp"
#include "actseq/rng.hpp"
#include "actseq/tensor.hpp"

namespace testutil {

using actseq::Rng;
using actseq::ad::Tensor;

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(actseq::ad::shape_size(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::leaf(std::move(shape), std::move(v), requires_grad);
}

// Central-difference gradient check. Rebuilds the loss graph through
// `make_loss` after every perturbation, so the closure must read the current
// parameter values each time. Returns the worst error normalized by the
// allowed slack max(rel_tol * magnitude, abs_floor); <= 1 passes.
inline double gradcheck(std::vector<Tensor>& params, const std::function<Tensor()>& make_loss,
                        double step = 1e-4, double rel_tol = 1e-4, double abs_floor = 1e-7) {
    Tensor loss = make_loss();
    actseq::ad::backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params)
        analytic.push_back(p.grad().size() == p.size() ? p.grad()
                                                       : std::vector<double>(p.size(), 0.0));
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& values = params[i].mutable_value();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double orig = values[j];
            values[j] = orig + step;
            const double up = make_loss().item();
            values[j] = orig - step;
            const double down = make_loss().item();
            values[j] = orig;
            const double fd = (up - down) / (2.0 * step);
            const double an = analytic[i][j];
            const double slack = std::max(rel_tol * std::max(std::abs(fd), std::abs(an)), abs_floor);
            worst = std::max(worst, std::abs(fd - an) / slack);
        }
    }
    return worst;
}

inline actseq::FrameLabeling random_labeling(Rng& rng, int max_len, int num_classes,
                                             double fps = 10.0) {
    const int len = rng.index(static_cast<std::size_t>(max_len + 1));
    std::vector<int> labels(static_cast<std::size_t>(len));
    for (auto& l : labels) l = rng.index(static_cast<std::size_t>(num_classes));
    return actseq::FrameLabeling(std::move(labels), fps);
}

inline actseq::ActionSequence random_sequence(Rng& rng, int max_len, int num_classes) {
    const int len = rng.index(static_cast<std::size_t>(max_len + 1));
    std::vector<int> items(static_cast<std::size_t>(len));
    for (auto& v : items) v = rng.index(static_cast<std::size_t>(num_classes));
    return actseq::ActionSequence(std::move(items), /*canonical=*/false);
}

}  // namespace testutil
