#pragma once

#include <vector>

#include "mergerl/tensor.hpp"

namespace mergerl {

// Adaptive-moment optimizer with decoupled weight decay and bias correction.
class AdamW {
public:
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    AdamW() = default;
    explicit AdamW(double learning_rate, double wd = 0.01) : lr(learning_rate), weight_decay(wd) {}

    void step(const std::vector<Parameter*>& params);
    void zero_grad(const std::vector<Parameter*>& params);
    long long steps_taken() const { return t_; }

private:
    long long t_ = 0;
};

}  // namespace mergerl
