#include "mergerl/optim.hpp"

#include <cmath>

namespace mergerl {

void AdamW::step(const std::vector<Parameter*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
        for (int i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad.data[i];
            p->m.data[i] = beta1 * p->m.data[i] + (1.0 - beta1) * g;
            p->v.data[i] = beta2 * p->v.data[i] + (1.0 - beta2) * g * g;
            const double mhat = p->m.data[i] / bc1;
            const double vhat = p->v.data[i] / bc2;
            p->value.data[i] -=
                lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p->value.data[i]);
        }
    }
}

void AdamW::zero_grad(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

}  // namespace mergerl
