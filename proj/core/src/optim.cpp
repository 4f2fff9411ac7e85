#include "densetrf/optim.h"

#include <cmath>
#include <unordered_set>

#include "densetrf/errors.h"

namespace dtrf {

void AdamW::step(ParameterSet& params,
                 const std::function<const Tensor*(const std::string&)>& grads,
                 const std::vector<std::string>* trainable) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));

    std::unordered_set<std::string> allow;
    if (trainable) allow.insert(trainable->begin(), trainable->end());

    for (const auto& name : params.names()) {
        if (trainable && !allow.count(name)) continue;
        const Tensor* g = grads(name);
        if (!g) continue;
        Tensor& p = params.at(name);
        if (!p.same_shape(*g)) throw ShapeError("AdamW: gradient shape mismatch for " + name);
        if (!m_.has(name)) {
            m_.add(name, Tensor(p.shape()));
            v_.add(name, Tensor(p.shape()));
        }
        Tensor& m = m_.at(name);
        Tensor& v = v_.at(name);
        for (int64_t i = 0; i < p.size(); ++i) {
            double gi = (*g)[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            if (cfg_.weight_decay > 0.0) p[i] -= cfg_.lr * cfg_.weight_decay * p[i];
        }
    }
}

void AdamW::reset() {
    m_ = ParameterSet();
    v_ = ParameterSet();
    t_ = 0;
}

} // namespace dtrf
