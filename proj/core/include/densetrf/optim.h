#pragma once

#include <functional>
#include <string>
#include <vector>

#include "densetrf/params.h"

namespace dtrf {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled
};

// Adam with decoupled weight decay. Moment buffers are created lazily per
// parameter name, so the key set is always a subset of the parameter names.
class AdamW {
  public:
    AdamW() = default;
    explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }

    // Applies one update. `grads(name)` returns the gradient tensor or nullptr
    // when the parameter received no gradient (then it is skipped entirely).
    // `trainable` optionally restricts the update to a subset of names.
    void step(ParameterSet& params,
              const std::function<const Tensor*(const std::string&)>& grads,
              const std::vector<std::string>* trainable = nullptr);

    // Drops all moment state (used after a parameter broadcast).
    void reset();

    int64_t steps_taken() const { return t_; }
    const ParameterSet& first_moments() const { return m_; }
    const ParameterSet& second_moments() const { return v_; }

  private:
    AdamConfig cfg_;
    ParameterSet m_;
    ParameterSet v_;
    int64_t t_ = 0;
};

} // namespace dtrf
