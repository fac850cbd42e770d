#pragma once

#include "glim/nn.hpp"

namespace glim {

// Adam with bias correction. Deterministic given inputs; the step counter
// advances by exactly one per update.
class Adam {
public:
    explicit Adam(Real lr = Real(1e-3), Real beta1 = Real(0.9),
                  Real beta2 = Real(0.999), Real epsilon = Real(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(ParamMap& params, const std::map<std::string, Array>& grads);

    int steps_taken() const { return t_; }
    Real learning_rate() const { return lr_; }
    void set_learning_rate(Real lr) { lr_ = lr; }

    // Moments are exposed for checkpointing; restoring them resumes the
    // optimizer exactly.
    ParamMap& first_moments() { return m_; }
    ParamMap& second_moments() { return v_; }
    void set_steps_taken(int t) { t_ = t; }

private:
    Real lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    ParamMap m_, v_;
};

}  // namespace glim
