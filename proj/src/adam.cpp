#include "glim/adam.hpp"

#include <cmath>

namespace glim {

void Adam::step(ParamMap& params, const std::map<std::string, Array>& grads) {
    ++t_;
    const Real bc1 = Real(1) - std::pow(beta1_, static_cast<Real>(t_));
    const Real bc2 = Real(1) - std::pow(beta2_, static_cast<Real>(t_));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;  // parameter not on this loss path
        const Array& g = git->second;
        if (!g.same_shape(p))
            throw DimensionError("adam: gradient shape mismatch for " + name);
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            mit = m_.emplace(name, Array(p.shape())).first;
            v_.emplace(name, Array(p.shape()));
        }
        Array& m = mit->second;
        Array& v = v_[name];
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (Real(1) - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (Real(1) - beta2_) * g[i] * g[i];
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace glim
