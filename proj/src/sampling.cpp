#include "glim/sampling.hpp"

#include <cmath>

#include "glim/common.hpp"

namespace glim {

Array softmax_flat(const Array& logits) {
    if (logits.empty()) throw ContractError("softmax_flat: empty input");
    Real mx = logits[0];
    for (size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    if (!std::isfinite(mx)) throw NumericError("softmax_flat: non-finite logits");
    Array p(logits.shape());
    Real z = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (size_t i = 0; i < p.size(); ++i) p[i] /= z;
    return p;
}

int categorical_sample_index(const Array& probs, rng::Engine& gen) {
    const Real r = static_cast<Real>(rng::uniform_real(gen));
    Real c = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        c += probs[i];
        if (r < c) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;  // guard against rounding
}

std::pair<int, int> categorical_sample(const Array& probs, rng::Engine& gen) {
    if (probs.ndim() != 2) throw ContractError("categorical_sample expects [H,W]");
    const int idx = categorical_sample_index(probs, gen);
    return {idx / probs.dim(1), idx % probs.dim(1)};
}

}  // namespace glim
