#include "glim/nn.hpp"

#include <cmath>
#include <cstring>

#include "glim/kernels.hpp"

namespace glim {

TapedParams lift(Tape& t, const ParamMap& params) {
    TapedParams tp;
    for (const auto& [name, value] : params)
        tp.vars.emplace(name, t.leaf(value, /*requires_grad=*/true));
    return tp;
}

std::map<std::string, Array> grads_of(const Tape& t, const TapedParams& tp) {
    std::map<std::string, Array> out;
    for (const auto& [name, v] : tp.vars) out.emplace(name, t.grad(v));
    return out;
}

void he_uniform(Array& a, int fan_in, rng::Engine& gen) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (size_t i = 0; i < a.size(); ++i)
        a[i] = static_cast<Real>(rng::uniform_real(gen, -bound, bound));
}

void Conv2d::init(ParamMap& pm, rng::Engine& gen, bool zero_weights) const {
    Array w({out, in, k, k});
    if (!zero_weights) he_uniform(w, in * k * k, gen);
    pm[name + ".w"] = std::move(w);
    if (bias) pm[name + ".b"] = Array({out});
}

Var Conv2d::operator()(Tape& t, const TapedParams& tp, Var x) const {
    return conv2d(t, x, tp(name + ".w"), bias ? tp(name + ".b") : Var{}, stride, pad);
}

Array Conv2d::infer(const ParamMap& pm, const Array& x) const {
    const Array& w = pm.at(name + ".w");
    auto d = kernels::ConvDims::conv(x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2),
                                     stride, pad);
    Array y({d.co, d.ho, d.wo});
    kernels::conv2d_forward(x.data(), w.data(),
                            bias ? pm.at(name + ".b").data() : nullptr, y.data(), d);
    return y;
}

void Deconv2d::init(ParamMap& pm, rng::Engine& gen, bool zero_weights) const {
    Array w({in, out, k, k});
    if (!zero_weights) he_uniform(w, in * k * k, gen);
    pm[name + ".w"] = std::move(w);
    if (bias) pm[name + ".b"] = Array({out});
}

Var Deconv2d::operator()(Tape& t, const TapedParams& tp, Var x) const {
    return deconv2d(t, x, tp(name + ".w"), bias ? tp(name + ".b") : Var{}, stride, pad);
}

Array Deconv2d::infer(const ParamMap& pm, const Array& x) const {
    const Array& w = pm.at(name + ".w");
    auto d = kernels::ConvDims::deconv(x.dim(0), x.dim(1), x.dim(2), w.dim(1),
                                       w.dim(2), stride, pad);
    Array y({d.co, d.ho, d.wo});
    kernels::deconv2d_forward(x.data(), w.data(),
                              bias ? pm.at(name + ".b").data() : nullptr, y.data(), d);
    return y;
}

void LinearLayer::init(ParamMap& pm, rng::Engine& gen, bool zero_weights) const {
    Array w({out, in});
    if (!zero_weights) he_uniform(w, in, gen);
    pm[name + ".w"] = std::move(w);
    if (bias) pm[name + ".b"] = Array({out});
}

Var LinearLayer::operator()(Tape& t, const TapedParams& tp, Var x) const {
    return linear(t, x, tp(name + ".w"), bias ? tp(name + ".b") : Var{});
}

Array LinearLayer::infer(const ParamMap& pm, const Array& x) const {
    const Array& w = pm.at(name + ".w");
    Array y({out});
    for (int i = 0; i < out; ++i) {
        Real acc = bias ? pm.at(name + ".b")[static_cast<size_t>(i)] : Real(0);
        const Real* wr = w.data() + static_cast<size_t>(i) * in;
        for (int j = 0; j < in; ++j) acc += wr[j] * x[static_cast<size_t>(j)];
        y[static_cast<size_t>(i)] = acc;
    }
    return y;
}

Array leaky_relu_infer(const Array& x, Real slope) {
    Array y(x.shape());
    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] >= 0 ? x[i] : slope * x[i];
    return y;
}

Array concat_ch_infer(const Array& a, const Array& b) {
    Array y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::memcpy(y.data(), a.data(), a.size() * sizeof(Real));
    std::memcpy(y.data() + a.size(), b.data(), b.size() * sizeof(Real));
    return y;
}

Array global_avg_pool_infer(const Array& x) {
    const int c = x.dim(0);
    const size_t plane = static_cast<size_t>(x.dim(1)) * x.dim(2);
    Array y({c});
    for (int i = 0; i < c; ++i) {
        Real acc = 0;
        const Real* p = x.data() + i * plane;
        for (size_t j = 0; j < plane; ++j) acc += p[j];
        y[static_cast<size_t>(i)] = acc / static_cast<Real>(plane);
    }
    return y;
}

Array log_softmax_infer(const Array& x) {
    Real mx = x[0];
    for (size_t i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
    Real z = 0;
    for (size_t i = 0; i < x.size(); ++i) z += std::exp(x[i] - mx);
    const Real lz = std::log(z) + mx;
    Array y(x.shape());
    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] - lz;
    return y;
}

Array action_planes(int action, int n_actions, int h, int w) {
    Array a({n_actions, h, w});
    if (action < 0 || action >= n_actions)
        throw ContractError("action index out of range");
    Real* p = a.data() + static_cast<size_t>(action) * h * w;
    for (int i = 0; i < h * w; ++i) p[i] = Real(1);
    return a;
}

uint64_t content_hash(const ParamMap& pm) {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, a] : pm) {
        mix(name.data(), name.size());
        mix(a.data(), a.size() * sizeof(Real));
    }
    return h;
}

}  // namespace glim
