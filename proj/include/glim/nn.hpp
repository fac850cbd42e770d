#pragma once

#include <map>
#include <string>

#include "glim/rng.hpp"
#include "glim/tape.hpp"

namespace glim {

// Named parameter storage. std::map keeps iteration order deterministic,
// which checkpointing and the optimizer rely on.
using ParamMap = std::map<std::string, Array>;

// Per-tape view of a ParamMap: every parameter lifted once as a
// requires_grad leaf.
struct TapedParams {
    std::map<std::string, Var> vars;

    Var operator()(const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end()) throw ContractError("unknown parameter: " + name);
        return it->second;
    }
};

TapedParams lift(Tape& t, const ParamMap& params);
// Collect d(loss)/d(param) after backward; untouched parameters come back
// as exact zeros.
std::map<std::string, Array> grads_of(const Tape& t, const TapedParams& tp);

// He-uniform fill: U(-b, b) with b = sqrt(6 / fan_in).
void he_uniform(Array& a, int fan_in, rng::Engine& gen);

struct Conv2d {
    std::string name;
    int in = 0, out = 0, k = 3, stride = 1, pad = 1;
    bool bias = true;

    // zero_weights: used for layers that must start as the identity map.
    void init(ParamMap& pm, rng::Engine& gen, bool zero_weights = false) const;
    Var operator()(Tape& t, const TapedParams& tp, Var x) const;
    Array infer(const ParamMap& pm, const Array& x) const;
};

struct Deconv2d {
    std::string name;
    int in = 0, out = 0, k = 4, stride = 2, pad = 1;
    bool bias = true;

    void init(ParamMap& pm, rng::Engine& gen, bool zero_weights = false) const;
    Var operator()(Tape& t, const TapedParams& tp, Var x) const;
    Array infer(const ParamMap& pm, const Array& x) const;
};

struct LinearLayer {
    std::string name;
    int in = 0, out = 0;
    bool bias = true;

    void init(ParamMap& pm, rng::Engine& gen, bool zero_weights = false) const;
    Var operator()(Tape& t, const TapedParams& tp, Var x) const;
    Array infer(const ParamMap& pm, const Array& x) const;
};

// Inference-path helpers mirroring the tape ops.
Array leaky_relu_infer(const Array& x, Real slope = Real(0.1));
Array concat_ch_infer(const Array& a, const Array& b);
Array global_avg_pool_infer(const Array& x);
Array log_softmax_infer(const Array& x);

// One-hot action broadcast as constant feature planes: [n, h, w] with the
// selected plane filled with ones.
Array action_planes(int action, int n_actions, int h, int w);

// FNV-1a over the byte content of all parameters, in name order.
uint64_t content_hash(const ParamMap& pm);

}  // namespace glim
