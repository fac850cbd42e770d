#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <string>
#include <vector>

#include "glim/array.hpp"

namespace glim {

// Handle to a node on a Tape.
struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Thread-local recycler for node storage. Graphs are rebuilt every
// forward pass with mostly identical shapes, so buffers are reused across
// windows instead of round-tripping through the allocator.
class BufferPool {
public:
    static BufferPool& local();

    RealVec take(size_t n) {
        auto it = free_.find(n);
        if (it != free_.end() && !it->second.empty()) {
            RealVec v = std::move(it->second.back());
            it->second.pop_back();
            return v;
        }
        RealVec v;
        v.resize(n);
        return v;
    }
    void give(RealVec&& v) {
        if (v.empty()) return;
        auto& bucket = free_[v.size()];
        if (bucket.size() < 256) bucket.push_back(std::move(v));
    }

    Array take_uninit(const std::vector<int>& shape) {
        return Array(shape, take(Array::numel(shape)));
    }
    Array take_zeroed(const std::vector<int>& shape) {
        Array a = take_uninit(shape);
        a.fill(Real(0));
        return a;
    }

private:
    std::unordered_map<size_t, std::vector<RealVec>> free_;
};

// Reverse-mode tape, rebuilt per forward pass. A tape is confined to one
// thread; Arrays may move freely between threads. Double backward is not
// supported: backward() may be called once per tape and errors on reuse.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape() { reset(); }

    Var leaf(Array value, bool requires_grad = false);

    const Array& val(Var v) const { return nodes_[v.i].value; }
    // Gradient of the last backward() with respect to node v. Zero-filled
    // for reachable-but-independent nodes; error if v never required grad.
    const Array& grad(Var v) const;

    // Seeds d(loss)/d(loss) = 1 and runs the chain rule in reverse
    // topological order. loss must be scalar.
    void backward(Var loss);

    void reset();
    size_t size() const { return nodes_.size(); }
    bool backward_done() const { return backward_done_; }

    // While enabled (per thread), any op producing a non-finite value
    // throws NumericError naming the op.
    static void set_validation(bool on);
    static bool validation_enabled();

    // internal: used by op implementations
    Var make(Array value, bool requires_grad, const char* op_name);
    void set_back(Var v, std::function<void(Tape&)> back) {
        nodes_[v.i].back = std::move(back);
    }
    Array& grad_ref(Var v) { return nodes_[v.i].grad; }
    bool needs_grad(Var v) const { return nodes_[v.i].requires_grad; }

private:
    struct Node {
        Array value;
        Array grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };
    // deque: references to node values stay valid while the graph grows
    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

// --- tape ops -------------------------------------------------------------

// x:[Ci,H,W] w:[Co,Ci,K,K] b:[Co] (pass Var{} for no bias) -> [Co,Ho,Wo]
Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad);
// x:[A,H,W] w:[A,B,K,K] b:[B] -> [B,Ho,Wo]; adjoint of conv2d with same w.
Var deconv2d(Tape& t, Var x, Var w, Var b, int stride, int pad);

Var leaky_relu(Tape& t, Var x, Real slope = Real(0.1));
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, Real c);
Var sub_const(Tape& t, Var x, const Array& c);
Var mul_const(Tape& t, Var x, const Array& c);
Var exp_op(Tape& t, Var x);
Var square(Tape& t, Var x);
Var minimum(Tape& t, Var a, Var b);
Var clamp(Tape& t, Var x, Real lo, Real hi);

Var concat_ch(Tape& t, Var a, Var b);          // [Ca,H,W]+[Cb,H,W] -> [Ca+Cb,H,W]
Var flatten(Tape& t, Var x);                   // -> [numel]
Var global_avg_pool(Tape& t, Var x);           // [C,H,W] -> [C]
Var linear(Tape& t, Var x, Var w, Var b);      // x:[N] w:[M,N] b:[M] -> [M]
Var log_softmax(Tape& t, Var x);               // [N] -> [N]
Var gather1(Tape& t, Var x, int index);        // [N] -> [1]
Var sum(Tape& t, Var x);                       // -> [1]
Var mean(Tape& t, Var x);                      // -> [1]
Var add_n(Tape& t, const std::vector<Var>& xs);

// Mean over masked entries of (pred - target)^2. mask is [1,H,W] or [H,W]
// with {0,1} values, broadcast over pred's channels. This single routine
// is the shared definition behind both the reconstruction losses and the
// surprise statistic.
Var masked_sq_err(Tape& t, Var pred, const Array& target, const Array& mask);
// Mean of (x - target)^2 over all entries.
Var sq_err(Tape& t, Var x, const Array& target);
// Mean |x| over masked entries (all entries when mask is null).
Var abs_mean(Tape& t, Var x, const Array* mask = nullptr);

// Mask-aware mean squared error on raw arrays (no tape); identical
// arithmetic to the masked_sq_err op.
Real masked_sq_err_value(const Array& pred, const Array& target, const Array& mask);

// Masked blend used by the memory write: out = mask*a + (1-mask)*b,
// bit-exact copy of b wherever mask is 0.
Var masked_blend(Tape& t, Var a, Var b, const Array& mask);

}  // namespace glim
