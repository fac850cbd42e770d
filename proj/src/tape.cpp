#include "glim/tape.hpp"

#include <algorithm>
#include <cmath>

#include "glim/kernels.hpp"

namespace glim {

BufferPool& BufferPool::local() {
    thread_local BufferPool pool;
    return pool;
}

namespace {
thread_local bool g_validate = false;

bool any_requires(const Tape& t, std::initializer_list<Var> vs) {
    for (Var v : vs)
        if (v.valid() && t.needs_grad(v)) return true;
    return false;
}

void accumulate(Array& dst, const Array& src) {
    Real* d = dst.data();
    const Real* s = src.data();
    for (size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void check_same_shape(const Array& a, const Array& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                             " vs " + b.shape_str());
}

}  // namespace

void Tape::set_validation(bool on) { g_validate = on; }
bool Tape::validation_enabled() { return g_validate; }

Var Tape::leaf(Array value, bool requires_grad) {
    return make(std::move(value), requires_grad, "leaf");
}

Var Tape::make(Array value, bool requires_grad, const char* op_name) {
    if (g_validate && !value.all_finite())
        throw NumericError(std::string("non-finite value produced by ") + op_name);
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = BufferPool::local().take_zeroed(n.value.shape());
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Array& Tape::grad(Var v) const {
    const Node& n = nodes_[v.i];
    if (!n.requires_grad)
        throw ContractError("grad requested for a node without requires_grad");
    return n.grad;
}

void Tape::backward(Var loss) {
    if (backward_done_) throw ContractError("backward called twice on the same tape");
    Node& ln = nodes_[loss.i];
    if (ln.value.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " +
                            ln.value.shape_str());
    if (!ln.requires_grad)
        throw ContractError("loss does not depend on any differentiable input");
    backward_done_ = true;
    ln.grad[0] = Real(1);
    for (int i = loss.i; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.back) n.back(*this);
    }
}

void Tape::reset() {
    BufferPool& pool = BufferPool::local();
    for (Node& n : nodes_) {
        pool.give(std::move(n.value.vec()));
        pool.give(std::move(n.grad.vec()));
    }
    nodes_.clear();
    backward_done_ = false;
}

// --- convolution ------------------------------------------------------------

Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
    const Array& xv = t.val(x);
    const Array& wv = t.val(w);
    if (xv.ndim() != 3 || wv.ndim() != 4)
        throw DimensionError("conv2d expects x:[C,H,W], w:[Co,Ci,K,K]");
    if (wv.dim(1) != xv.dim(0))
        throw DimensionError("conv2d: input has " + std::to_string(xv.dim(0)) +
                             " channels, kernel expects " + std::to_string(wv.dim(1)));
    if (wv.dim(2) != wv.dim(3)) throw DimensionError("conv2d: kernel must be square");
    auto d = kernels::ConvDims::conv(xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0),
                                     wv.dim(2), stride, pad);
    if (b.valid() && t.val(b).size() != static_cast<size_t>(d.co))
        throw DimensionError("conv2d: bias size does not match output channels");
    Array y = BufferPool::local().take_uninit({d.co, d.ho, d.wo});
    kernels::conv2d_forward(xv.data(), wv.data(), b.valid() ? t.val(b).data() : nullptr,
                            y.data(), d);
    Var out = t.make(std::move(y), any_requires(t, {x, w, b}), "conv2d");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, w, b, d](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            if (tp.needs_grad(x))
                kernels::conv2d_backward_input(gy.data(), tp.val(w).data(),
                                               tp.grad_ref(x).data(), d);
            if (tp.needs_grad(w))
                kernels::conv2d_backward_kernel(gy.data(), tp.val(x).data(),
                                                tp.grad_ref(w).data(), d);
            if (b.valid() && tp.needs_grad(b))
                kernels::conv2d_backward_bias(gy.data(), tp.grad_ref(b).data(), d);
        });
    return out;
}

Var deconv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
    const Array& xv = t.val(x);
    const Array& wv = t.val(w);
    if (xv.ndim() != 3 || wv.ndim() != 4)
        throw DimensionError("deconv2d expects x:[A,H,W], w:[A,B,K,K]");
    if (wv.dim(0) != xv.dim(0))
        throw DimensionError("deconv2d: input has " + std::to_string(xv.dim(0)) +
                             " channels, kernel expects " + std::to_string(wv.dim(0)));
    if (wv.dim(2) != wv.dim(3)) throw DimensionError("deconv2d: kernel must be square");
    auto d = kernels::ConvDims::deconv(xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(1),
                                       wv.dim(2), stride, pad);
    if (b.valid() && t.val(b).size() != static_cast<size_t>(d.co))
        throw DimensionError("deconv2d: bias size does not match output channels");
    Array y = BufferPool::local().take_uninit({d.co, d.ho, d.wo});
    kernels::deconv2d_forward(xv.data(), wv.data(), b.valid() ? t.val(b).data() : nullptr,
                              y.data(), d);
    Var out = t.make(std::move(y), any_requires(t, {x, w, b}), "deconv2d");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, w, b, d](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            if (tp.needs_grad(x))
                kernels::deconv2d_backward_input(gy.data(), tp.val(w).data(),
                                                 tp.grad_ref(x).data(), d);
            if (tp.needs_grad(w))
                kernels::deconv2d_backward_kernel(gy.data(), tp.val(x).data(),
                                                  tp.grad_ref(w).data(), d);
            if (b.valid() && tp.needs_grad(b))
                kernels::deconv2d_backward_bias(gy.data(), tp.grad_ref(b).data(), d);
        });
    return out;
}

// --- elementwise ------------------------------------------------------------

Var leaky_relu(Tape& t, Var x, Real slope) {
    const Array& xv = t.val(x);
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i)
        y[i] = xv[i] >= 0 ? xv[i] : slope * xv[i];
    Var out = t.make(std::move(y), any_requires(t, {x}), "leaky_relu");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, slope](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& xv = tp.val(x);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gy.size(); ++i)
                gx[i] += xv[i] >= 0 ? gy[i] : slope * gy[i];
        });
    return out;
}

Var add(Tape& t, Var a, Var b) {
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    check_same_shape(av, bv, "add");
    Array y = BufferPool::local().take_uninit(av.shape());
    for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
    Var out = t.make(std::move(y), any_requires(t, {a, b}), "add");
    if (t.needs_grad(out))
        t.set_back(out, [out, a, b](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            if (tp.needs_grad(a)) accumulate(tp.grad_ref(a), gy);
            if (tp.needs_grad(b)) accumulate(tp.grad_ref(b), gy);
        });
    return out;
}

Var sub(Tape& t, Var a, Var b) {
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    check_same_shape(av, bv, "sub");
    Array y = BufferPool::local().take_uninit(av.shape());
    for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] - bv[i];
    Var out = t.make(std::move(y), any_requires(t, {a, b}), "sub");
    if (t.needs_grad(out))
        t.set_back(out, [out, a, b](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            if (tp.needs_grad(a)) accumulate(tp.grad_ref(a), gy);
            if (tp.needs_grad(b)) {
                Array& gb = tp.grad_ref(b);
                for (size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
            }
        });
    return out;
}

Var mul(Tape& t, Var a, Var b) {
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    check_same_shape(av, bv, "mul");
    Array y = BufferPool::local().take_uninit(av.shape());
    for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
    Var out = t.make(std::move(y), any_requires(t, {a, b}), "mul");
    if (t.needs_grad(out))
        t.set_back(out, [out, a, b](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            if (tp.needs_grad(a)) {
                Array& ga = tp.grad_ref(a);
                const Array& bv = tp.val(b);
                for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
            }
            if (tp.needs_grad(b)) {
                Array& gb = tp.grad_ref(b);
                const Array& av = tp.val(a);
                for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
            }
        });
    return out;
}

Var scale(Tape& t, Var x, Real c) {
    const Array& xv = t.val(x);
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = c * xv[i];
    Var out = t.make(std::move(y), any_requires(t, {x}), "scale");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, c](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gy.size(); ++i) gx[i] += c * gy[i];
        });
    return out;
}

Var sub_const(Tape& t, Var x, const Array& c) {
    const Array& xv = t.val(x);
    check_same_shape(xv, c, "sub_const");
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] - c[i];
    Var out = t.make(std::move(y), any_requires(t, {x}), "sub_const");
    if (t.needs_grad(out))
        t.set_back(out, [out, x](Tape& tp) {
            accumulate(tp.grad_ref(x), tp.grad_ref(out));
        });
    return out;
}

Var mul_const(Tape& t, Var x, const Array& c) {
    const Array& xv = t.val(x);
    check_same_shape(xv, c, "mul_const");
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * c[i];
    Var out = t.make(std::move(y), any_requires(t, {x}), "mul_const");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, c](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * c[i];
        });
    return out;
}

Var exp_op(Tape& t, Var x) {
    const Array& xv = t.val(x);
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = std::exp(xv[i]);
    Var out = t.make(std::move(y), any_requires(t, {x}), "exp");
    if (t.needs_grad(out))
        t.set_back(out, [out, x](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& yv = tp.val(out);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i];
        });
    return out;
}

Var square(Tape& t, Var x) {
    const Array& xv = t.val(x);
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * xv[i];
    Var out = t.make(std::move(y), any_requires(t, {x}), "square");
    if (t.needs_grad(out))
        t.set_back(out, [out, x](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& xv = tp.val(x);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gy.size(); ++i) gx[i] += Real(2) * gy[i] * xv[i];
        });
    return out;
}

Var minimum(Tape& t, Var a, Var b) {
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    check_same_shape(av, bv, "minimum");
    Array y = BufferPool::local().take_uninit(av.shape());
    for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] <= bv[i] ? av[i] : bv[i];
    Var out = t.make(std::move(y), any_requires(t, {a, b}), "minimum");
    if (t.needs_grad(out))
        t.set_back(out, [out, a, b](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& av = tp.val(a);
            const Array& bv = tp.val(b);
            for (size_t i = 0; i < gy.size(); ++i) {
                if (av[i] <= bv[i]) {
                    if (tp.needs_grad(a)) tp.grad_ref(a)[i] += gy[i];
                } else if (tp.needs_grad(b)) {
                    tp.grad_ref(b)[i] += gy[i];
                }
            }
        });
    return out;
}

Var clamp(Tape& t, Var x, Real lo, Real hi) {
    const Array& xv = t.val(x);
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = std::min(hi, std::max(lo, xv[i]));
    Var out = t.make(std::move(y), any_requires(t, {x}), "clamp");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, lo, hi](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& xv = tp.val(x);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gy.size(); ++i)
                if (xv[i] > lo && xv[i] < hi) gx[i] += gy[i];
        });
    return out;
}

// --- structure --------------------------------------------------------------

Var concat_ch(Tape& t, Var a, Var b) {
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
        throw DimensionError("concat_ch: spatial dims must match");
    Array y = BufferPool::local().take_uninit({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.data(), av.data() + av.size(), y.data());
    std::copy(bv.data(), bv.data() + bv.size(), y.data() + av.size());
    Var out = t.make(std::move(y), any_requires(t, {a, b}), "concat_ch");
    if (t.needs_grad(out))
        t.set_back(out, [out, a, b](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const size_t na = tp.val(a).size();
            if (tp.needs_grad(a)) {
                Array& ga = tp.grad_ref(a);
                for (size_t i = 0; i < na; ++i) ga[i] += gy[i];
            }
            if (tp.needs_grad(b)) {
                Array& gb = tp.grad_ref(b);
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += gy[na + i];
            }
        });
    return out;
}

Var flatten(Tape& t, Var x) {
    const Array& xv = t.val(x);
    Array y({static_cast<int>(xv.size())}, RealVec(xv.vec()));
    Var out = t.make(std::move(y), any_requires(t, {x}), "flatten");
    if (t.needs_grad(out))
        t.set_back(out, [out, x](Tape& tp) {
            accumulate(tp.grad_ref(x), tp.grad_ref(out));
        });
    return out;
}

Var global_avg_pool(Tape& t, Var x) {
    const Array& xv = t.val(x);
    if (xv.ndim() != 3) throw DimensionError("global_avg_pool expects [C,H,W]");
    const int c = xv.dim(0);
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Array y({c});
    for (int i = 0; i < c; ++i) {
        Real acc = 0;
        const Real* p = xv.data() + i * plane;
        for (size_t j = 0; j < plane; ++j) acc += p[j];
        y[static_cast<size_t>(i)] = acc / static_cast<Real>(plane);
    }
    Var out = t.make(std::move(y), any_requires(t, {x}), "global_avg_pool");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, plane, c](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            Array& gx = tp.grad_ref(x);
            for (int i = 0; i < c; ++i) {
                const Real g = gy[static_cast<size_t>(i)] / static_cast<Real>(plane);
                Real* p = gx.data() + i * plane;
                for (size_t j = 0; j < plane; ++j) p[j] += g;
            }
        });
    return out;
}

Var linear(Tape& t, Var x, Var w, Var b) {
    const Array& xv = t.val(x);
    const Array& wv = t.val(w);
    if (xv.ndim() != 1 || wv.ndim() != 2 || wv.dim(1) != xv.dim(0))
        throw DimensionError("linear expects x:[N], w:[M,N]");
    const int m = wv.dim(0), n = wv.dim(1);
    Array y({m});
    for (int i = 0; i < m; ++i) {
        Real acc = b.valid() ? t.val(b)[static_cast<size_t>(i)] : Real(0);
        const Real* wr = wv.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += wr[j] * xv[static_cast<size_t>(j)];
        y[static_cast<size_t>(i)] = acc;
    }
    Var out = t.make(std::move(y), any_requires(t, {x, w, b}), "linear");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, w, b, m, n](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& xv = tp.val(x);
            const Array& wv = tp.val(w);
            if (tp.needs_grad(x)) {
                Array& gx = tp.grad_ref(x);
                for (int i = 0; i < m; ++i) {
                    const Real g = gy[static_cast<size_t>(i)];
                    const Real* wr = wv.data() + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) gx[static_cast<size_t>(j)] += g * wr[j];
                }
            }
            if (tp.needs_grad(w)) {
                Array& gw = tp.grad_ref(w);
                for (int i = 0; i < m; ++i) {
                    const Real g = gy[static_cast<size_t>(i)];
                    Real* wr = gw.data() + static_cast<size_t>(i) * n;
                    for (int j = 0; j < n; ++j) wr[j] += g * xv[static_cast<size_t>(j)];
                }
            }
            if (b.valid() && tp.needs_grad(b)) accumulate(tp.grad_ref(b), gy);
        });
    return out;
}

Var log_softmax(Tape& t, Var x) {
    const Array& xv = t.val(x);
    if (xv.ndim() != 1) throw DimensionError("log_softmax expects a vector");
    Real mx = xv[0];
    for (size_t i = 1; i < xv.size(); ++i) mx = std::max(mx, xv[i]);
    Real z = 0;
    for (size_t i = 0; i < xv.size(); ++i) z += std::exp(xv[i] - mx);
    const Real lz = std::log(z) + mx;
    Array y = BufferPool::local().take_uninit(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] - lz;
    Var out = t.make(std::move(y), any_requires(t, {x}), "log_softmax");
    if (t.needs_grad(out))
        t.set_back(out, [out, x](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& yv = tp.val(out);
            Array& gx = tp.grad_ref(x);
            Real gs = 0;
            for (size_t i = 0; i < gy.size(); ++i) gs += gy[i];
            for (size_t i = 0; i < gy.size(); ++i)
                gx[i] += gy[i] - std::exp(yv[i]) * gs;
        });
    return out;
}

Var gather1(Tape& t, Var x, int index) {
    const Array& xv = t.val(x);
    if (index < 0 || static_cast<size_t>(index) >= xv.size())
        throw ContractError("gather1: index out of range");
    Var out = t.make(Array::scalar(xv[static_cast<size_t>(index)]),
                     any_requires(t, {x}), "gather1");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, index](Tape& tp) {
            tp.grad_ref(x)[static_cast<size_t>(index)] += tp.grad_ref(out)[0];
        });
    return out;
}

Var sum(Tape& t, Var x) {
    const Array& xv = t.val(x);
    Real acc = 0;
    for (size_t i = 0; i < xv.size(); ++i) acc += xv[i];
    Var out = t.make(Array::scalar(acc), any_requires(t, {x}), "sum");
    if (t.needs_grad(out))
        t.set_back(out, [out, x](Tape& tp) {
            const Real g = tp.grad_ref(out)[0];
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    return out;
}

Var mean(Tape& t, Var x) {
    const Array& xv = t.val(x);
    Real acc = 0;
    for (size_t i = 0; i < xv.size(); ++i) acc += xv[i];
    const Real inv = Real(1) / static_cast<Real>(xv.size());
    Var out = t.make(Array::scalar(acc * inv), any_requires(t, {x}), "mean");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, inv](Tape& tp) {
            const Real g = tp.grad_ref(out)[0] * inv;
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    return out;
}

Var add_n(Tape& t, const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("add_n: empty input list");
    const Array& first = t.val(xs[0]);
    Array y(first.shape());
    bool rg = false;
    for (Var v : xs) {
        const Array& av = t.val(v);
        check_same_shape(first, av, "add_n");
        for (size_t i = 0; i < y.size(); ++i) y[i] += av[i];
        rg = rg || t.needs_grad(v);
    }
    Var out = t.make(std::move(y), rg, "add_n");
    if (rg)
        t.set_back(out, [out, xs](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            for (Var v : xs)
                if (tp.needs_grad(v)) accumulate(tp.grad_ref(v), gy);
        });
    return out;
}

// --- losses -----------------------------------------------------------------

namespace {

// mask entries are {0,1}; broadcast spatially over pred channels.
// Returns count of masked scalar entries (channels included).
size_t masked_count(const Array& pred, const Array& mask) {
    const size_t plane = static_cast<size_t>(pred.dim(1)) * pred.dim(2);
    if (mask.size() != plane)
        throw ContractError("mask does not cover the prediction's spatial grid");
    size_t ones = 0;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0) ++ones;
    if (ones == 0) throw ContractError("mask has no active entries");
    return ones * static_cast<size_t>(pred.dim(0));
}

}  // namespace

Real masked_sq_err_value(const Array& pred, const Array& target, const Array& mask) {
    if (!pred.same_shape(target))
        throw DimensionError("masked_sq_err: pred/target shape mismatch");
    const size_t cnt = masked_count(pred, mask);
    const size_t plane = static_cast<size_t>(pred.dim(1)) * pred.dim(2);
    Real acc = 0;
    for (int c = 0; c < pred.dim(0); ++c) {
        const Real* p = pred.data() + c * plane;
        const Real* q = target.data() + c * plane;
        for (size_t i = 0; i < plane; ++i) {
            if (mask[i] == 0) continue;
            const Real dkv = p[i] - q[i];
            acc += dkv * dkv;
        }
    }
    return acc / static_cast<Real>(cnt);
}

Var masked_sq_err(Tape& t, Var pred, const Array& target, const Array& mask) {
    const Array& pv = t.val(pred);
    const Real v = masked_sq_err_value(pv, target, mask);
    const size_t cnt = masked_count(pv, mask);
    Var out = t.make(Array::scalar(v), any_requires(t, {pred}), "masked_sq_err");
    if (t.needs_grad(out))
        t.set_back(out, [out, pred, target, mask, cnt](Tape& tp) {
            const Real g = tp.grad_ref(out)[0] * Real(2) / static_cast<Real>(cnt);
            const Array& pv = tp.val(pred);
            Array& gp = tp.grad_ref(pred);
            const size_t plane = static_cast<size_t>(pv.dim(1)) * pv.dim(2);
            for (int c = 0; c < pv.dim(0); ++c) {
                const Real* p = pv.data() + c * plane;
                const Real* q = target.data() + c * plane;
                Real* gr = gp.data() + c * plane;
                for (size_t i = 0; i < plane; ++i)
                    if (mask[i] != 0) gr[i] += g * (p[i] - q[i]);
            }
        });
    return out;
}

Var sq_err(Tape& t, Var x, const Array& target) {
    const Array& xv = t.val(x);
    check_same_shape(xv, target, "sq_err");
    Real acc = 0;
    for (size_t i = 0; i < xv.size(); ++i) {
        const Real d = xv[i] - target[i];
        acc += d * d;
    }
    const Real inv = Real(1) / static_cast<Real>(xv.size());
    Var out = t.make(Array::scalar(acc * inv), any_requires(t, {x}), "sq_err");
    if (t.needs_grad(out))
        t.set_back(out, [out, x, target, inv](Tape& tp) {
            const Real g = tp.grad_ref(out)[0] * Real(2) * inv;
            const Array& xv = tp.val(x);
            Array& gx = tp.grad_ref(x);
            for (size_t i = 0; i < xv.size(); ++i) gx[i] += g * (xv[i] - target[i]);
        });
    return out;
}

Var abs_mean(Tape& t, Var x, const Array* mask) {
    const Array& xv = t.val(x);
    size_t cnt;
    Real acc = 0;
    if (mask) {
        cnt = masked_count(xv, *mask);
        const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
        for (int c = 0; c < xv.dim(0); ++c) {
            const Real* p = xv.data() + c * plane;
            for (size_t i = 0; i < plane; ++i)
                if ((*mask)[i] != 0) acc += std::abs(p[i]);
        }
    } else {
        cnt = xv.size();
        for (size_t i = 0; i < xv.size(); ++i) acc += std::abs(xv[i]);
    }
    const Real inv = Real(1) / static_cast<Real>(cnt);
    Var out = t.make(Array::scalar(acc * inv), any_requires(t, {x}), "abs_mean");
    if (t.needs_grad(out)) {
        const Array* m = mask;  // captured by value below via copy
        Array mask_copy = mask ? *mask : Array();
        (void)m;
        t.set_back(out, [out, x, mask_copy, inv, has_mask = mask != nullptr](Tape& tp) {
            const Real g = tp.grad_ref(out)[0] * inv;
            const Array& xv = tp.val(x);
            Array& gx = tp.grad_ref(x);
            auto sgn = [](Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); };
            if (has_mask) {
                const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
                for (int c = 0; c < xv.dim(0); ++c) {
                    const Real* p = xv.data() + c * plane;
                    Real* gr = gx.data() + c * plane;
                    for (size_t i = 0; i < plane; ++i)
                        if (mask_copy[i] != 0) gr[i] += g * sgn(p[i]);
                }
            } else {
                for (size_t i = 0; i < xv.size(); ++i) gx[i] += g * sgn(xv[i]);
            }
        });
    }
    return out;
}

Var masked_blend(Tape& t, Var a, Var b, const Array& mask) {
    const Array& av = t.val(a);
    const Array& bv = t.val(b);
    check_same_shape(av, bv, "masked_blend");
    const size_t plane = static_cast<size_t>(av.dim(1)) * av.dim(2);
    if (mask.size() != plane)
        throw ContractError("masked_blend: mask does not cover the spatial grid");
    Array y = BufferPool::local().take_uninit(av.shape());
    for (int c = 0; c < av.dim(0); ++c) {
        const Real* pa = av.data() + c * plane;
        const Real* pb = bv.data() + c * plane;
        Real* py = y.data() + c * plane;
        // copy semantics, not arithmetic: mask-0 cells carry b verbatim
        for (size_t i = 0; i < plane; ++i) py[i] = mask[i] != 0 ? pa[i] : pb[i];
    }
    Var out = t.make(std::move(y), any_requires(t, {a, b}), "masked_blend");
    if (t.needs_grad(out))
        t.set_back(out, [out, a, b, mask](Tape& tp) {
            const Array& gy = tp.grad_ref(out);
            const Array& av = tp.val(a);
            const size_t plane = static_cast<size_t>(av.dim(1)) * av.dim(2);
            for (int c = 0; c < av.dim(0); ++c) {
                const Real* g = gy.data() + c * plane;
                for (size_t i = 0; i < plane; ++i) {
                    if (mask[i] != 0) {
                        if (tp.needs_grad(a)) tp.grad_ref(a).data()[c * plane + i] += g[i];
                    } else if (tp.needs_grad(b)) {
                        tp.grad_ref(b).data()[c * plane + i] += g[i];
                    }
                }
            }
        });
    return out;
}

}  // namespace glim
