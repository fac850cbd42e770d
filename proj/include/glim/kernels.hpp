#pragma once

#include "glim/array.hpp"

namespace glim::kernels {

// 2D convolution (cross-correlation) kernels over [C,H,W] arrays with
// kernel [Co,Ci,K,K]. All backward kernels *accumulate* into their output
// buffers. Every loop is written in gather form: each output element is
// owned by exactly one iteration, so OpenMP scheduling cannot change
// results and two runs of the same build are bit-identical.

struct ConvDims {
    int ci, h, w;       // input
    int co, k;          // kernel
    int stride, pad;
    int ho, wo;         // output

    static ConvDims conv(int ci, int h, int w, int co, int k, int stride, int pad);
    // Transposed convolution: output spatial size inverts the conv formula.
    static ConvDims deconv(int ci, int h, int w, int co, int k, int stride, int pad);
};

// y[Co,Ho,Wo] = x * w (+ bias), bias may be null.
void conv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y, const ConvDims& d);
void conv2d_backward_input(const Real* gy, const Real* w, Real* gx, const ConvDims& d);
void conv2d_backward_kernel(const Real* gy, const Real* x, Real* gw, const ConvDims& d);
void conv2d_backward_bias(const Real* gy, Real* gb, const ConvDims& d);

// Transposed convolution. Kernel layout [A,B,K,K] where A is the input
// channel count, so that deconv2d with kernel w is exactly the adjoint of
// conv2d with the same w: <conv2d(x,w), y> == <x, deconv2d(y,w)>.
void deconv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y, const ConvDims& d);
void deconv2d_backward_input(const Real* gy, const Real* w, Real* gx, const ConvDims& d);
void deconv2d_backward_kernel(const Real* gy, const Real* x, Real* gw, const ConvDims& d);
void deconv2d_backward_bias(const Real* gy, Real* gb, const ConvDims& d);

// Serial reference implementations: naive nested loops, written for
// clarity, kept as the oracle the parallel kernels are tested against
// and as the baseline for the kernel benchmark.
namespace reference {
void conv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y, const ConvDims& d);
void deconv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y, const ConvDims& d);
}  // namespace reference

}  // namespace glim::kernels
