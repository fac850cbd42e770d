// Compares the parallel convolution kernels against the serial reference
// at the shapes the models actually use.
#include <chrono>
#include <functional>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "glim/kernels.hpp"
#include "glim/rng.hpp"

using namespace glim;
using Clock = std::chrono::steady_clock;

namespace {

Array rnd(std::vector<int> shape, rng::Engine& gen) {
    Array a(std::move(shape));
    for (size_t i = 0; i < a.size(); ++i)
        a[i] = static_cast<Real>(rng::uniform_real(gen, -1.0, 1.0));
    return a;
}

double time_of(const std::function<void()>& fn, int iters) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    return std::chrono::duration<double>(Clock::now() - t0).count() / iters;
}

void bench_case(const char* name, int ci, int co, int h, int k, int stride, int pad,
                int iters) {
    rng::Engine gen(42);
    auto d = kernels::ConvDims::conv(ci, h, h, co, k, stride, pad);
    Array x = rnd({ci, h, h}, gen);
    Array w = rnd({co, ci, k, k}, gen);
    Array b = rnd({co}, gen);
    Array y({co, d.ho, d.wo});

    const double serial = time_of(
        [&] { kernels::reference::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d); },
        iters);
    const double fast = time_of(
        [&] { kernels::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d); }, iters);
    const double gflops = 2.0 * co * ci * k * k * d.ho * d.wo / fast / 1e9;
    std::printf("%-28s serial %8.2f us   parallel %8.2f us   speedup %5.2fx   %6.2f GFLOP/s\n",
                name, serial * 1e6, fast * 1e6, serial / fast, gflops);
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    bench_case("conv 4->8   12x12 k3", 4, 8, 12, 3, 1, 1, 3000);
    bench_case("conv 8->8   12x12 k3", 8, 8, 12, 3, 1, 1, 3000);
    bench_case("conv 16->8  12x12 k3", 16, 8, 12, 3, 1, 1, 3000);
    bench_case("conv 8->8   24x24 k3", 8, 8, 24, 3, 1, 1, 1500);
    bench_case("conv 4->8   24x24 k3 s2", 4, 8, 24, 3, 2, 1, 3000);
    bench_case("conv 32->32 12x12 k3", 32, 32, 12, 3, 1, 1, 400);

    {
        rng::Engine gen(7);
        auto d = kernels::ConvDims::deconv(8, 12, 12, 8, 4, 2, 1);
        Array x = rnd({8, 12, 12}, gen);
        Array w = rnd({8, 8, 4, 4}, gen);
        Array y({8, d.ho, d.wo});
        const double serial = time_of(
            [&] {
                kernels::reference::deconv2d_forward(x.data(), w.data(), nullptr, y.data(), d);
            },
            1500);
        const double fast = time_of(
            [&] { kernels::deconv2d_forward(x.data(), w.data(), nullptr, y.data(), d); },
            1500);
        std::printf("%-28s serial %8.2f us   parallel %8.2f us   speedup %5.2fx\n",
                    "deconv 8->8 12->24 k4 s2", serial * 1e6, fast * 1e6, serial / fast);
    }
    return 0;
}
