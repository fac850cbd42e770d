#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace glim {

#ifdef GLIM_REAL32
using Real = float;
#else
using Real = double;
#endif

// Allocator that skips value-initialization of trivial types; buffers the
// kernels fully overwrite are not zeroed first.
template <class T>
struct uninit_allocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = uninit_allocator<U>;
    };
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) > 0)
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
        // default: leave trivial storage uninitialized
    }
};

using RealVec = std::vector<Real, uninit_allocator<Real>>;

// Shape/channel mismatches between arrays and operations.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: wrong phase, non-scalar loss, empty batch, double backward.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent run configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A NaN/Inf surfaced while numeric validation is enabled.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace glim
