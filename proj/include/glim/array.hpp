#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "glim/common.hpp"

namespace glim {

// Dense row-major array of Real. The numeric carrier for states,
// observations, memory maps and parameters.
class Array {
public:
    Array() = default;

    explicit Array(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.resize(numel(shape_));
        std::fill(data_.begin(), data_.end(), Real(0));
    }

    Array(std::vector<int> shape, RealVec data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel(shape_) != data_.size())
            throw DimensionError("array data length does not match shape");
    }

    Array(std::vector<int> shape, std::initializer_list<Real> init)
        : shape_(std::move(shape)), data_(init.begin(), init.end()) {
        if (numel(shape_) != data_.size())
            throw DimensionError("array data length does not match shape");
    }

    // Contents unspecified; for outputs that are fully overwritten.
    static Array uninit(std::vector<int> shape) {
        Array a;
        a.shape_ = std::move(shape);
        a.data_.resize(numel(a.shape_));
        return a;
    }

    static Array full(std::vector<int> shape, Real value) {
        Array a(std::move(shape));
        for (auto& v : a.data_) v = value;
        return a;
    }

    static Array scalar(Real value) { return Array({1}, {value}); }

    static size_t numel(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("non-positive dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    RealVec& vec() { return data_; }
    const RealVec& vec() const { return data_; }

    Real& operator[](size_t i) { return data_[i]; }
    Real operator[](size_t i) const { return data_[i]; }

    // Unchecked indexed access for the common ranks.
    Real& at(int i) { return data_[static_cast<size_t>(i)]; }
    Real at(int i) const { return data_[static_cast<size_t>(i)]; }
    Real& at(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    Real at(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    Real& at4(int a, int b, int y, int x) {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + y) * shape_[3] + x];
    }
    Real at4(int a, int b, int y, int x) const {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + y) * shape_[3] + x];
    }

    void fill(Real v) {
        for (auto& x : data_) x = v;
    }

    bool same_shape(const Array& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (Real v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    RealVec data_;
};

}  // namespace glim
