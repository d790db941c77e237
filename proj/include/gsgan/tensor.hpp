#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "gsgan/common.hpp"
#include "gsgan/rng.hpp"

namespace gsgan {

// Dense N-d tensor, contiguous row-major, layout [batch, channel, height, width]
// for image data. Scalar is float for training and double for the gradient
// checks; both instantiations share all op code.
template <typename S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), S(0)) {}

    Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("tensor: " + std::to_string(data_.size()) + " elements for shape " +
                             shape_str(shape_));
    }

    Tensor(Shape shape, std::initializer_list<S> data)
        : Tensor(std::move(shape), std::vector<S>(data)) {}

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

    static Tensor randn(Shape shape, CounterRng& rng, S scale = S(1)) {
        Tensor t(std::move(shape));
        for (S& v : t.data_) v = static_cast<S>(rng.normal()) * scale;
        return t;
    }

    static Tensor scalar(S v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& raw() { return data_; }
    const std::vector<S>& raw() const { return data_; }

    S& operator[](std::size_t i) { return data_[i]; }
    const S& operator[](std::size_t i) const { return data_[i]; }

    // NCHW accessor.
    S& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const S& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    // Matrix accessor.
    S& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const S& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(s));
        Tensor t = *this;
        t.shape_ = std::move(s);
        return t;
    }

    bool all_finite() const {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
        return out;
    }

private:
    Shape shape_;
    std::vector<S> data_;
};

#ifndef NDEBUG
#define GSGAN_CHECK_FINITE(t) assert((t).all_finite() && "non-finite tensor element")
#else
#define GSGAN_CHECK_FINITE(t) ((void)0)
#endif

}  // namespace gsgan
