#pragma once

#include <cstdint>
#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

#include "edsc/common.hpp"

namespace edsc {

// Shape of a rank-4 tensor in NCHW order. Lower-rank data is stored with
// leading dims set to 1 (e.g. a bias vector of C entries is {1, C, 1, 1}).
struct Shape4 {
    int64_t b = 0, c = 0, h = 0, w = 0;

    int64_t numel() const { return b * c * h * w; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "[" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + "]";
    }
};

inline std::ostream& operator<<(std::ostream& os, const Shape4& s) { return os << s.str(); }

// Dense rank-4 tensor, row-major within each channel plane. T is float for
// training and double for finite-difference checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(check_numel(shape), fill) {}
    Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != shape_.numel())
            throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_.str());
    }

    const Shape4& shape() const { return shape_; }
    int64_t numel() const { return shape_.numel(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& at(int64_t b, int64_t c, int64_t y, int64_t x) { return data_[offset(b, c, y, x)]; }
    const T& at(int64_t b, int64_t c, int64_t y, int64_t x) const { return data_[offset(b, c, y, x)]; }

    T& operator[](int64_t i) { return data_[i]; }
    const T& operator[](int64_t i) const { return data_[i]; }

    // Pointer to the start of one HxW plane.
    T* plane(int64_t b, int64_t c) { return data_.data() + (b * shape_.c + c) * shape_.h * shape_.w; }
    const T* plane(int64_t b, int64_t c) const {
        return data_.data() + (b * shape_.c + c) * shape_.h * shape_.w;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    const std::vector<T>& vec() const { return data_; }

private:
    static int64_t check_numel(const Shape4& s) {
        if (s.b < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw std::invalid_argument("negative tensor dim in shape " + s.str());
        return s.numel();
    }
    int64_t offset(int64_t b, int64_t c, int64_t y, int64_t x) const {
        return ((b * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape4 shape_;
    std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape4& want, const char* what) {
    if (!(t.shape() == want))
        throw std::invalid_argument(std::string(what) + ": expected shape " + want.str() +
                                    ", got " + t.shape().str());
}

}  // namespace edsc
