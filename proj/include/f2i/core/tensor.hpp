#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "f2i/core/errors.hpp"

namespace f2i {

/// Fixed 64-byte alignment for every tensor buffer. Eigen picks vector
/// kernels (and thus reduction splits) based on pointer alignment, so a
/// uniform alignment is required for bit-reproducible runs.
template <class T>
struct AlignedAlloc {
    using value_type = T;
    AlignedAlloc() = default;
    template <class U>
    AlignedAlloc(const AlignedAlloc<U>&) {}
    T* allocate(std::size_t n) {
        if (n == 0) return nullptr;
        void* p = std::aligned_alloc(64, ((n * sizeof(T) + 63) / 64) * 64);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) { std::free(p); }
    template <class U>
    bool operator==(const AlignedAlloc<U>&) const { return true; }
};

/// Dense row-major tensor, rank 1..4. The scalar type is templated so the
/// same model code can run in float (production, matches the on-disk format)
/// and double (finite-difference gradient checks).
template <class T>
class TensorT {
  public:
    using Buffer = std::vector<T, AlignedAlloc<T>>;

    TensorT() = default;
    explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), T(0));
    }
    TensorT(std::vector<int64_t> shape, Buffer data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != static_cast<int64_t>(data_.size()))
            throw ShapeError("tensor: data size does not match shape");
    }
    TensorT(std::vector<int64_t> shape, std::initializer_list<T> data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (count(shape_) != static_cast<int64_t>(data_.size()))
            throw ShapeError("tensor: data size does not match shape");
    }

    static TensorT zeros(std::vector<int64_t> shape) { return TensorT(std::move(shape)); }
    static TensorT full(std::vector<int64_t> shape, T v) {
        TensorT t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static TensorT scalar(T v) { return TensorT({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    Buffer& vec() { return data_; }
    const Buffer& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    T operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * dim(1) + j)]; }
    T at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * dim(1) + j)]; }
    T& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    T at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }
    T at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * dim(1) + j) * dim(2) + k) * dim(3) + l)];
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    /// Same data, new shape (element count must match).
    TensorT reshaped(std::vector<int64_t> shape) const {
        if (count(shape) != numel()) throw ShapeError("reshape: element count mismatch");
        return TensorT(std::move(shape), data_);
    }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    TensorT<U> cast() const {
        typename TensorT<U>::Buffer out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d <= 0) throw ShapeError("tensor: non-positive dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    static std::string shape_str(const std::vector<int64_t>& shape) {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ")";
        return os.str();
    }

  private:
    std::vector<int64_t> shape_;
    Buffer data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace f2i
