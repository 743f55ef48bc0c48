#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>

#include "hcnn/errors.hpp"

namespace hcnn {

using Index = Eigen::Index;

template <class Scalar>
using VectorX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using PlaneX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using PlaneMap = Eigen::Map<PlaneX<Scalar>>;

template <class Scalar>
using ConstPlaneMap = Eigen::Map<const PlaneX<Scalar>>;

// Dense rank-4 array in (batch, channel, row, col) order, row-major.
// Carries activations, weights and gradients throughout the toolkit.
template <class Scalar>
class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(Index n, Index c, Index h, Index w) : n_(n), c_(c), h_(h), w_(w) {
        if (n < 1 || c < 1 || h < 1 || w < 1) {
            throw ShapeError("Tensor4: non-positive dimension (" + shape_str(n, c, h, w) + ")");
        }
        data_ = VectorX<Scalar>::Zero(n * c * h * w);
    }

    static Tensor4 constant(Index n, Index c, Index h, Index w, Scalar v) {
        Tensor4 t(n, c, h, w);
        t.data_.setConstant(v);
        return t;
    }

    // Single-plane tensor from a row-major list of rows, for tests and toys.
    static Tensor4 from_plane(std::initializer_list<std::initializer_list<Scalar>> rows) {
        const Index h = static_cast<Index>(rows.size());
        const Index w = static_cast<Index>(rows.begin()->size());
        Tensor4 t(1, 1, h, w);
        Index y = 0;
        for (const auto& row : rows) {
            if (static_cast<Index>(row.size()) != w) {
                throw ShapeError("Tensor4::from_plane: ragged rows");
            }
            Index x = 0;
            for (Scalar v : row) t(0, 0, y, x++) = v;
            ++y;
        }
        return t;
    }

    Index n() const { return n_; }
    Index c() const { return c_; }
    Index h() const { return h_; }
    Index w() const { return w_; }
    Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Scalar operator()(Index n, Index c, Index y, Index x) const {
        return data_[offset(n, c, y, x)];
    }
    Scalar& operator()(Index n, Index c, Index y, Index x) {
        return data_[offset(n, c, y, x)];
    }

    // Flat storage, usable in Eigen expressions.
    VectorX<Scalar>& array() { return data_; }
    const VectorX<Scalar>& array() const { return data_; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    // (h, w) view of one (n, c) plane.
    PlaneMap<Scalar> plane(Index n, Index c) {
        return PlaneMap<Scalar>(data_.data() + plane_offset(n, c), h_, w_);
    }
    ConstPlaneMap<Scalar> plane(Index n, Index c) const {
        return ConstPlaneMap<Scalar>(data_.data() + plane_offset(n, c), h_, w_);
    }

    bool same_shape(const Tensor4& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    bool all_finite() const {
        return data_.isFinite().all();
    }

    void set_zero() { data_.setZero(); }

    template <class To>
    Tensor4<To> cast() const {
        Tensor4<To> out(n_, c_, h_, w_);
        out.array() = data_.template cast<To>();
        return out;
    }

    std::string shape_str() const { return shape_str(n_, c_, h_, w_); }

    static std::string shape_str(Index n, Index c, Index h, Index w) {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }

private:
    Index offset(Index n, Index c, Index y, Index x) const {
        return ((n * c_ + c) * h_ + y) * w_ + x;
    }
    Index plane_offset(Index n, Index c) const { return (n * c_ + c) * h_ * w_; }

    Index n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    VectorX<Scalar> data_;
};

template <class Scalar>
double max_abs_diff(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    return (a.array().template cast<double>() - b.array().template cast<double>()).abs().maxCoeff();
}

// Per-output-cell argmax positions recorded by 2x2 max-pooling. Each value is
// a flat index into the pre-pool (src_h, src_w) plane; plane dims here are
// exactly half the source dims.
class PoolIndices {
public:
    PoolIndices() = default;

    PoolIndices(Index n, Index c, Index h, Index w, Index src_h, Index src_w)
        : n_(n), c_(c), h_(h), w_(w), src_h_(src_h), src_w_(src_w) {
        if (src_h != 2 * h || src_w != 2 * w) {
            throw ShapeError("PoolIndices: plane dims must be half the source dims");
        }
        data_ = Eigen::Array<std::int32_t, Eigen::Dynamic, 1>::Zero(n * c * h * w);
    }

    Index n() const { return n_; }
    Index c() const { return c_; }
    Index h() const { return h_; }
    Index w() const { return w_; }
    Index src_h() const { return src_h_; }
    Index src_w() const { return src_w_; }

    std::int32_t operator()(Index n, Index c, Index y, Index x) const {
        return data_[((n * c_ + c) * h_ + y) * w_ + x];
    }
    std::int32_t& operator()(Index n, Index c, Index y, Index x) {
        return data_[((n * c_ + c) * h_ + y) * w_ + x];
    }

    // True iff every stored index falls inside its own 2x2 source window.
    bool windows_consistent() const {
        for (Index n = 0; n < n_; ++n)
            for (Index c = 0; c < c_; ++c)
                for (Index y = 0; y < h_; ++y)
                    for (Index x = 0; x < w_; ++x) {
                        const std::int32_t idx = (*this)(n, c, y, x);
                        const Index sy = idx / src_w_;
                        const Index sx = idx % src_w_;
                        if (sy / 2 != y || sx / 2 != x) return false;
                    }
        return true;
    }

private:
    Index n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    Index src_h_ = 0, src_w_ = 0;
    Eigen::Array<std::int32_t, Eigen::Dynamic, 1> data_;
};

}  // namespace hcnn
