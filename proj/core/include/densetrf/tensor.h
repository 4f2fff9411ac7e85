#pragma once

#include <cstdint>
#include <vector>

#include "densetrf/rng.h"

namespace dtrf {

// Dense row-major tensor of doubles. Shapes are small (desk scale), so the
// representation favors simplicity: a shape vector plus a flat buffer.
// Graph ops treat tensors as 2D matrices {rows, cols}; higher-rank shapes are
// views over the same layout (reshape is free).
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[size_t(i)]; }
    int rank() const { return int(shape_.size()); }
    int64_t size() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2D accessors (rows = shape[0], cols = product of the rest).
    int rows() const;
    int cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[size_t(i)]; }
    double operator[](int64_t i) const { return data_[size_t(i)]; }
    double& at2(int r, int c) { return data_[size_t(r) * size_t(cols()) + size_t(c)]; }
    double at2(int r, int c) const { return data_[size_t(r) * size_t(cols()) + size_t(c)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double max_abs_diff(const Tensor& o) const;
    double l2_norm() const;

    // Reinterprets the buffer under a new shape with identical element count.
    Tensor reshaped(std::vector<int> shape) const;

    std::string shape_str() const;

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace dtrf
