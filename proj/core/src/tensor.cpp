#include "densetrf/tensor.h"

#include <cmath>
#include <sstream>

#include "densetrf/errors.h"

namespace dtrf {

namespace {
int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative tensor dimension");
        n *= d;
    }
    return n;
}
} // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(size_t(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != int64_t(data_.size())) {
        throw ShapeError("tensor data length does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = stddev * rng.normal();
    return t;
}

int Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

int Tensor::cols() const {
    if (shape_.empty()) return 0;
    int64_t c = 1;
    for (size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
    return int(c);
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

double Tensor::max_abs_diff(const Tensor& o) const {
    if (!same_shape(o)) throw ShapeError("max_abs_diff: shape mismatch " + shape_str() + " vs " + o.shape_str());
    double m = 0.0;
    for (size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::fabs(data_[i] - o.data_[i]));
    return m;
}

double Tensor::l2_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_size(shape) != size()) {
        throw ShapeError("reshape: element count mismatch");
    }
    return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
}

} // namespace dtrf
