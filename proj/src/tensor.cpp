#include "seqdiff/tensor.hpp"

#include <cmath>
#include <sstream>

namespace seqdiff {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor extents must be positive");
        }
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_product(shape_) != values_.size()) {
        throw ShapeError("tensor shape " + shape_str() + " does not match value count " +
                         std::to_string(values_.size()));
    }
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.values_) {
        x = v;
    }
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) {
        throw ShapeError("expected rank-2 tensor, got shape " + shape_str());
    }
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) {
        throw ShapeError("expected rank-2 tensor, got shape " + shape_str());
    }
    return shape_[1];
}

bool Tensor::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

void Tensor::require_finite(const std::string& context) const {
    if (!all_finite()) {
        throw ValueError("non-finite value in " + context);
    }
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i > 0) {
            os << "x";
        }
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

} // namespace seqdiff
