#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "seqdiff/errors.hpp"

namespace seqdiff {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything in
// this codebase; shape is kept general so persistence stays self-describing.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    // Rank-2 accessors (ShapeError on other ranks).
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    // Throws ValueError naming `context` if any entry is NaN/Inf.
    void require_finite(const std::string& context) const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

} // namespace seqdiff
