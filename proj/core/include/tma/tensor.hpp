#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tma {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense N-dimensional array of doubles, row-major.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    double& at(const std::vector<int>& idx);
    double at(const std::vector<int>& idx) const;

    void fill(double value);
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Row-major strides for a shape.
std::vector<std::size_t> row_major_strides(const std::vector<int>& shape);

/// Reorders axes: out.shape[i] = in.shape[order[i]].
Tensor permute_raw(const Tensor& t, const std::vector<int>& order);

/// Trainable tensor with an accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

}  // namespace tma
