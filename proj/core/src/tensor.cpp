#include "tma/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace tma {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("nonpositive extent in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    t.fill(value);
    return t;
}

void Tensor::fill(double value) { std::fill(data.begin(), data.end(), value); }

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::vector<std::size_t> row_major_strides(const std::vector<int>& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        strides[static_cast<std::size_t>(i)] =
            strides[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(shape[static_cast<std::size_t>(i) + 1]);
    return strides;
}

double& Tensor::at(const std::vector<int>& idx) {
    auto strides = row_major_strides(shape);
    std::size_t off = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) off += strides[i] * static_cast<std::size_t>(idx[i]);
    return data[off];
}

double Tensor::at(const std::vector<int>& idx) const { return const_cast<Tensor*>(this)->at(idx); }

Tensor permute_raw(const Tensor& t, const std::vector<int>& order) {
    const int r = t.rank();
    if (static_cast<int>(order.size()) != r) throw ShapeError("permutation rank mismatch");
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    for (int a : order) {
        if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)])
            throw ShapeError("invalid axis permutation");
        seen[static_cast<std::size_t>(a)] = true;
    }
    std::vector<int> out_shape(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        out_shape[i] = t.shape[static_cast<std::size_t>(order[i])];
    Tensor out = Tensor::zeros(out_shape);

    auto in_strides = row_major_strides(t.shape);
    auto out_strides = row_major_strides(out_shape);
    std::vector<int> idx(order.size(), 0);
    const std::size_t n = t.numel();
    for (std::size_t lin = 0; lin < n; ++lin) {
        // lin decomposed over the output shape
        std::size_t rem = lin, src = 0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            std::size_t q = rem / out_strides[i];
            rem %= out_strides[i];
            src += q * in_strides[static_cast<std::size_t>(order[i])];
        }
        out.data[lin] = t.data[src];
    }
    return out;
}

}  // namespace tma
