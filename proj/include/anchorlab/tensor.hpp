#pragma once

#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "anchorlab/core.hpp"

namespace anchorlab::diffcore {

struct ShapeMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotScalarError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotStochasticError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major 64-bit tensor. grad is allocated when requires_grad is set.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.assign(t.numel_from_shape(), 0.0);
        t.requires_grad = requires_grad;
        if (requires_grad) {
            t.grad.assign(t.data.size(), 0.0);
        }
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<double> data) {
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(data);
        if (t.data.size() != t.numel_from_shape()) {
            throw ShapeMismatchError("Tensor::from: data length != product of shape");
        }
        return t;
    }

    size_t numel() const { return data.size(); }

    size_t numel_from_shape() const {
        size_t n = 1;
        for (int d : shape) {
            if (d <= 0) {
                throw ShapeMismatchError("Tensor: nonpositive dimension");
            }
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    int rows() const { return shape.size() == 2 ? shape[0] : throw_rank(); }
    int cols() const { return shape.size() == 2 ? shape[1] : throw_rank(); }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

    void zero_grad() {
        if (requires_grad) {
            grad.assign(data.size(), 0.0);
        }
    }

private:
    [[noreturn]] int throw_rank() const {
        throw ShapeMismatchError("Tensor: 2-D access on tensor of rank " +
                                 std::to_string(shape.size()));
    }
};

}  // namespace anchorlab::diffcore
