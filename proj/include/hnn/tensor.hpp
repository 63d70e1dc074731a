#pragma once

// Dense double-precision tensors with tape-free reverse-mode differentiation.
//
// A Tensor is a shared handle onto a node of the computation graph: copying a
// Tensor aliases the same storage (use clone() for a deep copy). Every
// primitive below records its inputs and a local gradient rule whenever at
// least one input requires a gradient; backward() walks the resulting DAG in
// reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hnn/errors.hpp"

namespace hnn {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            os << "x";
        }
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad.assign(value.size(), 0.0);
        }
    }
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size()) {
            throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                                 std::to_string(shape_numel(shape)) + " values, got " +
                                 std::to_string(values.size()));
        }
        for (auto d : shape) {
            if (d == 0) {
                throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
            }
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        if (requires_grad) {
            node->ensure_grad();
        }
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        auto n = shape_numel(shape);
        return from(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
    std::size_t cols() const { return node_->shape.back(); }

    std::span<const double> data() const { return node_->value; }
    /// Direct write access; only meaningful on leaves (parameters, finite-difference probes).
    std::span<double> mutable_data() { return node_->value; }
    double item() const {
        if (size() != 1) {
            throw DimensionError("item() on tensor of shape " + shape_str(shape()));
        }
        return node_->value[0];
    }
    double operator[](std::size_t i) const { return node_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on) {
            node_->ensure_grad();
        }
    }

    /// Gradient buffer; zeros when nothing has been propagated yet.
    std::span<const double> grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

    const std::string& op() const { return node_->op; }

    /// Deep copy of the values with no history.
    Tensor clone(bool requires_grad = false) const { return from(shape(), node_->value, requires_grad); }
    Tensor detach() const { return clone(false); }

    bool same_node(const Tensor& o) const { return node_ == o.node_; }

    // Low-level construction hook used by the primitives.
    static Tensor make_result(Shape shape, std::vector<double> values, std::string op,
                              std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->op = std::move(op);
        bool any = false;
        for (const auto& in : inputs) {
            any = any || in.requires_grad();
        }
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (auto& in : inputs) {
                node->inputs.push_back(in.node_);
            }
            node->backward = std::move(backward);
        }
        return Tensor(std::move(node));
    }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Accumulates into input i's grad only when that input participates.
inline std::vector<double>* grad_of(Node& self, std::size_t i) {
    auto& in = *self.inputs[i];
    if (!in.requires_grad) {
        return nullptr;
    }
    in.ensure_grad();
    return &in.grad;
}

inline void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + " expects a matrix, got shape " + shape_str(t.shape()));
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

template <class F, class DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
    std::vector<double> out(x.size());
    auto xs = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(xs[i]);
    }
    return Tensor::make_result(x.shape(), std::move(out), name, {x}, [df](Node& self) {
        auto* g = grad_of(self, 0);
        if (g == nullptr) {
            return;
        }
        const auto& xv = self.inputs[0]->value;
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            (*g)[i] += self.grad[i] * df(xv[i], self.value[i]);
        }
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = &bv[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                orow[j] += aip * brow[j];
            }
        }
    }
    return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        const auto& go = self.grad;
        if (auto* ga = detail::grad_of(self, 0)) {
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        s += go[i * n + j] * bv[p * n + j];
                    }
                    (*ga)[i * k + p] += s;
                }
            }
        }
        if (auto* gb = detail::grad_of(self, 1)) {
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        (*gb)[p * n + j] += aip * go[i * n + j];
                    }
                }
            }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::require_rank2(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    auto av = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = av[i * n + j];
        }
    }
    return Tensor::make_result({n, m}, std::move(out), "transpose", {a}, [m, n](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*g)[i * n + j] += self.grad[j * m + i];
                }
            }
        }
    });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), "reshape", {a}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), "add", {a, b}, [](detail::Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (auto* g = detail::grad_of(self, k)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    (*g)[i] += self.grad[i];
                }
            }
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), "sub", {a, b}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
        if (auto* g = detail::grad_of(self, 1)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] -= self.grad[i];
            }
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * b[i];
    }
    return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i] * bv[i];
            }
        }
        if (auto* g = detail::grad_of(self, 1)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i] * av[i];
            }
        }
    });
}

/// x[m x n] + b[n], b broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    const std::size_t n = x.cols();
    if (b.size() != n) {
        throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " does not match last dim of " +
                             shape_str(x.shape()));
    }
    const std::size_t m = x.size() / n;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = x[i * n + j] + b[j];
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), "add_bias", {x, b}, [m, n](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
        if (auto* g = detail::grad_of(self, 1)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*g)[j] += self.grad[i * n + j];
                }
            }
        }
    });
}

inline Tensor scale(const Tensor& x, double s) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * s;
    }
    return Tensor::make_result(x.shape(), std::move(out), "scale", {x}, [s](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i] * s;
            }
        }
    });
}

inline Tensor add_scalar(const Tensor& x, double s) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] + s;
    }
    return Tensor::make_result(x.shape(), std::move(out), "add_scalar", {x}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                (*g)[i] += self.grad[i];
            }
        }
    });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor exp(const Tensor& x) {
    return detail::unary(
        x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
    for (double v : x.data()) {
        if (!(v > 0.0)) {
            throw DomainError("log of nonpositive value " + std::to_string(v));
        }
    }
    return detail::unary(
        x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)), evaluated as max(z, 0) + log1p(exp(-|z|)).
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary(
        x, "sigmoid", [](double v) { return sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor softplus(const Tensor& x) {
    return detail::unary(
        x, "softplus", [](double v) { return softplus(v); }, [](double v, double) { return sigmoid(v); });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

/// Exact (erf) GELU.
inline Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary(
        x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            return cdf + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) {
        s += v;
    }
    return Tensor::make_result({1}, {s}, "sum", {x}, [](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (auto& gi : *g) {
                gi += self.grad[0];
            }
        }
    });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

/// Mean of a matrix along axis 0 (result [cols]) or axis 1 (result [rows]).
inline Tensor mean_axis(const Tensor& x, std::size_t axis) {
    detail::require_rank2(x, "mean_axis");
    if (axis > 1) {
        throw IndexError("mean_axis: axis " + std::to_string(axis) + " out of range for a matrix");
    }
    const std::size_t m = x.dim(0), n = x.dim(1);
    const std::size_t len = axis == 0 ? n : m;
    const double inv = 1.0 / static_cast<double>(axis == 0 ? m : n);
    std::vector<double> out(len, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[axis == 0 ? j : i] += x[i * n + j];
        }
    }
    for (auto& v : out) {
        v *= inv;
    }
    return Tensor::make_result({len}, std::move(out), "mean_axis", {x}, [m, n, axis, inv](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*g)[i * n + j] += self.grad[axis == 0 ? j : i] * inv;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization

inline Tensor softmax_last_dim(const Tensor& x) {
    const std::size_t n = x.cols();
    const std::size_t m = x.size() / n;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &x.data()[i * n];
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            z += out[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] /= z;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), "softmax", {x}, [m, n](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    dot += self.grad[i * n + j] * self.value[i * n + j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    (*g)[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
                }
            }
        }
    });
}

inline Tensor log_softmax_last_dim(const Tensor& x) {
    const std::size_t n = x.cols();
    const std::size_t m = x.size() / n;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &x.data()[i * n];
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            z += std::exp(row[j] - mx);
        }
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = row[j] - lse;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), "log_softmax", {x}, [m, n](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    gs += self.grad[i * n + j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    (*g)[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gs;
                }
            }
        }
    });
}

/// Normalizes every last-dimension slice to zero mean / unit population
/// variance, then applies gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (!(eps > 0.0)) {
        throw ParameterError("layer_norm: eps must be positive, got " + std::to_string(eps));
    }
    const std::size_t n = x.cols();
    if (gain.size() != n || bias.size() != n) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match last dim of " + shape_str(x.shape()));
    }
    const std::size_t m = x.size() / n;
    std::vector<double> out(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &x.data()[i * n];
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mu += row[j];
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            var += (row[j] - mu) * (row[j] - mu);
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mu) * is;
            (*xhat)[i * n + j] = h;
            out[i * n + j] = h * gain[j] + bias[j];
        }
    }
    return Tensor::make_result(
        x.shape(), std::move(out), "layer_norm", {x, gain, bias}, [m, n, xhat, inv_std](detail::Node& self) {
            const auto& gv = self.inputs[1]->value;
            if (auto* gx = detail::grad_of(self, 0)) {
                const double dn = static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[i * n + j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * (*xhat)[i * n + j];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = self.grad[i * n + j] * gv[j];
                        (*gx)[i * n + j] +=
                            (*inv_std)[i] * (dh - sum_dh / dn - (*xhat)[i * n + j] * sum_dh_h / dn);
                    }
                }
            }
            if (auto* gg = detail::grad_of(self, 1)) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        (*gg)[j] += self.grad[i * n + j] * (*xhat)[i * n + j];
                    }
                }
            }
            if (auto* gb = detail::grad_of(self, 2)) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        (*gb)[j] += self.grad[i * n + j];
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Structural ops

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_rows");
        if (p.cols() != n) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        offsets.push_back(out.size());
        out.insert(out.end(), p.data().begin(), p.data().end());
        m += p.rows();
    }
    return Tensor::make_result({m, n}, std::move(out), "concat_rows", parts, [offsets](detail::Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            if (auto* g = detail::grad_of(self, k)) {
                for (std::size_t i = 0; i < g->size(); ++i) {
                    (*g)[i] += self.grad[offsets[k] + i];
                }
            }
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    std::vector<std::size_t> col_offsets, widths;
    for (const auto& p : parts) {
        detail::require_rank2(p, "concat_cols");
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        col_offsets.push_back(n);
        widths.push_back(p.cols());
        n += p.cols();
    }
    std::vector<double> out(m * n);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < widths[k]; ++j) {
                out[i * n + col_offsets[k] + j] = parts[k][i * widths[k] + j];
            }
        }
    }
    return Tensor::make_result(
        {m, n}, std::move(out), "concat_cols", parts, [m, n, col_offsets, widths](detail::Node& self) {
            for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                if (auto* g = detail::grad_of(self, k)) {
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < widths[k]; ++j) {
                            (*g)[i * widths[k] + j] += self.grad[i * n + col_offsets[k] + j];
                        }
                    }
                }
            }
        });
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    detail::require_rank2(x, "slice_cols");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (begin >= end || end > n) {
        throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            out[i * w + j] = x[i * n + begin + j];
        }
    }
    return Tensor::make_result({m, w}, std::move(out), "slice_cols", {x}, [m, n, w, begin](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    (*g)[i * n + begin + j] += self.grad[i * w + j];
                }
            }
        }
    });
}

/// Rows selected by index (duplicates allowed); gradients scatter-add back.
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& rows) {
    detail::require_rank2(table, "gather_rows");
    const std::size_t v = table.dim(0), n = table.dim(1);
    if (rows.empty()) {
        throw IndexError("gather_rows: empty index list");
    }
    std::vector<double> out(rows.size() * n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= v) {
            throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                             shape_str(table.shape()));
        }
        std::copy_n(&table.data()[rows[i] * n], n, &out[i * n]);
    }
    return Tensor::make_result({rows.size(), n}, std::move(out), "gather_rows", {table}, [rows, n](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*g)[rows[i] * n + j] += self.grad[i * n + j];
                }
            }
        }
    });
}

inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    detail::require_rank2(x, "slice_rows");
    if (begin >= end || end > x.dim(0)) {
        throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
    }
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return gather_rows(x, idx);
}

/// out[i] = x[i, cols[i]].
inline Tensor pick(const Tensor& x, const std::vector<std::size_t>& cols) {
    detail::require_rank2(x, "pick");
    const std::size_t m = x.dim(0), n = x.dim(1);
    if (cols.size() != m) {
        throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " + shape_str(x.shape()));
    }
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (cols[i] >= n) {
            throw IndexError("pick: column " + std::to_string(cols[i]) + " out of range for " +
                             shape_str(x.shape()));
        }
        out[i] = x[i * n + cols[i]];
    }
    return Tensor::make_result({m}, std::move(out), "pick", {x}, [cols, n](detail::Node& self) {
        if (auto* g = detail::grad_of(self, 0)) {
            for (std::size_t i = 0; i < cols.size(); ++i) {
                (*g)[i * n + cols[i]] += self.grad[i];
            }
        }
    });
}

/// Inverted dropout; identity when rate == 0 or rng is null.
inline Tensor dropout(const Tensor& x, double rate, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (rate == 0.0 || rng == nullptr) {
        return x;
    }
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<double> m(x.size());
    for (auto& v : m) {
        v = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
    }
    return mul(x, Tensor::from(x.shape(), std::move(m)));
}

// ---------------------------------------------------------------------------
// Backward pass

/// Nodes reachable from `root` that participate in differentiation, inputs first.
inline std::vector<detail::Node*> topological_order(const Tensor& root) {
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    if (!root.requires_grad()) {
        return order;
    }
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

/// Op names along the recorded computation, inputs before consumers.
inline std::vector<std::string> computation_record(const Tensor& root) {
    std::vector<std::string> ops;
    for (auto* n : topological_order(root)) {
        ops.push_back(n->op);
    }
    return ops;
}

/// Propagates d(loss)/d(x) into every reachable leaf with requires_grad.
/// Leaf gradients accumulate across calls; intermediate buffers are reset.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw DimensionError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    auto order = topological_order(loss);
    if (order.empty()) {
        return;
    }
    for (auto* n : order) {
        if (n->backward) {
            n->grad.assign(n->value.size(), 0.0);
        } else {
            n->ensure_grad();
        }
    }
    order.back()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) {
            (*it)->backward(**it);
        }
    }
}

// ---------------------------------------------------------------------------
// Initialization

/// Normal(mean, stddev) samples rejected outside mean +/- truncation * stddev.
inline Tensor init_truncated_normal(Shape shape, double mean, double stddev, double truncation, Rng& rng,
                                    bool requires_grad = true) {
    if (!(stddev > 0.0)) {
        throw ParameterError("init_truncated_normal: stddev must be positive, got " + std::to_string(stddev));
    }
    if (!(truncation > 0.0)) {
        throw ParameterError("init_truncated_normal: truncation must be positive");
    }
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) {
        double z = dist(rng);
        while (std::abs(z) > truncation) {
            z = dist(rng);
        }
        v = mean + stddev * z;
    }
    return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

}  // namespace hnn
