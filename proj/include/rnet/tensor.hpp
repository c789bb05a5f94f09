#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. A value type: copies are deep.
///
/// Every dimension is >= 1 and data().size() == product of the shape. A
/// default-constructed tensor is a rank-1 tensor holding one zero.
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0) {}
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    /// Rank-1 tensor from a list of values.
    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    static Tensor filled(Shape shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Rank-3 (channel, row, column) access.
    double& at(std::size_t c, std::size_t i, std::size_t j) {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const {
        return data_[(c * shape_[1] + i) * shape_[2] + j];
    }

    /// Same data under a new shape of equal element count.
    Tensor reshaped(Shape shape) const;
    Tensor flattened() const { return reshaped({size()}); }

    bool all_finite() const noexcept;

    /// Bit-exact equality of shape and values.
    friend bool operator==(const Tensor& a, const Tensor& b) noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Window shift between consecutive outputs; always >= 1.
class Stride {
public:
    explicit Stride(std::int64_t zeta);
    std::size_t value() const noexcept { return zeta_; }

private:
    std::size_t zeta_;
};

/// Output length of a valid-mode window scan: floor((n - k) / stride) + 1.
std::size_t valid_length(std::size_t n, std::size_t k, Stride stride);

// ---- forward kernels ------------------------------------------------------

/// out[k] = sum_j u[j] * x[stride * k + j]. Cross-correlation orientation,
/// full-overlap positions only.
Tensor conv_valid_1d(const Tensor& x, const Tensor& u, Stride stride);

/// input C_in x H x W, kernels C_out x C_in x Kh x Kw, bias C_out.
/// For every output the sum runs channel, kernel row, kernel column in that
/// order, and the bias is added last. No activation.
Tensor conv_valid_2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                     Stride stride);

Tensor relu(const Tensor& x);

/// Per-channel window maxima over a C x H x W tensor, valid mode.
Tensor max_pool_2d(const Tensor& input, std::size_t window, Stride stride);

Tensor matvec(const Tensor& w, const Tensor& x);
/// Sum of two rank-1 tensors.
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
double dot(const Tensor& a, const Tensor& b);
/// Elementwise sum of equally shaped tensors (residual merge).
Tensor add_tensors(const Tensor& a, const Tensor& b);
/// Stacks C_i x H x W tensors into (sum C_i) x H x W.
Tensor concat_channels(std::span<const Tensor> parts);

// ---- reverse-mode kernels -------------------------------------------------

struct ConvGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

ConvGrads conv_valid_2d_backward(const Tensor& input, const Tensor& kernels, Stride stride,
                                 const Tensor& grad_out);

Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// Routes each output gradient to the first maximal element of its window.
Tensor max_pool_2d_backward(const Tensor& input, std::size_t window, Stride stride,
                            const Tensor& grad_out);

/// W^T g.
Tensor matvec_transposed(const Tensor& w, const Tensor& g);

/// Splits the channel axis back into parts with the given channel counts.
std::vector<Tensor> split_channels(const Tensor& t, std::span<const std::size_t> channels);

}  // namespace rnet
