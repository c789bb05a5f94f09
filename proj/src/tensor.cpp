#include "rnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rnet/errors.hpp"

namespace rnet {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw DomainError("tensor shape must have at least one axis");
    for (auto d : shape) {
        if (d == 0) throw DomainError("tensor dimension must be positive, got " + shape_string(shape));
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* name) {
    require(t.rank() == rank, std::string(name) + " must have rank " + std::to_string(rank) +
                                  ", got shape " + shape_string(t.shape()));
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw DomainError("data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_string(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    check_shape(shape);
    if (shape_size(shape) != size()) {
        throw DomainError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) noexcept {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
}

Stride::Stride(std::int64_t zeta) {
    if (zeta < 1) throw DomainError("stride must be >= 1, got " + std::to_string(zeta));
    zeta_ = static_cast<std::size_t>(zeta);
}

std::size_t valid_length(std::size_t n, std::size_t k, Stride stride) {
    require(k >= 1 && k <= n, "window of length " + std::to_string(k) + " exceeds extent " +
                                  std::to_string(n));
    return (n - k) / stride.value() + 1;
}

Tensor conv_valid_1d(const Tensor& x, const Tensor& u, Stride stride) {
    require_rank(x, 1, "input");
    require_rank(u, 1, "kernel");
    const std::size_t len = x.size();
    const std::size_t k = u.size();
    require(k <= len, "kernel longer than input");
    const std::size_t n = valid_length(len, k, stride);
    const std::size_t z = stride.value();
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += u[j] * x[z * i + j];
        out[i] = acc;
    }
    return out;
}

Tensor conv_valid_2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Stride stride) {
    require_rank(input, 3, "input");
    require_rank(kernels, 4, "kernels");
    require_rank(bias, 1, "bias");
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    require(kernels.dim(1) == cin, "kernel expects " + std::to_string(kernels.dim(1)) +
                                       " input channels, input has " + std::to_string(cin));
    require(bias.size() == cout, "bias length must equal output channel count");
    require(kh <= h && kw <= w, "kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                    " exceeds input extent " + std::to_string(h) + "x" +
                                    std::to_string(w));
    const std::size_t oh = valid_length(h, kh, stride), ow = valid_length(w, kw, stride);
    const std::size_t z = stride.value();

    Tensor out({cout, oh, ow});
    const double* in = input.data().data();
    const double* kp = kernels.data().data();
    double* op = out.data().data();
    for (std::size_t o = 0; o < cout; ++o) {
        const double* ko = kp + o * cin * kh * kw;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cin; ++c) {
                    const double* kc = ko + c * kh * kw;
                    const double* ic = in + c * h * w;
                    for (std::size_t a = 0; a < kh; ++a) {
                        const double* row = ic + (z * i + a) * w + z * j;
                        const double* krow = kc + a * kw;
                        for (std::size_t b = 0; b < kw; ++b) acc += krow[b] * row[b];
                    }
                }
                op[(o * oh + i) * ow + j] = acc + bias[o];
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    // NaN passes through so divergence surfaces as a non-finite loss
    for (double& v : out.data()) v = (v > 0.0 || std::isnan(v)) ? v : 0.0;
    return out;
}

Tensor max_pool_2d(const Tensor& input, std::size_t window, Stride stride) {
    require_rank(input, 3, "input");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(window >= 1 && window <= h && window <= w,
            "pool window " + std::to_string(window) + " exceeds extent " + std::to_string(h) + "x" +
                std::to_string(w));
    const std::size_t oh = valid_length(h, window, stride), ow = valid_length(w, window, stride);
    const std::size_t z = stride.value();
    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                double best = input.at(ch, z * i, z * j);
                for (std::size_t a = 0; a < window; ++a) {
                    for (std::size_t b = 0; b < window; ++b) {
                        best = std::max(best, input.at(ch, z * i + a, z * j + b));
                    }
                }
                out.at(ch, i, j) = best;
            }
        }
    }
    return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
    require_rank(w, 2, "matrix");
    require_rank(x, 1, "vector");
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    require(cols == x.size(), "matrix has " + std::to_string(cols) + " columns, vector has length " +
                                  std::to_string(x.size()));
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w.data().data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_rank(a, 1, "left operand");
    require_rank(b, 1, "right operand");
    return add_tensors(a, b);
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out = x;
    for (double& v : out.data()) v *= factor;
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), "dot of lengths " + std::to_string(a.size()) + " and " +
                                      std::to_string(b.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

Tensor add_tensors(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "shape mismatch " + shape_string(a.shape()) + " vs " +
                                        shape_string(b.shape()));
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
    require(!parts.empty(), "nothing to concatenate");
    const std::size_t h = parts[0].rank() == 3 ? parts[0].dim(1) : 0;
    const std::size_t w = parts[0].rank() == 3 ? parts[0].dim(2) : 0;
    std::size_t channels = 0;
    for (const auto& p : parts) {
        require_rank(p, 3, "concatenated part");
        require(p.dim(1) == h && p.dim(2) == w,
                "spatial mismatch in concatenation: " + shape_string(p.shape()));
        channels += p.dim(0);
    }
    std::vector<double> data;
    data.reserve(channels * h * w);
    for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
    return Tensor({channels, h, w}, std::move(data));
}

ConvGrads conv_valid_2d_backward(const Tensor& input, const Tensor& kernels, Stride stride,
                                 const Tensor& grad_out) {
    const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const std::size_t oh = valid_length(h, kh, stride), ow = valid_length(w, kw, stride);
    require(grad_out.shape() == Shape{cout, oh, ow}, "conv upstream gradient has shape " +
                                                         shape_string(grad_out.shape()));
    const std::size_t z = stride.value();

    ConvGrads g{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({cout})};
    const double* in = input.data().data();
    const double* kp = kernels.data().data();
    double* gi = g.input.data().data();
    double* gk = g.kernels.data().data();
    for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const double up = grad_out.at(o, i, j);
                g.bias[o] += up;
                if (up == 0.0) continue;
                for (std::size_t c = 0; c < cin; ++c) {
                    const std::size_t kbase = (o * cin + c) * kh * kw;
                    for (std::size_t a = 0; a < kh; ++a) {
                        const std::size_t ibase = (c * h + z * i + a) * w + z * j;
                        for (std::size_t b = 0; b < kw; ++b) {
                            gk[kbase + a * kw + b] += up * in[ibase + b];
                            gi[ibase + b] += up * kp[kbase + a * kw + b];
                        }
                    }
                }
            }
        }
    }
    return g;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    require(input.shape() == grad_out.shape(), "relu upstream gradient shape mismatch");
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(input[i] > 0.0)) g[i] = 0.0;
    }
    return g;
}

Tensor max_pool_2d_backward(const Tensor& input, std::size_t window, Stride stride,
                            const Tensor& grad_out) {
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t oh = valid_length(h, window, stride), ow = valid_length(w, window, stride);
    require(grad_out.shape() == Shape{c, oh, ow}, "pool upstream gradient shape mismatch");
    const std::size_t z = stride.value();
    Tensor g(input.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                std::size_t bi = z * i, bj = z * j;
                for (std::size_t a = 0; a < window; ++a) {
                    for (std::size_t b = 0; b < window; ++b) {
                        if (input.at(ch, z * i + a, z * j + b) > input.at(ch, bi, bj)) {
                            bi = z * i + a;
                            bj = z * j + b;
                        }
                    }
                }
                g.at(ch, bi, bj) += grad_out.at(ch, i, j);
            }
        }
    }
    return g;
}

Tensor matvec_transposed(const Tensor& w, const Tensor& g) {
    require_rank(w, 2, "matrix");
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    require(g.size() == rows, "transposed product length mismatch");
    Tensor out({cols});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w.data().data() + r * cols;
        const double gr = g[r];
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * gr;
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& t, std::span<const std::size_t> channels) {
    require_rank(t, 3, "split input");
    const std::size_t plane = t.dim(1) * t.dim(2);
    std::vector<Tensor> parts;
    std::size_t offset = 0;
    for (auto c : channels) {
        require(offset + c <= t.dim(0), "channel split exceeds tensor");
        auto first = t.data().begin() + static_cast<std::ptrdiff_t>(offset * plane);
        parts.emplace_back(Shape{c, t.dim(1), t.dim(2)},
                           std::vector<double>(first, first + static_cast<std::ptrdiff_t>(c * plane)));
        offset += c;
    }
    require(offset == t.dim(0), "channel split does not cover tensor");
    return parts;
}

}  // namespace rnet
