#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wxgen {

namespace detail {
struct TensorImpl {
    std::vector<size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> backprop;  // cleared once run; graphs are single-use
};
}  // namespace detail

// RAII switch that suspends graph construction (inference, finite differences).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

bool grad_enabled();

// Dense row-major array of doubles with optional reverse-mode gradient tracking.
// Parameter values are kept on the float32 grid (see quantize_f32/adam_step) so
// the float32 checkpoint format round-trips bitwise.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<size_t> shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<size_t> shape, std::vector<double> data,
                            bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<size_t>& shape() const;
    size_t size() const;
    bool requires_grad() const;
    std::vector<double>& data();
    const std::vector<double>& data() const;
    bool has_grad() const;
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void clear_grad();
    double item() const;  // value of a one-element tensor

    // Deep copy of the values; no graph edges, same requires_grad flag.
    Tensor detached_clone() const;

    const std::shared_ptr<detail::TensorImpl>& impl() const;

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

std::string shape_str(const std::vector<size_t>& shape);

// Elementwise and shape ops. Binary ops require identical shapes; there is no
// broadcasting beyond the scalar variants below.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);   // subgradient at 0 is 0
Tensor softplus(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);  // grad passes iff lo <= x <= hi
Tensor sum(const Tensor& a);    // -> shape {1}
Tensor mean(const Tensor& a);   // -> shape {1}
Tensor reshape(const Tensor& a, std::vector<size_t> shape);  // copies data

// out[n,o] = bias[o] + sum_i input[n,i] * weight[o,i]
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

size_t conv3_out_extent(size_t in, size_t kernel, size_t stride, size_t padding);
size_t conv3_transpose_out_extent(size_t in, size_t kernel, size_t stride, size_t padding,
                                  size_t output_padding);

// Cross-correlation (no kernel flip). input [N,Ci,D,H,W], kernel [Co,Ci,kd,kh,kw],
// bias [Co]. Output spatial extent floor((in + 2p - k)/s) + 1.
Tensor conv3(const Tensor& input, const Tensor& kernel, const Tensor& bias, size_t stride,
             size_t padding);

// Adjoint of conv3 for matching stride/padding. input [N,Ci,D,H,W],
// kernel [Ci,Co,kd,kh,kw], bias [Co]. Output extent (in-1)s - 2p + k + output_padding.
Tensor conv3_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                       size_t stride, size_t padding, size_t output_padding);

// Reverse-mode sweep from a scalar loss. Populates grad on every tracked tensor
// reachable from it. Graphs are single-use; a second backward into leaves that
// still carry gradients raises an error instead of silently accumulating.
void backward(const Tensor& loss);

// Rounds every value to the nearest float32-representable double.
void quantize_f32(Tensor& t);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    uint64_t step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update over all params, reading each param's grad
// buffer. `names` (if given) labels parameters in error messages. Updated
// values are re-quantized to the float32 grid.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& config,
               std::span<const std::string> names = {});

double grad_norm(std::span<const Tensor> params);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds max_norm.
void clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace wxgen
