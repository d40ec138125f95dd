#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wxgen/rng.hpp"
#include "wxgen/tensor.hpp"

namespace wxgen {

enum class OutputActivation { softplus, relu };

std::string to_string(OutputActivation a);
OutputActivation output_activation_from_string(const std::string& s);

// Architecture knobs. The kernel is fixed at 3x3x3 and there are exactly two
// stride-2 stages in each direction, so every input extent must be divisible
// by 4.
struct ModelConfig {
    size_t input_t = 32;
    size_t input_h = 32;
    size_t input_w = 32;
    size_t conv_channels = 128;      // encoder conv channels
    size_t bottleneck_width = 500;   // encoder dense width
    size_t latent_dim = 30;
    size_t decoder_channels = 256;   // channels of the decoder reshape stage
    OutputActivation output_activation = OutputActivation::softplus;

    static ModelConfig paper();  // 32^3 input, latent 30
    static ModelConfig desk();   // 16^3 input, latent 8; minutes on one core

    void validate() const;
    size_t pixel_count() const { return input_t * input_h * input_w; }
    size_t enc_flat() const {
        return conv_channels * (input_t / 4) * (input_h / 4) * (input_w / 4);
    }
    size_t dec_flat() const {
        return decoder_channels * (input_t / 4) * (input_h / 4) * (input_w / 4);
    }
};

// Every learnable tensor of the model. Tensors are shared handles: copying the
// struct aliases the same buffers; use clone() for a snapshot.
struct VaeParams {
    Tensor conv1_1_w, conv1_1_b;
    Tensor conv1_2_w, conv1_2_b;
    Tensor dense_bn_w, dense_bn_b;
    Tensor dense_mu_w, dense_mu_b;
    Tensor dense_logvar_w, dense_logvar_b;
    Tensor dense_w, dense_b;  // decoder dense
    Tensor convt2_1_w, convt2_1_b;
    Tensor convt2_2_w, convt2_2_b;
    Tensor convt2_3_w, convt2_3_b;

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    std::vector<Tensor> list();  // handle copies in named() order
    std::vector<std::string> names() const;
    VaeParams clone() const;
    void clear_grads();
};

// Kaiming-style uniform fan-in init for weights, zero biases; values are
// quantized to the float32 grid. Draw order is fixed by named().
VaeParams init_params(const ModelConfig& config, Rng& rng);

// Name -> shape of every learnable tensor, in named() order, without
// allocating the tensors (used to validate checkpoints against a config).
std::vector<std::pair<std::string, std::vector<size_t>>> param_shapes(const ModelConfig& config);

struct LatentStats {
    Tensor mu;       // [N, k]
    Tensor log_var;  // [N, k], clamped to [-10, 10]
};

// conv(s2) -> ReLU -> conv(s2) -> ReLU -> flatten -> dense -> ReLU -> two heads.
LatentStats encode(const Tensor& x, const VaeParams& params, const ModelConfig& config);

// z = mu + exp(0.5 log_var) * noise. The noise is supplied by the caller.
Tensor reparameterize(const LatentStats& stats, const Tensor& noise);

// dense -> reshape -> ReLU -> convt(s2) -> ReLU -> convt(s2) -> ReLU ->
// convt(s1, 1 filter) -> output activation. Output extents equal the input's.
Tensor decode(const Tensor& z, const VaeParams& params, const ModelConfig& config);

// Closed-form KL(N(mu, sigma^2) || N(0,1)) summed over latent dims, averaged
// over the batch.
Tensor kl_normal(const LatentStats& stats);

struct LossBreakdown {
    Tensor total;  // rec + beta * reg
    Tensor rec;    // mean squared error over all pixels and batch
    Tensor reg;    // kl_normal
    double beta = 0.0;
};

LossBreakdown elbo_loss(const Tensor& x, const Tensor& xhat, const LatentStats& stats,
                        double beta);

struct VaeForward {
    LatentStats stats;
    Tensor z;
    Tensor xhat;
};

// One full training-style pass: encode, reparameterize with the given noise,
// decode.
VaeForward vae_forward(const Tensor& x, const VaeParams& params, const ModelConfig& config,
                       const Tensor& noise);

}  // namespace wxgen
