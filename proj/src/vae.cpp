#include "wxgen/vae.hpp"

#include <cmath>
#include <cstddef>

#include "wxgen/error.hpp"

namespace wxgen {

namespace {

constexpr size_t kKernel = 3;
constexpr double kLogVarClamp = 10.0;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

}  // namespace

std::string to_string(OutputActivation a) {
    return a == OutputActivation::softplus ? "softplus" : "relu";
}

OutputActivation output_activation_from_string(const std::string& s) {
    if (s == "softplus") return OutputActivation::softplus;
    if (s == "relu") return OutputActivation::relu;
    throw ValidationError("unknown output activation '" + s + "' (expected softplus or relu)");
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.input_t = c.input_h = c.input_w = 16;
    c.conv_channels = 8;
    c.bottleneck_width = 64;
    c.latent_dim = 8;
    c.decoder_channels = 16;
    return c;
}

void ModelConfig::validate() const {
    auto div4 = [](size_t e) { return e >= 4 && e % 4 == 0; };
    require(div4(input_t) && div4(input_h) && div4(input_w),
            "model input extents must be divisible by 4, got [" + std::to_string(input_t) +
                "," + std::to_string(input_h) + "," + std::to_string(input_w) + "]");
    require(conv_channels >= 1, "conv_channels must be >= 1");
    require(bottleneck_width >= 1, "bottleneck_width must be >= 1");
    require(latent_dim >= 1, "latent_dim must be >= 1");
    require(decoder_channels >= 1, "decoder_channels must be >= 1");
}

std::vector<std::pair<std::string, Tensor*>> VaeParams::named() {
    return {
        {"conv1_1.weight", &conv1_1_w},   {"conv1_1.bias", &conv1_1_b},
        {"conv1_2.weight", &conv1_2_w},   {"conv1_2.bias", &conv1_2_b},
        {"dense_bn.weight", &dense_bn_w}, {"dense_bn.bias", &dense_bn_b},
        {"dense_mu.weight", &dense_mu_w}, {"dense_mu.bias", &dense_mu_b},
        {"dense_logvar.weight", &dense_logvar_w},
        {"dense_logvar.bias", &dense_logvar_b},
        {"dense.weight", &dense_w},       {"dense.bias", &dense_b},
        {"convt2_1.weight", &convt2_1_w}, {"convt2_1.bias", &convt2_1_b},
        {"convt2_2.weight", &convt2_2_w}, {"convt2_2.bias", &convt2_2_b},
        {"convt2_3.weight", &convt2_3_w}, {"convt2_3.bias", &convt2_3_b},
    };
}

std::vector<std::pair<std::string, const Tensor*>> VaeParams::named() const {
    auto mut = const_cast<VaeParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

std::vector<Tensor> VaeParams::list() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(*t);
    return out;
}

std::vector<std::string> VaeParams::names() const {
    std::vector<std::string> out;
    for (auto& [name, t] : named()) out.push_back(name);
    return out;
}

VaeParams VaeParams::clone() const {
    VaeParams copy;
    auto src = named();
    auto dst = copy.named();
    for (size_t i = 0; i < src.size(); ++i) {
        *dst[i].second = src[i].second->detached_clone();
        dst[i].second->impl()->requires_grad = true;
    }
    return copy;
}

void VaeParams::clear_grads() {
    for (auto& [name, t] : named()) t->clear_grad();
}

namespace {

Tensor init_tensor(const std::vector<size_t>& shape, size_t fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(shape, true);
    double bound = std::sqrt(6.0 / (double)fan_in);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor zero_param(const std::vector<size_t>& shape) { return Tensor::zeros(shape, true); }

}  // namespace

VaeParams init_params(const ModelConfig& config, Rng& rng) {
    config.validate();
    const size_t c = config.conv_channels;
    const size_t d = config.decoder_channels;
    const size_t k3 = kKernel * kKernel * kKernel;

    VaeParams p;
    p.conv1_1_w = init_tensor({c, 1, kKernel, kKernel, kKernel}, 1 * k3, rng);
    p.conv1_1_b = zero_param({c});
    p.conv1_2_w = init_tensor({c, c, kKernel, kKernel, kKernel}, c * k3, rng);
    p.conv1_2_b = zero_param({c});
    p.dense_bn_w = init_tensor({config.bottleneck_width, config.enc_flat()}, config.enc_flat(), rng);
    p.dense_bn_b = zero_param({config.bottleneck_width});
    p.dense_mu_w = init_tensor({config.latent_dim, config.bottleneck_width},
                               config.bottleneck_width, rng);
    p.dense_mu_b = zero_param({config.latent_dim});
    p.dense_logvar_w = init_tensor({config.latent_dim, config.bottleneck_width},
                                   config.bottleneck_width, rng);
    p.dense_logvar_b = zero_param({config.latent_dim});
    p.dense_w = init_tensor({config.dec_flat(), config.latent_dim}, config.latent_dim, rng);
    p.dense_b = zero_param({config.dec_flat()});
    p.convt2_1_w = init_tensor({d, c, kKernel, kKernel, kKernel}, d * k3, rng);
    p.convt2_1_b = zero_param({c});
    p.convt2_2_w = init_tensor({c, c, kKernel, kKernel, kKernel}, c * k3, rng);
    p.convt2_2_b = zero_param({c});
    p.convt2_3_w = init_tensor({c, 1, kKernel, kKernel, kKernel}, c * k3, rng);
    p.convt2_3_b = zero_param({1});

    for (auto& [name, t] : p.named()) quantize_f32(*t);
    return p;
}

std::vector<std::pair<std::string, std::vector<size_t>>> param_shapes(const ModelConfig& config) {
    config.validate();
    const size_t c = config.conv_channels;
    const size_t d = config.decoder_channels;
    const size_t k = kKernel;
    return {
        {"conv1_1.weight", {c, 1, k, k, k}},
        {"conv1_1.bias", {c}},
        {"conv1_2.weight", {c, c, k, k, k}},
        {"conv1_2.bias", {c}},
        {"dense_bn.weight", {config.bottleneck_width, config.enc_flat()}},
        {"dense_bn.bias", {config.bottleneck_width}},
        {"dense_mu.weight", {config.latent_dim, config.bottleneck_width}},
        {"dense_mu.bias", {config.latent_dim}},
        {"dense_logvar.weight", {config.latent_dim, config.bottleneck_width}},
        {"dense_logvar.bias", {config.latent_dim}},
        {"dense.weight", {config.dec_flat(), config.latent_dim}},
        {"dense.bias", {config.dec_flat()}},
        {"convt2_1.weight", {d, c, k, k, k}},
        {"convt2_1.bias", {c}},
        {"convt2_2.weight", {c, c, k, k, k}},
        {"convt2_2.bias", {c}},
        {"convt2_3.weight", {c, 1, k, k, k}},
        {"convt2_3.bias", {1}},
    };
}

namespace {

void check_encode_input(const Tensor& x, const ModelConfig& config) {
    const auto& s = x.shape();
    bool ok = s.size() == 5 && s[1] == 1 && s[2] == config.input_t && s[3] == config.input_h &&
              s[4] == config.input_w;
    require(ok, "encoder expects input [N,1," + std::to_string(config.input_t) + "," +
                    std::to_string(config.input_h) + "," + std::to_string(config.input_w) +
                    "], got " + shape_str(x.shape()));
}

}  // namespace

LatentStats encode(const Tensor& x, const VaeParams& params, const ModelConfig& config) {
    check_encode_input(x, config);
    Tensor h = relu(conv3(x, params.conv1_1_w, params.conv1_1_b, 2, 1));
    h = relu(conv3(h, params.conv1_2_w, params.conv1_2_b, 2, 1));
    h = reshape(h, {x.shape()[0], config.enc_flat()});
    h = relu(dense(h, params.dense_bn_w, params.dense_bn_b));
    LatentStats stats;
    stats.mu = dense(h, params.dense_mu_w, params.dense_mu_b);
    stats.log_var = clamp(dense(h, params.dense_logvar_w, params.dense_logvar_b), -kLogVarClamp,
                          kLogVarClamp);
    return stats;
}

Tensor reparameterize(const LatentStats& stats, const Tensor& noise) {
    require(noise.shape() == stats.mu.shape(),
            "reparameterize noise shape " + shape_str(noise.shape()) + " must match mu shape " +
                shape_str(stats.mu.shape()));
    return add(stats.mu, mul(exp(scale(stats.log_var, 0.5)), noise));
}

Tensor decode(const Tensor& z, const VaeParams& params, const ModelConfig& config) {
    const auto& s = z.shape();
    require(s.size() == 2 && s[1] == config.latent_dim,
            "decoder expects latent [N," + std::to_string(config.latent_dim) + "], got " +
                shape_str(z.shape()));
    const size_t n = s[0];
    Tensor h = dense(z, params.dense_w, params.dense_b);
    h = reshape(h, {n, config.decoder_channels, config.input_t / 4, config.input_h / 4,
                    config.input_w / 4});
    h = relu(h);
    h = relu(conv3_transpose(h, params.convt2_1_w, params.convt2_1_b, 2, 1, 1));
    h = relu(conv3_transpose(h, params.convt2_2_w, params.convt2_2_b, 2, 1, 1));
    h = conv3_transpose(h, params.convt2_3_w, params.convt2_3_b, 1, 1, 0);
    return config.output_activation == OutputActivation::softplus ? softplus(h) : relu(h);
}

Tensor kl_normal(const LatentStats& stats) {
    require(stats.mu.shape() == stats.log_var.shape(),
            "kl_normal: mu shape " + shape_str(stats.mu.shape()) + " must match log_var shape " +
                shape_str(stats.log_var.shape()));
    require(stats.mu.shape().size() == 2, "kl_normal expects [N,k] stats, got " +
                                              shape_str(stats.mu.shape()));
    const double n = (double)stats.mu.shape()[0];
    // 0.5 * (mu^2 + sigma^2 - 1 - log sigma^2), summed over latents, batch-averaged.
    Tensor per_dim = sub(add(mul(stats.mu, stats.mu), exp(stats.log_var)),
                         add_scalar(stats.log_var, 1.0));
    return scale(sum(per_dim), 0.5 / n);
}

LossBreakdown elbo_loss(const Tensor& x, const Tensor& xhat, const LatentStats& stats,
                        double beta) {
    require(x.shape() == xhat.shape(),
            "elbo_loss: input shape " + shape_str(x.shape()) + " must match reconstruction " +
                shape_str(xhat.shape()));
    require(beta >= 0.0 && std::isfinite(beta), "beta must be finite and >= 0");
    LossBreakdown out;
    Tensor diff = sub(xhat, x);
    out.rec = mean(mul(diff, diff));
    out.reg = kl_normal(stats);
    out.total = add(out.rec, scale(out.reg, beta));
    out.beta = beta;
    return out;
}

VaeForward vae_forward(const Tensor& x, const VaeParams& params, const ModelConfig& config,
                       const Tensor& noise) {
    VaeForward f;
    f.stats = encode(x, params, config);
    f.z = reparameterize(f.stats, noise);
    f.xhat = decode(f.z, params, config);
    return f;
}

}  // namespace wxgen
