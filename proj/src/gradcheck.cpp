#include "wxgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wxgen/error.hpp"

namespace wxgen {

ModelConfig toy_model_config() {
    ModelConfig c;
    c.input_t = c.input_h = c.input_w = 8;
    c.conv_channels = 8;
    c.bottleneck_width = 16;
    c.latent_dim = 4;
    c.decoder_channels = 8;
    return c;
}

namespace {

double rel_err(double a, double b) {
    double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

void fill_positive(Tensor& t, double scale, Rng& rng) {
    for (double& v : t.data()) v = scale * (0.5 + 0.5 * rng.uniform());
}

// All weights positive and scaled by the reciprocal of each unit's fan-in, all
// biases at +0.05, so every relu input is >= 0.05 up to probe-sized shifts and
// activations stay O(1) through the whole stack.
VaeParams smooth_region_params(const ModelConfig& cfg, Rng& rng) {
    VaeParams p = init_params(cfg, rng);  // shapes only; values overwritten below
    const double k3 = 27.0;
    const double c = (double)cfg.conv_channels;
    const double d = (double)cfg.decoder_channels;

    fill_positive(p.conv1_1_w, 1.3 / k3, rng);
    fill_positive(p.conv1_2_w, 1.3 / (c * k3), rng);
    fill_positive(p.dense_bn_w, 1.3 / (double)cfg.enc_flat(), rng);
    fill_positive(p.dense_mu_w, 1.3 / (double)cfg.bottleneck_width, rng);
    // keep log_var well inside its clamp window and exp(log_var) tame
    fill_positive(p.dense_logvar_w, 0.4 / (double)cfg.bottleneck_width, rng);
    fill_positive(p.dense_w, 1.3 / (double)cfg.latent_dim, rng);
    // stride-2 transposes spread k^3 taps over stride^3 output positions
    fill_positive(p.convt2_1_w, 1.3 / (d * k3 / 8.0), rng);
    fill_positive(p.convt2_2_w, 1.3 / (c * k3 / 8.0), rng);
    fill_positive(p.convt2_3_w, 1.3 / (c * k3), rng);

    for (auto& [name, t] : p.named()) {
        if (name.ends_with(".bias"))
            for (double& v : t->data()) v = 0.05;
        quantize_f32(*t);
    }
    return p;
}

}  // namespace

GradCheckReport gradcheck_vae(const ModelConfig& config, uint64_t seed, double step, double tol,
                              size_t probes_per_tensor, size_t batch, double beta,
                              GradCheckPoint point) {
    if (step <= 0.0 || !std::isfinite(step)) throw ValidationError("gradcheck step must be > 0");
    if (tol <= 0.0 || !std::isfinite(tol)) throw ValidationError("gradcheck tol must be > 0");
    if (batch < 1) throw ValidationError("gradcheck batch must be >= 1");
    config.validate();

    Rng root(seed);
    Rng init_rng = root.spawn(1);
    Rng data_rng = root.spawn(2);
    Rng noise_rng = root.spawn(3);
    Rng probe_rng = root.spawn(4);

    VaeParams params = point == GradCheckPoint::smooth_region
                           ? smooth_region_params(config, init_rng)
                           : init_params(config, init_rng);
    if (point == GradCheckPoint::natural_init) {
        // Zero biases put relu kinks exactly at the evaluation point wherever a
        // unit's whole receptive field is relu-inactive (its preactivation is
        // then exactly the bias). FD across such a unit reads the two-sided
        // average instead of the subgradient, so nudge the biases off zero.
        for (auto& [name, t] : params.named()) {
            if (!name.ends_with(".bias")) continue;
            for (double& v : t->data()) v = init_rng.uniform(-0.02, 0.02);
            quantize_f32(*t);
        }
    }

    Tensor x = Tensor::zeros({batch, 1, config.input_t, config.input_h, config.input_w});
    for (double& v : x.data()) v = data_rng.uniform();
    Tensor noise = Tensor::zeros({batch, config.latent_dim});
    // The smooth region needs non-negative latents, so draw one-sided noise.
    for (double& v : noise.data())
        v = point == GradCheckPoint::smooth_region ? noise_rng.uniform() : noise_rng.normal();

    auto eval_loss = [&]() {
        NoGradGuard ng;
        VaeForward f = vae_forward(x, params, config, noise);
        return elbo_loss(x, f.xhat, f.stats, beta).total.item();
    };

    // One analytic pass; graph grads stay on the leaves afterwards.
    {
        VaeForward f = vae_forward(x, params, config, noise);
        LossBreakdown loss = elbo_loss(x, f.xhat, f.stats, beta);
        backward(loss.total);
    }

    GradCheckReport report;
    report.step = step;
    report.tol = tol;

    for (auto& [name, tensor] : params.named()) {
        if (!tensor->has_grad())
            throw ValidationError("gradcheck: no gradient recorded for " + name);
        const std::vector<double>& grad = tensor->grad();
        std::vector<double>& values = tensor->data();

        std::vector<size_t> indices;
        if (probes_per_tensor == 0 || probes_per_tensor >= values.size()) {
            indices.resize(values.size());
            for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        } else {
            for (size_t i = 0; i < probes_per_tensor; ++i)
                indices.push_back((size_t)probe_rng.uniform_int((int64_t)values.size()));
            std::sort(indices.begin(), indices.end());
            indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
        }

        for (size_t idx : indices) {
            const double orig = values[idx];
            values[idx] = orig + step;
            double up = eval_loss();
            values[idx] = orig - step;
            double down = eval_loss();
            values[idx] = orig;

            GradCheckProbe probe;
            probe.param = name;
            probe.index = idx;
            probe.analytic = grad[idx];
            probe.numeric = (up - down) / (2.0 * step);
            probe.rel_err = rel_err(probe.analytic, probe.numeric);

            ++report.checked;
            if (probe.rel_err > report.max_rel_err) {
                report.max_rel_err = probe.rel_err;
                report.worst = probe;
            }
            if (probe.rel_err > tol) {
                ++report.failed;
                if (report.failures.size() < 32) report.failures.push_back(probe);
            }
        }
    }
    return report;
}

std::string format_report(const GradCheckReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "gradcheck %s: checked=%zu failed=%zu max_rel_err=%.3e (tol %.1e, step %.1e)",
                  report.ok() ? "ok" : "FAILED", report.checked, report.failed,
                  report.max_rel_err, report.tol, report.step);
    std::string out(buf);
    for (const auto& probe : report.failures) {
        std::snprintf(buf, sizeof(buf), "\n  %s[%zu] analytic=%.9e numeric=%.9e rel_err=%.3e",
                      probe.param.c_str(), probe.index, probe.analytic, probe.numeric,
                      probe.rel_err);
        out += buf;
    }
    return out;
}

}  // namespace wxgen
