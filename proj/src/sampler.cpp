#include "wxgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "wxgen/error.hpp"
#include "wxgen/ioutil.hpp"
#include "wxgen/rng.hpp"
#include "wxgen/vae.hpp"

namespace wxgen {

namespace {

constexpr size_t kDecodeChunk = 64;  // bounds activation memory during synthesis

}  // namespace

std::string to_string(SampleMode m) { return m == SampleMode::scaled ? "scaled" : "tail"; }

SampleMode sample_mode_from_string(const std::string& s) {
    if (s == "scaled") return SampleMode::scaled;
    if (s == "tail") return SampleMode::tail;
    throw ValidationError("unknown sample mode '" + s + "' (expected scaled or tail)");
}

void SamplerConfig::validate() const {
    if (n == 0) throw ValidationError("sampler needs n >= 1");
    if (mode == SampleMode::scaled) {
        if (!(std::isfinite(sigma) && sigma > 0.0))
            throw ValidationError("scaled mode needs sigma > 0, got " + format_double(sigma));
    } else {
        if (!(std::isfinite(threshold) && threshold >= 0.0))
            throw ValidationError("tail mode needs threshold >= 0, got " +
                                  format_double(threshold));
        if (threshold > 6.0)
            throw ValidationError("tail threshold " + format_double(threshold) +
                                  " puts the acceptance probability below 1e-9; use t <= 6");
    }
}

Tensor sample_scaled(size_t k, const SamplerConfig& config) {
    config.validate();
    if (config.mode != SampleMode::scaled)
        throw ValidationError("sample_scaled called with a non-scaled config");
    if (k == 0) throw ValidationError("latent dimension must be >= 1");
    Rng rng(config.seed);
    std::vector<double> vals(config.n * k);
    for (double& v : vals) v = config.sigma * rng.normal();
    return Tensor::from_data({config.n, k}, std::move(vals));
}

Tensor sample_tail(size_t k, const SamplerConfig& config, uint64_t* attempts) {
    config.validate();
    if (config.mode != SampleMode::tail)
        throw ValidationError("sample_tail called with a non-tail config");
    if (k == 0) throw ValidationError("latent dimension must be >= 1");
    Rng rng(config.seed);
    uint64_t proposals = 0;
    std::vector<double> vals(config.n * k);
    for (double& v : vals) {
        double draw;
        do {
            draw = rng.normal();
            ++proposals;
        } while (std::fabs(draw) < config.threshold);
        v = draw;
    }
    if (attempts) *attempts = proposals;
    return Tensor::from_data({config.n, k}, std::move(vals));
}

std::string provenance_text(const SamplerConfig& config, const std::string& checkpoint_digest) {
    std::string out = "mode=" + to_string(config.mode) + "\n";
    if (config.mode == SampleMode::scaled)
        out += "sigma=" + format_double(config.sigma) + "\n";
    else
        out += "threshold=" + format_double(config.threshold) + "\n";
    out += "n=" + std::to_string(config.n) + "\n";
    out += "seed=" + std::to_string(config.seed) + "\n";
    out += "checkpoint=" + (checkpoint_digest.empty() ? "unknown" : checkpoint_digest) + "\n";
    return out;
}

SynthesisBatch decode_latents(const Checkpoint& cp, const Tensor& latents, const NormStats& stats,
                              const std::string& digest) {
    cp.model.validate();
    const size_t k = cp.model.latent_dim;
    if (latents.shape().size() != 2)
        throw ValidationError("latents must be a [n, k] matrix");
    if (latents.shape()[1] != k)
        throw ValidationError("latents have k=" + std::to_string(latents.shape()[1]) +
                              " but the checkpoint model has latent_dim " + std::to_string(k));
    if (!(stats.scale > 0.0))
        throw ValidationError(
            "no usable normalization constants (scale must be > 0); "
            "train stores them in the checkpoint");
    for (double v : latents.data())
        if (!std::isfinite(v)) throw ValidationError("latents must be finite");

    const size_t n = latents.shape()[0];
    SynthesisBatch batch;
    batch.latents = latents.detached_clone();
    batch.fields.count = static_cast<uint32_t>(n);
    batch.fields.t = static_cast<uint32_t>(cp.model.input_t);
    batch.fields.h = static_cast<uint32_t>(cp.model.input_h);
    batch.fields.w = static_cast<uint32_t>(cp.model.input_w);
    batch.fields.normalized = true;
    batch.fields.stats = stats;
    batch.fields.values.reserve(n * batch.fields.cube_size());

    NoGradGuard no_grad;
    const auto& zdata = latents.data();
    for (size_t start = 0; start < n; start += kDecodeChunk) {
        const size_t nb = std::min(kDecodeChunk, n - start);
        std::vector<double> chunk(zdata.begin() + start * k, zdata.begin() + (start + nb) * k);
        Tensor z = Tensor::from_data({nb, k}, std::move(chunk));
        Tensor xhat = decode(z, cp.params, cp.model);
        for (double v : xhat.data()) batch.fields.values.push_back(static_cast<float>(v));
    }
    denormalize(batch.fields);
    batch.fields.validate();  // finite and >= 0 in physical units
    batch.provenance = "mode=external\nn=" + std::to_string(n) + "\ncheckpoint=" +
                       (digest.empty() ? "unknown" : digest) + "\n";
    return batch;
}

SynthesisBatch synthesize(const Checkpoint& cp, const SamplerConfig& config,
                          const NormStats& stats) {
    config.validate();
    cp.model.validate();
    const std::string digest = checkpoint_digest(cp);
    Tensor latents = config.mode == SampleMode::scaled ? sample_scaled(cp.model.latent_dim, config)
                                                       : sample_tail(cp.model.latent_dim, config);
    SynthesisBatch batch = decode_latents(cp, latents, stats, digest);
    batch.provenance = provenance_text(config, digest);
    return batch;
}

SynthesisBatch synthesize(const Checkpoint& cp, const SamplerConfig& config) {
    return synthesize(cp, config, cp.norm);
}

}  // namespace wxgen
