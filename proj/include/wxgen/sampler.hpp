#pragma once

#include <cstdint>
#include <string>

#include "wxgen/checkpoint.hpp"
#include "wxgen/data.hpp"
#include "wxgen/tensor.hpp"

namespace wxgen {

enum class SampleMode { scaled, tail };

std::string to_string(SampleMode m);
SampleMode sample_mode_from_string(const std::string& s);

// Where in the latent prior to draw from: scaled mode is N(0, sigma^2 I),
// tail mode restricts every coordinate to |z| >= threshold.
struct SamplerConfig {
    SampleMode mode = SampleMode::scaled;
    double sigma = 1.0;      // scaled mode
    double threshold = 0.0;  // tail mode
    size_t n = 1;
    uint64_t seed = 0;

    void validate() const;
};

// n x k latents, each entry i.i.d. N(0, sigma^2). Deterministic in
// (seed, n, k, sigma); entries are drawn row-major.
Tensor sample_scaled(size_t k, const SamplerConfig& config);

// n x k latents from the two-sided truncated standard normal |z| >= threshold,
// by per-coordinate rejection from N(0,1). `attempts`, when given, returns the
// total number of proposals (for acceptance-rate measurement).
Tensor sample_tail(size_t k, const SamplerConfig& config, uint64_t* attempts = nullptr);

struct SynthesisBatch {
    Tensor latents;      // [n, k]
    CubeDataset fields;  // physical units (mm/day), count = n
    std::string provenance;
};

// The sidecar provenance record written next to synthesized cube files.
std::string provenance_text(const SamplerConfig& config, const std::string& checkpoint_digest);

// Decode caller-supplied latents [n, k] and denormalize with `stats`.
// k must equal the checkpoint model's latent_dim.
SynthesisBatch decode_latents(const Checkpoint& cp, const Tensor& latents, const NormStats& stats,
                              const std::string& digest);

// Draw latents per `config`, decode, denormalize. The two-argument form uses
// the normalization constants stored in the checkpoint.
SynthesisBatch synthesize(const Checkpoint& cp, const SamplerConfig& config,
                          const NormStats& stats);
SynthesisBatch synthesize(const Checkpoint& cp, const SamplerConfig& config);

}  // namespace wxgen
