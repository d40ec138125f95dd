#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wxgen/data.hpp"
#include "wxgen/vae.hpp"

namespace wxgen {

struct TrainConfig {
    size_t epochs = 100;
    size_t batch_size = 32;
    double lr = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // The regularization weight is 0 during the first warmup_epochs epochs and
    // beta_target afterwards. warmup_ramp swaps the step for a linear ramp.
    size_t warmup_epochs = 10;
    bool warmup_ramp = false;
    double beta_target = -1.0;  // < 0 resolves to latent_dim / pixel_count

    size_t early_stop_patience = 10;
    double early_stop_min_delta = 1e-4;
    uint64_t seed = 0;
    double validation_fraction = 0.1;

    bool grad_clip = false;  // global-norm clip, off by default
    double grad_clip_norm = 5.0;

    // Called after each epoch's validation pass; not part of the trained
    // state (ignored by checkpoints).
    std::function<void(const struct EpochRecord&)> on_epoch;

    void validate() const;
    double resolved_beta_target(const ModelConfig& model) const;
    // Copy with beta_target made concrete, ready for beta_schedule.
    TrainConfig resolved(const ModelConfig& model) const;
};

// Applied regularization weight for an epoch. Requires a resolved (>= 0)
// beta_target.
double beta_schedule(size_t epoch, const TrainConfig& config);

struct EpochRecord {
    size_t epoch = 0;   // 0-based
    double beta = 0.0;  // weight applied to training batches this epoch
    double train_total = 0.0;
    double train_rec = 0.0;
    double train_reg = 0.0;
    double val_total = 0.0;  // at beta_target, noise-free (z = mu)
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    size_t stopped_epoch = 0;  // last epoch that actually ran
    size_t best_epoch = 0;     // epoch with minimal val_total (first on ties)
};

struct TrainResult {
    VaeParams params;  // snapshot from best_epoch
    TrainHistory history;
    TrainConfig config;  // as trained, with beta_target resolved
};

// Full training loop: seeded shuffle -> minibatches -> forward with seeded
// noise -> loss -> backward -> Adam. A validation slice (validation_fraction,
// carved by a seeded permutation before training) is scored every epoch with
// beta_target and a noise-free forward; training stops early once val_total
// has not improved by early_stop_min_delta for early_stop_patience epochs.
// The dataset must be normalized and match the model extents.
TrainResult train(const CubeDataset& dataset, const ModelConfig& model,
                  const TrainConfig& config);

}  // namespace wxgen
