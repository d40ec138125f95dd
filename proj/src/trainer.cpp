#include "wxgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>

#include "wxgen/error.hpp"
#include "wxgen/ioutil.hpp"
#include "wxgen/rng.hpp"
#include "wxgen/tensor.hpp"

namespace wxgen {

void TrainConfig::validate() const {
    if (epochs == 0) throw ValidationError("epochs must be at least 1");
    if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
    if (!(std::isfinite(lr) && lr >= 0.0))
        throw ValidationError("lr must be finite and non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0))
        throw ValidationError("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ValidationError("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
    if (warmup_epochs > epochs)
        throw ValidationError("warmup_epochs (" + std::to_string(warmup_epochs) +
                              ") must not exceed epochs (" + std::to_string(epochs) + ")");
    if (!std::isfinite(beta_target) && !(beta_target < 0.0))
        throw ValidationError("beta_target must be finite (negative selects the default)");
    if (early_stop_patience == 0) throw ValidationError("early_stop_patience must be at least 1");
    if (!(std::isfinite(early_stop_min_delta) && early_stop_min_delta >= 0.0))
        throw ValidationError("early_stop_min_delta must be finite and non-negative");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ValidationError("validation_fraction must lie strictly between 0 and 1");
    if (grad_clip && !(std::isfinite(grad_clip_norm) && grad_clip_norm > 0.0))
        throw ValidationError("grad_clip_norm must be positive when grad_clip is on");
}

double TrainConfig::resolved_beta_target(const ModelConfig& model) const {
    if (beta_target >= 0.0) return beta_target;
    return static_cast<double>(model.latent_dim) / static_cast<double>(model.pixel_count());
}

TrainConfig TrainConfig::resolved(const ModelConfig& model) const {
    TrainConfig out = *this;
    out.beta_target = resolved_beta_target(model);
    return out;
}

double beta_schedule(size_t epoch, const TrainConfig& config) {
    if (config.beta_target < 0.0)
        throw ValidationError(
            "beta_schedule needs a resolved beta_target; call TrainConfig::resolved first");
    if (epoch >= config.warmup_epochs) return config.beta_target;
    if (!config.warmup_ramp) return 0.0;
    return config.beta_target * static_cast<double>(epoch) /
           static_cast<double>(config.warmup_epochs);
}

namespace {

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
}

Tensor draw_noise(size_t n, size_t k, Rng& rng) {
    std::vector<double> vals(n * k);
    for (double& v : vals) v = rng.normal();
    return Tensor::from_data({n, k}, std::move(vals));
}

}  // namespace

TrainResult train(const CubeDataset& dataset, const ModelConfig& model,
                  const TrainConfig& config_in) {
    model.validate();
    config_in.validate();
    dataset.validate();
    TrainConfig config = config_in.resolved(model);

    if (dataset.count == 0) throw ValidationError("training dataset is empty");
    if (!dataset.normalized)
        throw ValidationError("training data must be normalized (run normalize first)");
    if (dataset.t != model.input_t || dataset.h != model.input_h || dataset.w != model.input_w)
        throw ValidationError("dataset cubes are " + std::to_string(dataset.t) + "x" +
                              std::to_string(dataset.h) + "x" + std::to_string(dataset.w) +
                              " but the model expects " + std::to_string(model.input_t) + "x" +
                              std::to_string(model.input_h) + "x" + std::to_string(model.input_w));

    const size_t n = dataset.count;
    const size_t n_val =
        static_cast<size_t>(std::llround(static_cast<double>(n) * config.validation_fraction));
    if (n_val == 0)
        throw ValidationError("validation split is empty (" + std::to_string(n) + " cubes at " +
                              format_double(config.validation_fraction) +
                              "); raise validation_fraction or add data");
    if (n_val >= n)
        throw ValidationError("validation split leaves no training data (" + std::to_string(n) +
                              " cubes at " + format_double(config.validation_fraction) + ")");

    Rng root(config.seed);
    Rng init_rng = root.spawn(1);
    Rng split_rng = root.spawn(2);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle_indices(order, split_rng);
    std::vector<size_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<size_t> train_idx(order.begin() + n_val, order.end());

    VaeParams params = init_params(model, init_rng);
    std::vector<Tensor> param_list = params.list();
    const std::vector<std::string> names = params.names();
    AdamState adam;
    const AdamConfig adam_cfg{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};

    TrainHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    double patience_ref = std::numeric_limits<double>::infinity();
    size_t best_epoch = 0;
    size_t since_improve = 0;
    VaeParams best_params = params.clone();

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double beta = beta_schedule(epoch, config);
        Rng shuffle_rng = root.spawn(1000 + epoch);
        Rng noise_rng = root.spawn(2000 + epoch);
        shuffle_indices(train_idx, shuffle_rng);

        double sum_total = 0.0, sum_rec = 0.0, sum_reg = 0.0;
        for (size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const size_t nb = std::min(config.batch_size, train_idx.size() - start);
            const std::span<const size_t> batch(train_idx.data() + start, nb);
            Tensor x = cubes_to_tensor(dataset, batch);
            Tensor noise = draw_noise(nb, model.latent_dim, noise_rng);
            VaeForward fwd = vae_forward(x, params, model, noise);
            LossBreakdown loss = elbo_loss(x, fwd.xhat, fwd.stats, beta);
            const double total = loss.total.item();
            if (!std::isfinite(total))
                throw ValidationError("non-finite training loss (" + format_double(total) +
                                      ") at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(start / config.batch_size));
            sum_total += total * static_cast<double>(nb);
            sum_rec += loss.rec.item() * static_cast<double>(nb);
            sum_reg += loss.reg.item() * static_cast<double>(nb);

            backward(loss.total);
            if (config.grad_clip) clip_grad_norm(param_list, config.grad_clip_norm);
            adam_step(param_list, adam, adam_cfg, names);
            params.clear_grads();
        }

        const double inv_train = 1.0 / static_cast<double>(train_idx.size());
        EpochRecord row;
        row.epoch = epoch;
        row.beta = beta;
        row.train_total = sum_total * inv_train;
        row.train_rec = sum_rec * inv_train;
        row.train_reg = sum_reg * inv_train;

        {
            NoGradGuard no_grad;
            double vsum = 0.0;
            for (size_t start = 0; start < val_idx.size(); start += config.batch_size) {
                const size_t nb = std::min(config.batch_size, val_idx.size() - start);
                const std::span<const size_t> batch(val_idx.data() + start, nb);
                Tensor x = cubes_to_tensor(dataset, batch);
                LatentStats stats = encode(x, params, model);
                Tensor xhat = decode(stats.mu, params, model);  // noise-free: z = mu
                LossBreakdown vloss = elbo_loss(x, xhat, stats, config.beta_target);
                vsum += vloss.total.item() * static_cast<double>(nb);
            }
            row.val_total = vsum / static_cast<double>(val_idx.size());
        }
        if (!std::isfinite(row.val_total))
            throw ValidationError("non-finite validation loss (" + format_double(row.val_total) +
                                  ") at epoch " + std::to_string(epoch));

        history.epochs.push_back(row);
        history.stopped_epoch = epoch;
        if (config.on_epoch) config.on_epoch(row);

        // best_epoch tracks the strict minimum (spec of the returned params);
        // the patience counter only resets on improvements of min_delta.
        if (row.val_total < best_val) {
            best_val = row.val_total;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if (row.val_total < patience_ref - config.early_stop_min_delta) {
            patience_ref = row.val_total;
            since_improve = 0;
        } else if (++since_improve >= config.early_stop_patience) {
            break;
        }
    }

    history.best_epoch = best_epoch;
    return {std::move(best_params), std::move(history), std::move(config)};
}

}  // namespace wxgen
