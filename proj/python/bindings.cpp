// Python module exposing the main operations on numpy arrays. Model state
// lives in checkpoint files (the same format the CLI reads and writes), so
// python, the CLI, and C++ callers interoperate through the filesystem.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wxgen/checkpoint.hpp"
#include "wxgen/data.hpp"
#include "wxgen/error.hpp"
#include "wxgen/gradcheck.hpp"
#include "wxgen/ioutil.hpp"
#include "wxgen/qq.hpp"
#include "wxgen/sampler.hpp"
#include "wxgen/tensor.hpp"
#include "wxgen/trainer.hpp"
#include "wxgen/vae.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

wxgen::GridSeries grid_from_array(const FloatArray& arr, uint32_t start_day_of_year) {
    if (arr.ndim() != 3) throw wxgen::ValidationError("grid must be a [days, h, w] array");
    wxgen::GridSeries s;
    s.days = static_cast<uint32_t>(arr.shape(0));
    s.height = static_cast<uint32_t>(arr.shape(1));
    s.width = static_cast<uint32_t>(arr.shape(2));
    s.start_day_of_year = start_day_of_year;
    s.values.assign(arr.data(), arr.data() + arr.size());
    s.validate();
    return s;
}

py::array grid_to_array(const wxgen::GridSeries& s) {
    py::array_t<float> out({(py::ssize_t)s.days, (py::ssize_t)s.height, (py::ssize_t)s.width});
    std::copy(s.values.begin(), s.values.end(), out.mutable_data());
    return out;
}

wxgen::CubeDataset cubes_from_array(const FloatArray& arr, bool normalized, double scale) {
    if (arr.ndim() != 4) throw wxgen::ValidationError("cubes must be a [n, t, h, w] array");
    wxgen::CubeDataset ds;
    ds.count = static_cast<uint32_t>(arr.shape(0));
    ds.t = static_cast<uint32_t>(arr.shape(1));
    ds.h = static_cast<uint32_t>(arr.shape(2));
    ds.w = static_cast<uint32_t>(arr.shape(3));
    ds.normalized = normalized;
    if (normalized) ds.stats = wxgen::NormStats{"log1p_max", scale};
    ds.values.assign(arr.data(), arr.data() + arr.size());
    ds.validate();
    return ds;
}

py::array cubes_to_array(const wxgen::CubeDataset& ds) {
    py::array_t<float> out(
        {(py::ssize_t)ds.count, (py::ssize_t)ds.t, (py::ssize_t)ds.h, (py::ssize_t)ds.w});
    std::copy(ds.values.begin(), ds.values.end(), out.mutable_data());
    return out;
}

wxgen::Tensor latents_from_array(const DoubleArray& arr) {
    if (arr.ndim() != 2) throw wxgen::ValidationError("latents must be a [n, k] array");
    return wxgen::Tensor::from_data(
        {(size_t)arr.shape(0), (size_t)arr.shape(1)},
        std::vector<double>(arr.data(), arr.data() + arr.size()));
}

py::array tensor_to_array2d(const wxgen::Tensor& t) {
    const auto& shape = t.shape();
    py::array_t<double> out({(py::ssize_t)shape.at(0), (py::ssize_t)shape.at(1)});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<double> probs_vector(const DoubleArray& arr) {
    return {arr.data(), arr.data() + arr.size()};
}

wxgen::ModelConfig model_from_kwargs(const wxgen::CubeDataset& ds, size_t latent,
                                     size_t conv_channels, size_t bottleneck,
                                     size_t decoder_channels, const std::string& activation) {
    wxgen::ModelConfig mc;
    mc.input_t = ds.t;
    mc.input_h = ds.h;
    mc.input_w = ds.w;
    mc.latent_dim = latent;
    mc.conv_channels = conv_channels;
    mc.bottleneck_width = bottleneck;
    mc.decoder_channels = decoder_channels;
    mc.output_activation = wxgen::output_activation_from_string(activation);
    return mc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Stochastic precipitation-field generator: synthetic data pipeline, "
              "convolutional VAE training, latent-locus sampling, and QQ evaluation.";

    py::register_exception<wxgen::ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<wxgen::IoError>(m, "IoError", PyExc_OSError);

    m.def(
        "gen_monsoon",
        [](uint32_t days, uint32_t height, uint32_t width, uint32_t start_day, double wet_base,
           double wet_boost, double gamma_shape, double scale_base, double scale_boost,
           uint32_t storm_days, double storm_sigma, double noise_amp, uint32_t noise_radius,
           uint64_t seed) {
            wxgen::MonsoonGenConfig c;
            c.days = days;
            c.height = height;
            c.width = width;
            c.start_day_of_year = start_day;
            c.base_wet_prob = wet_base;
            c.seasonal_wet_prob = wet_boost;
            c.gamma_shape = gamma_shape;
            c.base_scale = scale_base;
            c.seasonal_scale = scale_boost;
            c.storm_block_days = storm_days;
            c.storm_sigma = storm_sigma;
            c.noise_amplitude = noise_amp;
            c.noise_radius = noise_radius;
            c.seed = seed;
            wxgen::GridSeries s;
            {
                py::gil_scoped_release release;
                s = wxgen::gen_synthetic_monsoon(c);
            }
            return grid_to_array(s);
        },
        py::arg("days") = 365, py::arg("height") = 24, py::arg("width") = 24,
        py::arg("start_day") = 1, py::arg("wet_base") = 0.12, py::arg("wet_boost") = 0.6,
        py::arg("gamma_shape") = 1.5, py::arg("scale_base") = 2.0, py::arg("scale_boost") = 10.0,
        py::arg("storm_days") = 8, py::arg("storm_sigma") = 0.6, py::arg("noise_amp") = 0.8,
        py::arg("noise_radius") = 2, py::arg("seed") = 2024,
        "Synthetic monsoon rainfall grid as a [days, h, w] float32 array (mm/day).");

    m.def(
        "window_samples",
        [](const FloatArray& grid, uint32_t start_day, uint32_t window, uint32_t day_min,
           uint32_t day_max, uint32_t boxes, uint32_t box_h, uint32_t box_w, uint32_t out_h,
           uint32_t out_w, uint32_t samples, uint64_t seed) {
            wxgen::GridSeries s = grid_from_array(grid, start_day);
            wxgen::WindowConfig wc;
            wc.window = window;
            wc.day_min = day_min;
            wc.day_max = day_max;
            wc.n_boxes = boxes;
            wc.box_h = box_h;
            wc.box_w = box_w;
            wc.out_h = out_h;
            wc.out_w = out_w;
            wc.n_samples = samples;
            wc.seed = seed;
            wxgen::CubeDataset ds;
            {
                py::gil_scoped_release release;
                ds = wxgen::window_samples(s, wc);
            }
            return cubes_to_array(ds);
        },
        py::arg("grid"), py::arg("start_day") = 1, py::arg("window") = 32,
        py::arg("day_min") = 150, py::arg("day_max") = 300, py::arg("boxes") = 16,
        py::arg("box_h") = 20, py::arg("box_w") = 20, py::arg("out_h") = 32,
        py::arg("out_w") = 32, py::arg("samples") = 18000, py::arg("seed") = 7,
        "Sample space-time cubes from a [days, h, w] grid; returns [n, t, h, w] float32.");

    m.def(
        "split_train_test",
        [](const FloatArray& cubes, double test_fraction, uint64_t seed) {
            wxgen::CubeDataset all = cubes_from_array(cubes, false, 0.0);
            auto split = wxgen::split_train_test(std::move(all), test_fraction, seed);
            return py::make_tuple(cubes_to_array(split.first), cubes_to_array(split.second));
        },
        py::arg("cubes"), py::arg("test_fraction") = 0.2, py::arg("seed") = 1,
        "Seeded shuffle split; returns (train, test) preserving original cube order.");

    m.def(
        "normalize",
        [](const FloatArray& cubes) {
            wxgen::CubeDataset ds = cubes_from_array(cubes, false, 0.0);
            wxgen::NormStats stats = wxgen::normalize(ds);
            return py::make_tuple(cubes_to_array(ds), stats.scale);
        },
        py::arg("cubes"),
        "log1p scaling into [0, 1]; returns (normalized cubes, scale constant).");

    m.def(
        "denormalize",
        [](const FloatArray& cubes, double scale) {
            wxgen::CubeDataset ds = cubes_from_array(cubes, true, scale);
            wxgen::denormalize(ds);
            return cubes_to_array(ds);
        },
        py::arg("cubes"), py::arg("scale"),
        "Inverse of normalize for the given scale constant; returns mm/day values.");

    m.def(
        "train_vae",
        [](const FloatArray& cubes, double scale, const std::string& out_path, size_t epochs,
           size_t batch, double lr, size_t warmup, bool ramp, double beta, size_t patience,
           double min_delta, uint64_t seed, double val_fraction, bool grad_clip,
           double grad_clip_norm, size_t latent, size_t conv_channels, size_t bottleneck,
           size_t decoder_channels, const std::string& activation,
           const std::optional<py::function>& on_epoch) {
            wxgen::CubeDataset ds = cubes_from_array(cubes, true, scale);
            wxgen::ModelConfig mc = model_from_kwargs(ds, latent, conv_channels, bottleneck,
                                                      decoder_channels, activation);
            wxgen::TrainConfig tc;
            tc.epochs = epochs;
            tc.batch_size = batch;
            tc.lr = lr;
            tc.warmup_epochs = warmup;
            tc.warmup_ramp = ramp;
            tc.beta_target = beta;
            tc.early_stop_patience = patience;
            tc.early_stop_min_delta = min_delta;
            tc.seed = seed;
            tc.validation_fraction = val_fraction;
            tc.grad_clip = grad_clip;
            tc.grad_clip_norm = grad_clip_norm;
            if (on_epoch) {
                tc.on_epoch = [cb = *on_epoch](const wxgen::EpochRecord& r) {
                    py::gil_scoped_acquire acquire;
                    py::dict row;
                    row["epoch"] = r.epoch;
                    row["beta"] = r.beta;
                    row["train_total"] = r.train_total;
                    row["train_rec"] = r.train_rec;
                    row["train_reg"] = r.train_reg;
                    row["val_total"] = r.val_total;
                    cb(row);
                };
            }

            wxgen::TrainResult res;
            std::string digest;
            {
                py::gil_scoped_release release;
                res = wxgen::train(ds, mc, tc);
                wxgen::Checkpoint cp{res.params, mc, res.config, ds.stats};
                cp.train.on_epoch = nullptr;
                wxgen::save_checkpoint(cp, out_path);
                digest = wxgen::checkpoint_digest(cp);
            }

            const size_t n = res.history.epochs.size();
            py::array_t<double> beta_arr(n), total(n), rec(n), reg(n), val(n);
            for (size_t i = 0; i < n; ++i) {
                const auto& r = res.history.epochs[i];
                beta_arr.mutable_at(i) = r.beta;
                total.mutable_at(i) = r.train_total;
                rec.mutable_at(i) = r.train_rec;
                reg.mutable_at(i) = r.train_reg;
                val.mutable_at(i) = r.val_total;
            }
            py::dict out;
            out["beta"] = beta_arr;
            out["train_total"] = total;
            out["train_rec"] = rec;
            out["train_reg"] = reg;
            out["val_total"] = val;
            out["best_epoch"] = res.history.best_epoch;
            out["stopped_epoch"] = res.history.stopped_epoch;
            out["beta_target"] = res.config.beta_target;
            out["checkpoint"] = digest;
            return out;
        },
        py::arg("cubes"), py::arg("scale"), py::arg("out_path"), py::arg("epochs") = 100,
        py::arg("batch") = 32, py::arg("lr") = 0.001, py::arg("warmup") = 10,
        py::arg("ramp") = false, py::arg("beta") = -1.0, py::arg("patience") = 10,
        py::arg("min_delta") = 1e-4, py::arg("seed") = 0, py::arg("val_fraction") = 0.1,
        py::arg("grad_clip") = false, py::arg("grad_clip_norm") = 5.0, py::arg("latent") = 30,
        py::arg("conv_channels") = 128, py::arg("bottleneck") = 500,
        py::arg("decoder_channels") = 256, py::arg("activation") = "softplus",
        py::arg("on_epoch") = std::nullopt,
        "Train on normalized [n, t, h, w] cubes, write a checkpoint file, and return the "
        "history (per-epoch arrays plus best/stopped epoch and the checkpoint digest).");

    m.def(
        "checkpoint_info",
        [](const std::string& path) {
            const wxgen::Checkpoint cp = wxgen::load_checkpoint(path);
            py::dict out;
            out["input_t"] = cp.model.input_t;
            out["input_h"] = cp.model.input_h;
            out["input_w"] = cp.model.input_w;
            out["latent"] = cp.model.latent_dim;
            out["conv_channels"] = cp.model.conv_channels;
            out["bottleneck"] = cp.model.bottleneck_width;
            out["decoder_channels"] = cp.model.decoder_channels;
            out["activation"] = wxgen::to_string(cp.model.output_activation);
            out["beta_target"] = cp.train.beta_target;
            out["seed"] = cp.train.seed;
            out["norm_scale"] = cp.norm.scale;
            out["digest"] = wxgen::checkpoint_digest(cp);
            return out;
        },
        py::arg("path"), "Configs, normalization constant, and digest of a checkpoint file.");

    m.def(
        "synthesize",
        [](const std::string& path, const std::string& mode, double sigma, double threshold,
           size_t n, uint64_t seed) {
            wxgen::SamplerConfig sc;
            sc.mode = wxgen::sample_mode_from_string(mode);
            sc.sigma = sigma;
            sc.threshold = threshold;
            sc.n = n;
            sc.seed = seed;
            wxgen::SynthesisBatch batch;
            {
                py::gil_scoped_release release;
                const wxgen::Checkpoint cp = wxgen::load_checkpoint(path);
                batch = wxgen::synthesize(cp, sc);
            }
            return cubes_to_array(batch.fields);
        },
        py::arg("path"), py::arg("mode") = "scaled", py::arg("sigma") = 1.0,
        py::arg("threshold") = 0.0, py::arg("n") = 1, py::arg("seed") = 0,
        "Draw latents, decode with the checkpointed model, and return [n, t, h, w] mm/day.");

    m.def(
        "encode",
        [](const std::string& path, const FloatArray& cubes, double scale) {
            const wxgen::Checkpoint cp = wxgen::load_checkpoint(path);
            const double s = scale > 0.0 ? scale : cp.norm.scale;
            wxgen::CubeDataset ds = cubes_from_array(cubes, true, s);
            std::vector<size_t> idx(ds.count);
            std::iota(idx.begin(), idx.end(), 0);
            wxgen::NoGradGuard no_grad;
            wxgen::Tensor x = wxgen::cubes_to_tensor(ds, idx);
            wxgen::LatentStats stats = wxgen::encode(x, cp.params, cp.model);
            return py::make_tuple(tensor_to_array2d(stats.mu), tensor_to_array2d(stats.log_var));
        },
        py::arg("path"), py::arg("cubes"), py::arg("scale") = 0.0,
        "Posterior (mu, log_var) of normalized cubes under a checkpointed model; scale <= 0 "
        "uses the checkpoint's own normalization constant.");

    m.def(
        "decode",
        [](const std::string& path, const DoubleArray& latents) {
            const wxgen::Checkpoint cp = wxgen::load_checkpoint(path);
            const wxgen::SynthesisBatch batch = wxgen::decode_latents(
                cp, latents_from_array(latents), cp.norm, wxgen::checkpoint_digest(cp));
            return cubes_to_array(batch.fields);
        },
        py::arg("path"), py::arg("latents"),
        "Decode [n, k] latents with a checkpointed model; returns [n, t, h, w] mm/day.");

    m.def(
        "sample_scaled",
        [](size_t n, size_t k, double sigma, uint64_t seed) {
            wxgen::SamplerConfig sc;
            sc.mode = wxgen::SampleMode::scaled;
            sc.sigma = sigma;
            sc.n = n;
            sc.seed = seed;
            return tensor_to_array2d(wxgen::sample_scaled(k, sc));
        },
        py::arg("n"), py::arg("k"), py::arg("sigma") = 1.0, py::arg("seed") = 0,
        "[n, k] latents with each entry N(0, sigma^2).");

    m.def(
        "sample_tail",
        [](size_t n, size_t k, double threshold, uint64_t seed) {
            wxgen::SamplerConfig sc;
            sc.mode = wxgen::SampleMode::tail;
            sc.threshold = threshold;
            sc.n = n;
            sc.seed = seed;
            return tensor_to_array2d(wxgen::sample_tail(k, sc));
        },
        py::arg("n"), py::arg("k"), py::arg("threshold") = 0.0, py::arg("seed") = 0,
        "[n, k] latents from the two-sided normal tail |z| >= threshold.");

    m.def(
        "kl_normal",
        [](const DoubleArray& mu, const DoubleArray& log_var) {
            wxgen::LatentStats stats{latents_from_array(mu), latents_from_array(log_var)};
            return wxgen::kl_normal(stats).item();
        },
        py::arg("mu"), py::arg("log_var"),
        "Closed-form KL to the standard normal, summed over dims, averaged over the batch.");

    m.def(
        "quantiles",
        [](const FloatArray& values, const DoubleArray& probs) {
            std::span<const float> v(values.data(), (size_t)values.size());
            const std::vector<double> p = probs_vector(probs);
            const std::vector<double> q = wxgen::quantiles(v, p);
            py::array_t<double> out((py::ssize_t)q.size());
            std::copy(q.begin(), q.end(), out.mutable_data());
            return out;
        },
        py::arg("values"), py::arg("probs"),
        "Linear-interpolation quantiles of the flattened values at the given probs.");

    m.def("default_probs", [](size_t n) {
        const std::vector<double> p = wxgen::default_probs(n);
        py::array_t<double> out((py::ssize_t)p.size());
        std::copy(p.begin(), p.end(), out.mutable_data());
        return out;
    }, py::arg("n") = 199, "n equally spaced interior probabilities i/(n+1).");

    m.def(
        "qq_divergence",
        [](const DoubleArray& probs, const DoubleArray& q_a, const DoubleArray& q_b,
           double upto) {
            wxgen::QQCurve curve;
            curve.probs = probs_vector(probs);
            curve.q_a = probs_vector(q_a);
            curve.q_b = probs_vector(q_b);
            return wxgen::qq_divergence(curve, upto);
        },
        py::arg("probs"), py::arg("q_a"), py::arg("q_b"), py::arg("upto") = 1.0,
        "max |q_a - q_b| over probs <= upto.");

    m.def(
        "reference_extremes",
        [](const FloatArray& cubes, double fraction, const std::string& direction) {
            wxgen::ExtremeRefSpec spec;
            spec.fraction = fraction;
            if (direction == "top")
                spec.direction = wxgen::ExtremeDirection::top;
            else if (direction == "bottom")
                spec.direction = wxgen::ExtremeDirection::bottom;
            else
                throw wxgen::ValidationError("direction must be 'top' or 'bottom', got '" +
                                             direction + "'");
            const wxgen::CubeDataset ds = cubes_from_array(cubes, false, 0.0);
            return cubes_to_array(wxgen::reference_extremes(ds, spec));
        },
        py::arg("cubes"), py::arg("fraction") = 0.1, py::arg("direction") = "top",
        "The fraction of cubes with the greatest (or lowest) mean, original order kept.");

    m.def(
        "gradcheck",
        [](uint64_t seed, double step, double tol, size_t probes, size_t batch, double beta) {
            wxgen::GradCheckReport r;
            {
                py::gil_scoped_release release;
                r = wxgen::gradcheck_vae(wxgen::toy_model_config(), seed, step, tol, probes,
                                         batch, beta, wxgen::GradCheckPoint::smooth_region);
            }
            py::dict out;
            out["ok"] = r.ok();
            out["checked"] = r.checked;
            out["failed"] = r.failed;
            out["max_rel_err"] = r.max_rel_err;
            return out;
        },
        py::arg("seed") = 1, py::arg("step") = 1e-4, py::arg("tol") = 1e-3,
        py::arg("probes") = 8, py::arg("batch") = 2, py::arg("beta") = 0.5,
        "Finite-difference check of the toy model's gradients at a kink-free point.");
}
