// Command-line front end: every subcommand maps onto the library pipeline and
// writes a ".manifest" record (resolved knobs + file digests) next to each
// output, so any artifact can be reproduced bitwise from its manifest.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "wxgen/checkpoint.hpp"
#include "wxgen/data.hpp"
#include "wxgen/error.hpp"
#include "wxgen/gradcheck.hpp"
#include "wxgen/ioutil.hpp"
#include "wxgen/manifest.hpp"
#include "wxgen/qq.hpp"
#include "wxgen/sampler.hpp"
#include "wxgen/trainer.hpp"
#include "wxgen/vae.hpp"

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// One-line machine-readable error contract: kind selects the exit code.
int fail(const std::string& kind, std::string msg) {
    for (char& c : msg) {
        if (c == '\n') c = ' ';
        if (c == '"') c = '\'';
    }
    std::fprintf(stderr, "error kind=%s msg=\"%s\"\n", kind.c_str(), msg.c_str());
    return kind == "io" ? 2 : 1;
}

void put(wxgen::RunManifest& m, const std::string& key, const std::string& value) {
    m.add_config(key, value);
}
void put(wxgen::RunManifest& m, const std::string& key, double value) {
    m.add_config(key, wxgen::format_double(value));
}
void put(wxgen::RunManifest& m, const std::string& key, bool value) {
    m.add_config(key, value ? "1" : "0");
}
template <typename T>
    requires std::is_integral_v<T>
void put(wxgen::RunManifest& m, const std::string& key, T value) {
    m.add_config(key, std::to_string(value));
}

std::string history_csv(const wxgen::TrainHistory& history) {
    std::ostringstream out;
    out << "epoch,beta,train_total,train_rec,train_reg,val_total\n";
    for (const auto& r : history.epochs) {
        out << r.epoch << ',' << wxgen::format_double(r.beta) << ','
            << wxgen::format_double(r.train_total) << ',' << wxgen::format_double(r.train_rec)
            << ',' << wxgen::format_double(r.train_reg) << ','
            << wxgen::format_double(r.val_total) << '\n';
    }
    return std::move(out).str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weathergen: stochastic precipitation-field generator with a "
                 "controllable latent prior"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value config file; keys are <subcommand>.<flag> (e.g. train.epochs)")
        ->envname("WEATHERGEN_CONFIG");
    app.set_version_flag("--version", "weathergen 1.0");
    int exit_code = 0;

    // gen-data -----------------------------------------------------------
    wxgen::MonsoonGenConfig mg;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic monsoon rainfall grid");
    gen->configurable();
    gen->add_option("--out", gen_out, "output grid file")->required();
    gen->add_option("--days", mg.days, "number of days");
    gen->add_option("--grid-h", mg.height, "grid height in pixels");
    gen->add_option("--grid-w", mg.width, "grid width in pixels");
    gen->add_option("--start-day", mg.start_day_of_year, "day of year of the first record");
    gen->add_option("--wet-base", mg.base_wet_prob, "dry-season wet-pixel probability");
    gen->add_option("--wet-boost", mg.seasonal_wet_prob, "extra wet probability at season peak");
    gen->add_option("--gamma-shape", mg.gamma_shape, "gamma shape of daily amounts");
    gen->add_option("--scale-base", mg.base_scale, "dry-season gamma scale, mm/day");
    gen->add_option("--scale-boost", mg.seasonal_scale, "extra gamma scale at season peak");
    gen->add_option("--storm-days", mg.storm_block_days, "consecutive days per storm block");
    gen->add_option("--storm-sigma", mg.storm_sigma, "lognormal sigma of storm multipliers");
    gen->add_option("--noise-amp", mg.noise_amplitude, "spatial lognormal noise strength");
    gen->add_option("--noise-radius", mg.noise_radius, "box-blur radius of the noise field");
    gen->add_option("--seed", mg.seed, "rng seed");
    gen->callback([&] {
        Timer timer;
        wxgen::GridSeries series = wxgen::gen_synthetic_monsoon(mg);
        wxgen::save_grid(gen_out, series);
        wxgen::RunManifest m;
        m.subcommand = "gen-data";
        put(m, "days", mg.days);
        put(m, "grid_h", mg.height);
        put(m, "grid_w", mg.width);
        put(m, "start_day", mg.start_day_of_year);
        put(m, "wet_base", mg.base_wet_prob);
        put(m, "wet_boost", mg.seasonal_wet_prob);
        put(m, "gamma_shape", mg.gamma_shape);
        put(m, "scale_base", mg.base_scale);
        put(m, "scale_boost", mg.seasonal_scale);
        put(m, "storm_days", mg.storm_block_days);
        put(m, "storm_sigma", mg.storm_sigma);
        put(m, "noise_amp", mg.noise_amplitude);
        put(m, "noise_radius", mg.noise_radius);
        put(m, "seed", mg.seed);
        m.add_output(gen_out);
        m.wall_seconds = timer.seconds();
        wxgen::write_manifests(m);
        std::printf("wrote %s (%u days, %ux%u)\n", gen_out.c_str(), series.days, series.height,
                    series.width);
    });

    // prepare ------------------------------------------------------------
    wxgen::WindowConfig wc;
    double test_fraction = 0.2;
    uint64_t split_seed = 1;
    std::string prep_grid, out_train, out_test;
    auto* prep = app.add_subcommand("prepare", "window a grid into training and test cube sets");
    prep->configurable();
    prep->add_option("--grid", prep_grid, "input grid file")->required();
    prep->add_option("--out-train", out_train, "output training cubes (normalized)")->required();
    prep->add_option("--out-test", out_test, "output test cubes (physical mm/day)")->required();
    prep->add_option("--window", wc.window, "days per cube");
    prep->add_option("--day-min", wc.day_min, "first eligible day of year");
    prep->add_option("--day-max", wc.day_max, "last eligible day of year (inclusive)");
    prep->add_option("--boxes", wc.n_boxes, "number of jittered spatial crop boxes");
    prep->add_option("--box-h", wc.box_h, "crop box height");
    prep->add_option("--box-w", wc.box_w, "crop box width");
    prep->add_option("--out-h", wc.out_h, "cube height after resize");
    prep->add_option("--out-w", wc.out_w, "cube width after resize");
    prep->add_option("--samples", wc.n_samples, "total cubes to draw");
    prep->add_option("--seed", wc.seed, "windowing seed");
    prep->add_option("--test-fraction", test_fraction, "fraction of cubes held out for testing");
    prep->add_option("--split-seed", split_seed, "train/test shuffle seed");
    prep->callback([&] {
        Timer timer;
        wxgen::GridSeries series = wxgen::load_grid(prep_grid);
        wxgen::CubeDataset all = wxgen::window_samples(series, wc);
        auto [train_ds, test_ds] =
            wxgen::split_train_test(std::move(all), test_fraction, split_seed);
        // Normalize after the split so the constant comes from training data
        // only; the test side stays in physical units.
        wxgen::NormStats stats = wxgen::normalize(train_ds);
        wxgen::save_cubes(out_train, train_ds);
        wxgen::save_cubes(out_test, test_ds);
        wxgen::RunManifest m;
        m.subcommand = "prepare";
        put(m, "window", wc.window);
        put(m, "day_min", wc.day_min);
        put(m, "day_max", wc.day_max);
        put(m, "boxes", wc.n_boxes);
        put(m, "box_h", wc.box_h);
        put(m, "box_w", wc.box_w);
        put(m, "out_h", wc.out_h);
        put(m, "out_w", wc.out_w);
        put(m, "samples", wc.n_samples);
        put(m, "seed", wc.seed);
        put(m, "test_fraction", test_fraction);
        put(m, "split_seed", split_seed);
        put(m, "train_count", train_ds.count);
        put(m, "test_count", test_ds.count);
        put(m, "norm.transform", stats.transform);
        put(m, "norm.scale", stats.scale);
        m.add_input(prep_grid);
        m.add_output(out_train);
        m.add_output(out_test);
        m.wall_seconds = timer.seconds();
        wxgen::write_manifests(m);
        std::printf("wrote %s (%u cubes, normalized, scale=%s) and %s (%u cubes, mm/day)\n",
                    out_train.c_str(), train_ds.count, wxgen::format_double(stats.scale).c_str(),
                    out_test.c_str(), test_ds.count);
    });

    // train ---------------------------------------------------------------
    std::string train_data, train_out, history_out, activation = "softplus";
    wxgen::ModelConfig mc = wxgen::ModelConfig::paper();
    wxgen::TrainConfig tc;
    auto* tr = app.add_subcommand("train", "train the convolutional vae on a cube set");
    tr->configurable();
    tr->add_option("--data", train_data, "normalized training cubes")->required();
    tr->add_option("--out", train_out, "output model checkpoint")->required();
    tr->add_option("--history", history_out, "per-epoch csv (default: <out>.history.csv)");
    tr->add_option("--epochs", tc.epochs, "maximum epochs");
    tr->add_option("--batch", tc.batch_size, "minibatch size");
    tr->add_option("--lr", tc.lr, "adam learning rate");
    tr->add_option("--adam-beta1", tc.adam_beta1, "adam first-moment decay");
    tr->add_option("--adam-beta2", tc.adam_beta2, "adam second-moment decay");
    tr->add_option("--adam-eps", tc.adam_eps, "adam denominator epsilon");
    tr->add_option("--warmup", tc.warmup_epochs, "epochs before the regularization weight applies");
    tr->add_flag("--ramp", tc.warmup_ramp, "ramp the weight linearly during warm-up");
    tr->add_option("--beta", tc.beta_target,
                   "regularization weight after warm-up (<0: latent_dim / pixels)");
    tr->add_option("--patience", tc.early_stop_patience, "early-stop patience, epochs");
    tr->add_option("--min-delta", tc.early_stop_min_delta, "minimum val improvement that counts");
    tr->add_option("--seed", tc.seed, "training seed (init, split, shuffle, noise)");
    tr->add_option("--val-fraction", tc.validation_fraction, "validation split fraction");
    tr->add_flag("--grad-clip", tc.grad_clip, "clip gradients by global norm");
    tr->add_option("--grad-clip-norm", tc.grad_clip_norm, "global-norm clip threshold");
    tr->add_option("--latent", mc.latent_dim, "latent dimension");
    tr->add_option("--conv-channels", mc.conv_channels, "encoder conv channels");
    tr->add_option("--bottleneck", mc.bottleneck_width, "encoder dense width");
    tr->add_option("--decoder-channels", mc.decoder_channels, "decoder reshape channels");
    tr->add_option("--activation", activation, "output activation: softplus|relu");
    tr->callback([&] {
        Timer timer;
        wxgen::CubeDataset ds = wxgen::load_cubes(train_data);
        mc.input_t = ds.t;
        mc.input_h = ds.h;
        mc.input_w = ds.w;
        mc.output_activation = wxgen::output_activation_from_string(activation);
        tc.on_epoch = [](const wxgen::EpochRecord& r) {
            std::printf("epoch=%zu beta=%.6g train_total=%.6g train_rec=%.6g val_total=%.6g\n",
                        r.epoch, r.beta, r.train_total, r.train_rec, r.val_total);
            std::fflush(stdout);
        };
        wxgen::TrainResult res = wxgen::train(ds, mc, tc);
        wxgen::Checkpoint cp{res.params, mc, res.config, ds.stats};
        cp.train.on_epoch = nullptr;
        wxgen::save_checkpoint(cp, train_out);
        if (history_out.empty()) history_out = train_out + ".history.csv";
        wxgen::write_file_atomic(history_out, history_csv(res.history));
        wxgen::RunManifest m;
        m.subcommand = "train";
        put(m, "epochs", tc.epochs);
        put(m, "batch", tc.batch_size);
        put(m, "lr", tc.lr);
        put(m, "adam_beta1", tc.adam_beta1);
        put(m, "adam_beta2", tc.adam_beta2);
        put(m, "adam_eps", tc.adam_eps);
        put(m, "warmup", tc.warmup_epochs);
        put(m, "ramp", tc.warmup_ramp);
        put(m, "beta", res.config.beta_target);
        put(m, "patience", tc.early_stop_patience);
        put(m, "min_delta", tc.early_stop_min_delta);
        put(m, "seed", tc.seed);
        put(m, "val_fraction", tc.validation_fraction);
        put(m, "grad_clip", tc.grad_clip);
        put(m, "grad_clip_norm", tc.grad_clip_norm);
        put(m, "input_t", mc.input_t);
        put(m, "input_h", mc.input_h);
        put(m, "input_w", mc.input_w);
        put(m, "latent", mc.latent_dim);
        put(m, "conv_channels", mc.conv_channels);
        put(m, "bottleneck", mc.bottleneck_width);
        put(m, "decoder_channels", mc.decoder_channels);
        put(m, "activation", wxgen::to_string(mc.output_activation));
        put(m, "best_epoch", res.history.best_epoch);
        put(m, "stopped_epoch", res.history.stopped_epoch);
        m.add_input(train_data);
        m.add_output(train_out);
        m.add_output(history_out);
        m.wall_seconds = timer.seconds();
        wxgen::write_manifests(m);
        std::printf("best_epoch=%zu stopped_epoch=%zu checkpoint=%s\n", res.history.best_epoch,
                    res.history.stopped_epoch, wxgen::checkpoint_digest(cp).c_str());
    });

    // synth ---------------------------------------------------------------
    std::string model_path, synth_out, mode_str = "scaled";
    wxgen::SamplerConfig sc;
    auto* sy = app.add_subcommand("synth", "sample latents and decode precipitation cubes");
    sy->configurable();
    sy->add_option("--model", model_path, "model checkpoint")->required();
    sy->add_option("--out", synth_out, "output cube file (mm/day)")->required();
    sy->add_option("--mode", mode_str, "latent prior: scaled|tail");
    sy->add_option("--sigma", sc.sigma, "std-dev multiplier (scaled mode)");
    sy->add_option("--threshold", sc.threshold, "minimum |z| per coordinate (tail mode)");
    sy->add_option("--n", sc.n, "number of fields to synthesize");
    sy->add_option("--seed", sc.seed, "sampling seed");
    sy->callback([&] {
        Timer timer;
        sc.mode = wxgen::sample_mode_from_string(mode_str);
        wxgen::Checkpoint cp = wxgen::load_checkpoint(model_path);
        wxgen::SynthesisBatch batch = wxgen::synthesize(cp, sc);
        wxgen::save_cubes(synth_out, batch.fields);
        const std::string prov_path = synth_out + ".provenance";
        wxgen::write_file_atomic(prov_path, batch.provenance);
        wxgen::RunManifest m;
        m.subcommand = "synth";
        put(m, "mode", mode_str);
        if (sc.mode == wxgen::SampleMode::scaled)
            put(m, "sigma", sc.sigma);
        else
            put(m, "threshold", sc.threshold);
        put(m, "n", sc.n);
        put(m, "seed", sc.seed);
        m.add_input(model_path);
        m.add_output(synth_out);
        m.add_output(prov_path);
        m.wall_seconds = timer.seconds();
        wxgen::write_manifests(m);
        std::printf("wrote %s (%u cubes of %ux%ux%u, mm/day)\n", synth_out.c_str(),
                    batch.fields.count, batch.fields.t, batch.fields.h, batch.fields.w);
    });

    // eval ----------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluation utilities");
    ev->require_subcommand(1);

    std::string qa, qb, qq_csv, qq_svg;
    size_t n_probs = 199;
    double upto = 1.0;
    auto* eq = ev->add_subcommand("qq", "quantile-quantile comparison of two cube sets");
    eq->configurable();
    eq->add_option("--a", qa, "first cube set (reference axis)")->required();
    eq->add_option("--b", qb, "second cube set")->required();
    eq->add_option("--out", qq_csv, "output csv")->required();
    eq->add_option("--svg", qq_svg, "optional svg scatter plot");
    eq->add_option("--probs", n_probs, "number of quantile points");
    eq->add_option("--upto", upto, "report max divergence over probs <= this");
    eq->callback([&] {
        Timer timer;
        wxgen::CubeDataset a = wxgen::load_cubes(qa);
        wxgen::CubeDataset b = wxgen::load_cubes(qb);
        // Compare in physical units regardless of how the files were stored.
        if (a.normalized) wxgen::denormalize(a);
        if (b.normalized) wxgen::denormalize(b);
        wxgen::QQCurve curve = wxgen::qq_curve(a, b, n_probs);
        wxgen::emit_qq(curve, qq_csv,
                       qq_svg.empty() ? std::nullopt
                                      : std::optional<std::filesystem::path>(qq_svg));
        std::printf("qq_divergence=%s\n", wxgen::format_double(wxgen::qq_divergence(curve, upto)).c_str());
        wxgen::RunManifest m;
        m.subcommand = "eval qq";
        put(m, "probs", n_probs);
        put(m, "upto", upto);
        m.add_input(qa);
        m.add_input(qb);
        m.add_output(qq_csv);
        if (!qq_svg.empty()) m.add_output(qq_svg);
        m.wall_seconds = timer.seconds();
        wxgen::write_manifests(m);
    });

    std::string ex_data, ex_out, ex_dir = "top";
    wxgen::ExtremeRefSpec ex_spec;
    auto* ee = ev->add_subcommand("extremes", "select the extreme-mean subset of a cube set");
    ee->configurable();
    ee->add_option("--data", ex_data, "input cube set")->required();
    ee->add_option("--out", ex_out, "output cube set")->required();
    ee->add_option("--fraction", ex_spec.fraction, "fraction of cubes to keep");
    ee->add_option("--direction", ex_dir, "rank by cube mean: top|bottom");
    ee->callback([&] {
        Timer timer;
        if (ex_dir == "top")
            ex_spec.direction = wxgen::ExtremeDirection::top;
        else if (ex_dir == "bottom")
            ex_spec.direction = wxgen::ExtremeDirection::bottom;
        else
            throw wxgen::ValidationError("direction must be 'top' or 'bottom', got '" + ex_dir +
                                         "'");
        wxgen::CubeDataset ds = wxgen::load_cubes(ex_data);
        wxgen::CubeDataset ref = wxgen::reference_extremes(ds, ex_spec);
        wxgen::save_cubes(ex_out, ref);
        wxgen::RunManifest m;
        m.subcommand = "eval extremes";
        put(m, "fraction", ex_spec.fraction);
        put(m, "direction", ex_dir);
        put(m, "kept", ref.count);
        m.add_input(ex_data);
        m.add_output(ex_out);
        m.wall_seconds = timer.seconds();
        wxgen::write_manifests(m);
        std::printf("kept %u of %u cubes (%s by mean)\n", ref.count, ds.count, ex_dir.c_str());
    });

    // gradcheck ------------------------------------------------------------
    uint64_t gc_seed = 1;
    double gc_step = 1e-4, gc_tol = 1e-3, gc_beta = 0.5;
    size_t gc_probes = 8, gc_batch = 2;
    std::string gc_point = "smooth";
    auto* gc = app.add_subcommand("gradcheck",
                                  "check analytic gradients against finite differences");
    gc->configurable();
    gc->add_option("--seed", gc_seed, "rng seed for point and data");
    gc->add_option("--step", gc_step, "finite-difference step");
    gc->add_option("--tol", gc_tol, "relative-error tolerance");
    gc->add_option("--probes", gc_probes, "elements checked per tensor (0 = all)");
    gc->add_option("--batch", gc_batch, "batch size of the probe input");
    gc->add_option("--beta", gc_beta, "regularization weight of the probed loss");
    gc->add_option("--point", gc_point, "evaluation point: smooth|natural");
    gc->callback([&] {
        wxgen::GradCheckPoint point;
        if (gc_point == "smooth")
            point = wxgen::GradCheckPoint::smooth_region;
        else if (gc_point == "natural")
            point = wxgen::GradCheckPoint::natural_init;
        else
            throw wxgen::ValidationError("point must be 'smooth' or 'natural', got '" + gc_point +
                                         "'");
        wxgen::GradCheckReport report = wxgen::gradcheck_vae(
            wxgen::toy_model_config(), gc_seed, gc_step, gc_tol, gc_probes, gc_batch, gc_beta,
            point);
        std::printf("%s\n", wxgen::format_report(report).c_str());
        if (!report.ok()) exit_code = 1;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what());
    } catch (const wxgen::IoError& e) {
        return fail("io", e.what());
    } catch (const wxgen::Error& e) {
        return fail("validation", e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return exit_code;
}
