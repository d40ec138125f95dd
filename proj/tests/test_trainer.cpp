#include "wxgen/trainer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "wxgen/checkpoint.hpp"
#include "wxgen/error.hpp"
#include "wxgen/gradcheck.hpp"
#include "wxgen/ioutil.hpp"
#include "wxgen/rng.hpp"

using namespace wxgen;

namespace {

// Mechanics tests run on tiny 8^3 cubes; the data just has to be valid
// normalized input, not meteorologically meaningful.
CubeDataset uniform_dataset(uint32_t count, size_t extent, uint64_t seed) {
    CubeDataset ds;
    ds.count = count;
    ds.t = ds.h = ds.w = (uint32_t)extent;
    ds.normalized = true;
    ds.stats = NormStats{"log1p_max", 4.0};
    ds.values.resize((size_t)count * ds.cube_size());
    Rng rng(seed);
    for (float& v : ds.values) v = (float)rng.uniform();
    return ds;
}

ModelConfig tiny_model() {
    return toy_model_config();  // 8^3 input, small widths
}

bool params_bitwise_equal(const VaeParams& a, const VaeParams& b) {
    auto na = a.named();
    auto nb = b.named();
    for (size_t i = 0; i < na.size(); ++i) {
        const auto& da = na[i].second->data();
        const auto& db = nb[i].second->data();
        if (da.size() != db.size()) return false;
        if (std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig ok;
    CHECK_NOTHROW(ok.validate());

    auto broken = [](auto&& tweak) {
        TrainConfig c;
        tweak(c);
        return c;
    };
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.epochs = 0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.batch_size = 0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.lr = -1.0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.adam_beta1 = 1.0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.adam_eps = 0.0; }).validate(), ValidationError);
    CHECK_THROWS_WITH_AS(broken([](TrainConfig& c) { c.epochs = 5; c.warmup_epochs = 6; }).validate(),
                         doctest::Contains("warmup_epochs"), ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.beta_target = NAN; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.early_stop_patience = 0; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.early_stop_min_delta = -1e-3; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.validation_fraction = 0.0; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.validation_fraction = 1.0; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](TrainConfig& c) { c.grad_clip = true; c.grad_clip_norm = 0.0; })
                        .validate(),
                    ValidationError);
}

TEST_CASE("beta schedule") {
    TrainConfig c;
    c.warmup_epochs = 10;
    c.beta_target = 0.05;
    CHECK(beta_schedule(0, c) == 0.0);
    CHECK(beta_schedule(9, c) == 0.0);
    CHECK(beta_schedule(10, c) == 0.05);
    CHECK(beta_schedule(999, c) == 0.05);

    SUBCASE("linear ramp option") {
        c.warmup_ramp = true;
        c.warmup_epochs = 4;
        c.beta_target = 1.0;
        CHECK(beta_schedule(0, c) == 0.0);
        CHECK(beta_schedule(1, c) == 0.25);
        CHECK(beta_schedule(3, c) == 0.75);
        CHECK(beta_schedule(4, c) == 1.0);
    }

    SUBCASE("unresolved target is rejected") {
        c.beta_target = -1.0;
        CHECK_THROWS_WITH_AS(beta_schedule(0, c), doctest::Contains("resolved"), ValidationError);
    }

    SUBCASE("default target is latent_dim per pixel") {
        TrainConfig d;  // beta_target = -1 (auto)
        ModelConfig desk = ModelConfig::desk();
        CHECK(d.resolved_beta_target(desk) == 8.0 / (16.0 * 16.0 * 16.0));
        CHECK(d.resolved_beta_target(ModelConfig::paper()) == 30.0 / 32768.0);
        d.beta_target = 0.2;
        CHECK(d.resolved_beta_target(desk) == 0.2);
        CHECK(d.resolved(desk).beta_target == 0.2);
    }
}

TEST_CASE("zero learning rate leaves parameters at their init") {
    CubeDataset ds = uniform_dataset(10, 8, 21);
    // one cube repeated: every cube is a copy of the first
    for (uint32_t i = 1; i < ds.count; ++i)
        std::memcpy(ds.values.data() + (size_t)i * ds.cube_size(), ds.values.data(),
                    ds.cube_size() * sizeof(float));

    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.epochs = 2;
    tc.warmup_epochs = 1;
    tc.lr = 0.0;
    tc.seed = 99;
    TrainResult res = train(ds, model, tc);

    Rng root(tc.seed);
    Rng init_rng = root.spawn(1);
    VaeParams expected = init_params(model, init_rng);
    CHECK(params_bitwise_equal(res.params, expected));
    REQUIRE(res.history.epochs.size() == 2);
    CHECK(res.history.epochs[0].epoch == 0);
    CHECK(res.history.epochs[1].epoch == 1);
    CHECK(res.history.stopped_epoch == 1);
    CHECK(res.history.best_epoch == 0);  // constant val_total, first minimum wins
    CHECK(res.history.epochs[0].val_total == res.history.epochs[1].val_total);
}

TEST_CASE("beta zero trains as a pure autoencoder") {
    // The claim: with beta = 0 the KL term contributes exactly nothing to any
    // gradient, so backward(total) and backward(rec) agree bitwise.
    ModelConfig model = tiny_model();
    Rng root(5);
    Rng init_rng = root.spawn(1);
    VaeParams params = init_params(model, init_rng);

    Rng data_rng = root.spawn(2);
    Tensor x = Tensor::zeros({2, 1, model.input_t, model.input_h, model.input_w});
    for (double& v : x.data()) v = data_rng.uniform();
    std::vector<double> noise_vals(2 * model.latent_dim);
    for (double& v : noise_vals) v = data_rng.normal();

    auto run = [&](bool through_total) {
        Tensor noise = Tensor::from_data({2, model.latent_dim}, noise_vals);
        VaeForward fwd = vae_forward(x, params, model, noise);
        LossBreakdown loss = elbo_loss(x, fwd.xhat, fwd.stats, 0.0);
        backward(through_total ? loss.total : loss.rec);
        std::vector<std::vector<double>> grads;
        for (auto& [name, t] : params.named()) grads.push_back(t->grad());
        params.clear_grads();
        return grads;
    };

    auto g_total = run(true);
    auto g_rec = run(false);
    for (size_t i = 0; i < g_total.size(); ++i) {
        REQUIRE(g_total[i].size() == g_rec[i].size());
        CHECK(std::memcmp(g_total[i].data(), g_rec[i].data(),
                          g_total[i].size() * sizeof(double)) == 0);
    }
}

TEST_CASE("history records the warm-up schedule") {
    CubeDataset ds = uniform_dataset(30, 8, 4);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.epochs = 6;
    tc.warmup_epochs = 3;
    tc.beta_target = 0.01;
    tc.seed = 7;
    TrainResult res = train(ds, model, tc);

    REQUIRE(res.history.epochs.size() == 6);
    for (size_t e = 0; e < 3; ++e) CHECK(res.history.epochs[e].beta == 0.0);
    for (size_t e = 3; e < 6; ++e) CHECK(res.history.epochs[e].beta == 0.01);
    for (const EpochRecord& r : res.history.epochs) {
        CHECK(std::isfinite(r.train_total));
        CHECK(std::isfinite(r.val_total));
        CHECK(r.train_reg >= 0.0);  // KL is non-negative
    }
    // total = rec + beta * reg at every epoch
    for (const EpochRecord& r : res.history.epochs)
        CHECK(r.train_total == doctest::Approx(r.train_rec + r.beta * r.train_reg).epsilon(1e-12));
}

TEST_CASE("fixed seed reproduces the run bitwise; the dataset is untouched") {
    CubeDataset ds = uniform_dataset(24, 8, 13);
    std::vector<float> snapshot = ds.values;
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.epochs = 3;
    tc.warmup_epochs = 1;
    tc.beta_target = 0.02;
    tc.seed = 1234;

    TrainResult a = train(ds, model, tc);
    TrainResult b = train(ds, model, tc);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    for (size_t i = 0; i < a.history.epochs.size(); ++i) {
        const EpochRecord &ra = a.history.epochs[i], &rb = b.history.epochs[i];
        CHECK(std::memcmp(&ra.train_total, &rb.train_total, sizeof(double)) == 0);
        CHECK(std::memcmp(&ra.train_rec, &rb.train_rec, sizeof(double)) == 0);
        CHECK(std::memcmp(&ra.train_reg, &rb.train_reg, sizeof(double)) == 0);
        CHECK(std::memcmp(&ra.val_total, &rb.val_total, sizeof(double)) == 0);
    }
    CHECK(a.history.best_epoch == b.history.best_epoch);
    CHECK(params_bitwise_equal(a.params, b.params));
    CHECK(std::memcmp(snapshot.data(), ds.values.data(), snapshot.size() * sizeof(float)) == 0);

    SUBCASE("a different seed gives a different run") {
        tc.seed = 4321;
        TrainResult c = train(ds, model, tc);
        CHECK(c.history.epochs[0].train_total != a.history.epochs[0].train_total);
    }
}

TEST_CASE("early stop halts after patience epochs without improvement") {
    CubeDataset ds = uniform_dataset(20, 8, 2);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.epochs = 100;
    tc.warmup_epochs = 0;
    tc.lr = 0.0;  // val_total is constant, so nothing ever improves after epoch 0
    tc.early_stop_patience = 3;
    tc.early_stop_min_delta = 0.0;
    tc.seed = 8;
    TrainResult res = train(ds, model, tc);
    CHECK(res.history.epochs.size() == 4);  // epoch 0 improves on +inf, then 3 stale epochs
    CHECK(res.history.stopped_epoch == 3);
    CHECK(res.history.best_epoch == 0);
}

TEST_CASE("returned parameters are the best epoch's parameters") {
    CubeDataset ds = uniform_dataset(30, 8, 66);
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.epochs = 8;
    tc.warmup_epochs = 2;
    tc.beta_target = 0.05;
    tc.lr = 0.02;  // deliberately hot so val_total bounces
    tc.seed = 3;
    TrainResult a = train(ds, model, tc);

    double min_val = a.history.epochs[a.history.best_epoch].val_total;
    for (const EpochRecord& r : a.history.epochs) CHECK(min_val <= r.val_total);
    CHECK(a.history.best_epoch <= a.history.stopped_epoch);

    // Rerunning with epochs cut at best_epoch+1 must land on the same best
    // parameters: the per-epoch streams do not depend on when training stops.
    INFO("best epoch: ", a.history.best_epoch);
    TrainConfig tb = tc;
    tb.epochs = a.history.best_epoch + 1;
    tb.warmup_epochs = std::min(tb.warmup_epochs, tb.epochs);
    TrainResult b = train(ds, model, tb);
    CHECK(b.history.best_epoch == a.history.best_epoch);
    CHECK(params_bitwise_equal(a.params, b.params));
}

TEST_CASE("training rejects bad inputs") {
    ModelConfig model = tiny_model();
    TrainConfig tc;
    tc.epochs = 1;
    tc.warmup_epochs = 0;

    SUBCASE("validation split of zero cubes") {
        CubeDataset ds = uniform_dataset(4, 8, 1);
        tc.validation_fraction = 0.1;  // round(0.4) = 0
        CHECK_THROWS_WITH_AS(train(ds, model, tc), doctest::Contains("validation split is empty"),
                             ValidationError);
    }
    SUBCASE("validation split that swallows everything") {
        CubeDataset ds = uniform_dataset(10, 8, 1);
        tc.validation_fraction = 0.96;  // round(9.6) = 10
        CHECK_THROWS_WITH_AS(train(ds, model, tc), doctest::Contains("no training data"),
                             ValidationError);
    }
    SUBCASE("unnormalized data") {
        CubeDataset ds = uniform_dataset(10, 8, 1);
        ds.normalized = false;
        ds.stats = NormStats{};
        CHECK_THROWS_WITH_AS(train(ds, model, tc), doctest::Contains("normalized"),
                             ValidationError);
    }
    SUBCASE("extent mismatch") {
        CubeDataset ds = uniform_dataset(10, 16, 1);
        CHECK_THROWS_WITH_AS(train(ds, model, tc), doctest::Contains("model expects"),
                             ValidationError);
    }
    SUBCASE("zero epochs") {
        CubeDataset ds = uniform_dataset(10, 8, 1);
        tc.epochs = 0;
        CHECK_THROWS_AS(train(ds, model, tc), ValidationError);
    }
}

TEST_CASE("reconstruction loss falls on real monsoon cubes") {
    MonsoonGenConfig gen;
    gen.seed = 31;
    GridSeries series = gen_synthetic_monsoon(gen);
    WindowConfig wc = WindowConfig::desk();
    wc.n_samples = 300;
    wc.seed = 32;
    CubeDataset ds = window_samples(series, wc);
    normalize(ds);

    TrainConfig tc;
    tc.epochs = 10;
    tc.warmup_epochs = 10;  // pure reconstruction for this smoke check
    tc.seed = 33;
    TrainResult res = train(ds, ModelConfig::desk(), tc);
    REQUIRE(res.history.epochs.size() == 10);
    double first = res.history.epochs.front().train_rec;
    double last = res.history.epochs.back().train_rec;
    INFO("train_rec epoch 0: ", first, " -> epoch 9: ", last);
    CHECK(last < first);
}

TEST_CASE("params shape table matches the initializer") {
    for (ModelConfig cfg : {ModelConfig::desk(), tiny_model()}) {
        cfg.input_t = 8;
        cfg.input_h = 12;
        cfg.input_w = 16;  // non-cubic extents exercise the flat sizes
        Rng rng(1);
        VaeParams p = init_params(cfg, rng);
        auto shapes = param_shapes(cfg);
        auto named = p.named();
        REQUIRE(shapes.size() == named.size());
        for (size_t i = 0; i < shapes.size(); ++i) {
            CHECK(shapes[i].first == named[i].first);
            CHECK(shapes[i].second == named[i].second->shape());
        }
    }
}

TEST_CASE("checkpoint round-trip is bitwise") {
    ModelConfig model = tiny_model();
    Rng rng(17);
    Checkpoint cp;
    cp.params = init_params(model, rng);
    cp.model = model;
    cp.train.epochs = 42;
    cp.train.batch_size = 7;
    cp.train.lr = 0.000125;
    cp.train.warmup_epochs = 11;
    cp.train.warmup_ramp = true;
    cp.train.beta_target = 0.0375;
    cp.train.early_stop_patience = 4;
    cp.train.early_stop_min_delta = 2.5e-4;
    cp.train.seed = 0xDEADBEEFCAFEF00DULL;
    cp.train.validation_fraction = 0.125;
    cp.train.grad_clip = true;
    cp.train.grad_clip_norm = 2.5;
    cp.train.epochs = 42;
    cp.norm = NormStats{"log1p_max", 5.75};

    auto path = temp_path("wxgen_test_ckpt.bin");
    save_checkpoint(cp, path);
    Checkpoint back = load_checkpoint(path);

    CHECK(params_bitwise_equal(cp.params, back.params));
    CHECK(back.model.input_t == model.input_t);
    CHECK(back.model.conv_channels == model.conv_channels);
    CHECK(back.model.bottleneck_width == model.bottleneck_width);
    CHECK(back.model.latent_dim == model.latent_dim);
    CHECK(back.model.decoder_channels == model.decoder_channels);
    CHECK(back.model.output_activation == model.output_activation);
    CHECK(back.train.epochs == 42);
    CHECK(back.train.batch_size == 7);
    CHECK(back.train.lr == 0.000125);
    CHECK(back.train.warmup_epochs == 11);
    CHECK(back.train.warmup_ramp == true);
    CHECK(back.train.beta_target == 0.0375);
    CHECK(back.train.early_stop_patience == 4);
    CHECK(back.train.early_stop_min_delta == 2.5e-4);
    CHECK(back.train.seed == 0xDEADBEEFCAFEF00DULL);
    CHECK(back.train.validation_fraction == 0.125);
    CHECK(back.train.grad_clip == true);
    CHECK(back.train.grad_clip_norm == 2.5);
    CHECK(back.norm.transform == "log1p_max");
    CHECK(back.norm.scale == 5.75);

    SUBCASE("loaded params drive the model identically") {
        Rng data_rng(3);
        Tensor x = Tensor::zeros({1, 1, model.input_t, model.input_h, model.input_w});
        for (double& v : x.data()) v = data_rng.uniform();
        NoGradGuard ng;
        LatentStats s1 = encode(x, cp.params, model);
        LatentStats s2 = encode(x, back.params, model);
        CHECK(std::memcmp(s1.mu.data().data(), s2.mu.data().data(),
                          s1.mu.size() * sizeof(double)) == 0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects corrupt files") {
    ModelConfig model = tiny_model();
    Rng rng(9);
    Checkpoint cp;
    cp.params = init_params(model, rng);
    cp.model = model;
    auto path = temp_path("wxgen_test_ckpt_bad.bin");
    save_checkpoint(cp, path);
    const std::vector<std::byte> good = read_file_bytes(path);

    SUBCASE("wrong magic") {
        std::vector<std::byte> bad = good;
        bad[0] = std::byte{'X'};
        write_file_atomic(path, bad);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("not a checkpoint"), IoError);
    }
    SUBCASE("file shorter than the magic") {
        write_file_atomic(path, std::span<const std::byte>(good.data(), 5));
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("not a checkpoint"), IoError);
    }
    SUBCASE("truncated tensor payload") {
        write_file_atomic(path, std::span<const std::byte>(good.data(), good.size() - 3));
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), IoError);
    }
    SUBCASE("missing tensors") {
        // keep only magic + config block
        ByteReader r(good, "probe");
        r.str(8);
        size_t keep = 8 + 4 + r.u32();
        write_file_atomic(path, std::span<const std::byte>(good.data(), keep));
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("missing tensor"), IoError);
    }
    SUBCASE("tensor shape contradicting the config") {
        std::vector<std::byte> bad = good;
        // first tensor record sits right after the config block:
        // u32 name_len, name, u32 rank, then the first dim's u32
        ByteReader r(good, "probe");
        r.str(8);
        size_t pos = 8 + 4 + r.u32();
        uint32_t name_len = 0;
        std::memcpy(&name_len, bad.data() + pos, 4);
        size_t dim0 = pos + 4 + name_len + 4;
        bad[dim0] = std::byte{uint8_t(std::to_integer<uint8_t>(bad[dim0]) + 1)};
        write_file_atomic(path, bad);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("shape"), IoError);
    }
    SUBCASE("unknown config key") {
        std::vector<std::byte> bad;
        put_bytes(bad, "WXVAE001", 8);
        std::string block = "model.input_t=8\nnonsense=1\n";
        put_u32(bad, (uint32_t)block.size());
        put_bytes(bad, block.data(), block.size());
        write_file_atomic(path, bad);
        CHECK_THROWS_AS(load_checkpoint(path), IoError);  // missing keys reported first
    }
    std::filesystem::remove(path);
}

TEST_CASE("full-size model checkpoint reloads with latent dimension 30") {
    auto path = temp_path("wxgen_test_ckpt_paper.bin");
    ModelConfig model = ModelConfig::paper();
    std::vector<double> probe;  // first values of dense_bn.weight for a spot check
    {
        Rng rng(123);
        Checkpoint cp;
        cp.params = init_params(model, rng);
        cp.model = model;
        cp.norm = NormStats{"log1p_max", 6.1};
        const auto& w = cp.params.dense_bn_w.data();
        probe.assign(w.begin(), w.begin() + 64);
        save_checkpoint(cp, path);
    }
    Checkpoint back = load_checkpoint(path);
    CHECK(back.model.latent_dim == 30);
    CHECK(back.model.bottleneck_width == 500);
    CHECK(back.params.dense_mu_w.shape() == std::vector<size_t>{30, 500});
    CHECK(std::memcmp(back.params.dense_bn_w.data().data(), probe.data(),
                      probe.size() * sizeof(double)) == 0);
    std::filesystem::remove(path);
}
