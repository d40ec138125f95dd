#include "wxgen/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>

#include "wxgen/error.hpp"
#include "wxgen/ioutil.hpp"

namespace wxgen {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

void check_values(std::span<const float> values, const std::string& what) {
    for (size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw ValidationError(what + ": non-finite value at index " + std::to_string(i));
        if (values[i] < 0.0f)
            throw ValidationError(what + ": negative value " + std::to_string(values[i]) +
                                  " at index " + std::to_string(i));
    }
}

}  // namespace

void GridSeries::validate() const {
    require(days >= 1 && height >= 1 && width >= 1,
            "grid series dimensions must be positive, got days=" + std::to_string(days) +
                " height=" + std::to_string(height) + " width=" + std::to_string(width));
    require(start_day_of_year >= 1 && start_day_of_year <= 366,
            "start_day_of_year must be in [1, 366], got " + std::to_string(start_day_of_year));
    require(values.size() == size(), "grid series holds " + std::to_string(values.size()) +
                                         " values, dimensions need " + std::to_string(size()));
    check_values(values, "grid series");
}

void CubeDataset::validate() const {
    require(t >= 1 && h >= 1 && w >= 1, "cube dimensions must be positive, got [" +
                                            std::to_string(t) + "," + std::to_string(h) + "," +
                                            std::to_string(w) + "]");
    require(values.size() == (size_t)count * cube_size(),
            "cube dataset holds " + std::to_string(values.size()) + " values, " +
                std::to_string(count) + " cubes of " + std::to_string(cube_size()) + " need " +
                std::to_string((size_t)count * cube_size()));
    if (normalized)
        require(stats.transform == "log1p_max" && stats.scale > 0.0,
                "normalized dataset needs log1p_max stats with positive scale");
    check_values(values, "cube dataset");
}

void MonsoonGenConfig::validate() const {
    require(days >= 1 && height >= 1 && width >= 1, "generator dimensions must be positive");
    require(start_day_of_year >= 1 && start_day_of_year <= 366,
            "start_day_of_year must be in [1, 366]");
    require(base_wet_prob >= 0.0 && seasonal_wet_prob >= 0.0 &&
                base_wet_prob + seasonal_wet_prob <= 1.0,
            "wet probabilities must be non-negative with base + seasonal <= 1");
    require(gamma_shape > 0.0 && base_scale > 0.0 && seasonal_scale >= 0.0,
            "gamma shape and base scale must be positive, seasonal scale non-negative");
    require(storm_block_days >= 1, "storm_block_days must be >= 1");
    require(storm_sigma >= 0.0 && noise_amplitude >= 0.0,
            "storm_sigma and noise_amplitude must be non-negative");
}

double monsoon_envelope(double day_of_year) {
    if (day_of_year < 150.0 || day_of_year > 300.0) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * (day_of_year - 225.0) / 75.0));
}

namespace {

// Periodic separable box blur; with wrap-around every output is an equal-weight
// average of (2r+1)^2 inputs, so blurring an iid N(0,1) field divides the
// variance by exactly (2r+1)^2.
void box_blur_wrap(std::vector<double>& field, std::vector<double>& tmp, size_t h, size_t w,
                   size_t radius) {
    if (radius == 0) return;
    const long r = (long)radius;
    const double inv = 1.0 / (2.0 * r + 1.0);
    tmp.assign(field.size(), 0.0);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long k = -r; k <= r; ++k)
                acc += field[y * w + (size_t)(((long)x + k + (long)w) % (long)w)];
            tmp[y * w + x] = acc * inv;
        }
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long k = -r; k <= r; ++k)
                acc += tmp[(size_t)(((long)y + k + (long)h) % (long)h) * w + x];
            field[y * w + x] = acc * inv;
        }
}

}  // namespace

GridSeries gen_synthetic_monsoon(const MonsoonGenConfig& cfg) {
    cfg.validate();
    GridSeries out;
    out.days = cfg.days;
    out.height = cfg.height;
    out.width = cfg.width;
    out.start_day_of_year = cfg.start_day_of_year;
    out.values.resize(out.size());

    Rng rng(cfg.seed);
    const size_t pixels = (size_t)cfg.height * cfg.width;

    // Draw order is fixed: block multipliers first, then per day a wet/amount
    // pass (one bernoulli per pixel, one gamma per wet pixel) followed by one
    // normal per pixel for the spatial noise field.
    const size_t n_blocks = (cfg.days + cfg.storm_block_days - 1) / cfg.storm_block_days;
    std::vector<double> storm(n_blocks);
    for (double& m : storm)
        m = std::exp(cfg.storm_sigma * rng.normal() - 0.5 * cfg.storm_sigma * cfg.storm_sigma);

    const double blur_var = 1.0 / ((2.0 * cfg.noise_radius + 1.0) * (2.0 * cfg.noise_radius + 1.0));
    std::vector<double> amount(pixels), gauss(pixels), tmp;
    for (uint32_t d = 0; d < cfg.days; ++d) {
        const double s = monsoon_envelope((double)cfg.start_day_of_year + d);
        const double wet_p = cfg.base_wet_prob + cfg.seasonal_wet_prob * s;
        const double scale = cfg.base_scale + cfg.seasonal_scale * s;
        const double block_mult = storm[d / cfg.storm_block_days];

        for (size_t i = 0; i < pixels; ++i)
            amount[i] = rng.bernoulli(wet_p) ? rng.gamma(cfg.gamma_shape, scale) : 0.0;
        for (size_t i = 0; i < pixels; ++i) gauss[i] = rng.normal();
        box_blur_wrap(gauss, tmp, cfg.height, cfg.width, cfg.noise_radius);

        const double a = cfg.noise_amplitude;
        float* day_values = out.values.data() + (size_t)d * pixels;
        for (size_t i = 0; i < pixels; ++i) {
            // exp(a*G - a^2 var/2) has mean 1, keeping the envelope calibrated
            double noise = std::exp(a * gauss[i] - 0.5 * a * a * blur_var);
            day_values[i] = (float)(amount[i] * noise * block_mult);
        }
    }
    return out;
}

WindowConfig WindowConfig::paper() { return WindowConfig{}; }

WindowConfig WindowConfig::desk() {
    WindowConfig c;
    c.window = 16;
    c.out_h = 16;
    c.out_w = 16;
    c.n_samples = 1875;
    return c;
}

void WindowConfig::validate() const {
    require(window >= 1, "window must be >= 1 day");
    require(day_max >= day_min + window - 1,
            "day range [" + std::to_string(day_min) + ", " + std::to_string(day_max) +
                "] is shorter than the " + std::to_string(window) + "-day window");
    require(n_boxes >= 1, "n_boxes must be >= 1");
    require(box_h >= 1 && box_w >= 1, "box extents must be positive");
    require(out_h >= 1 && out_w >= 1, "output extents must be positive");
    require(n_samples >= 1, "n_samples must be >= 1");
}

std::vector<float> resize_bilinear(std::span<const float> src, size_t h, size_t w, size_t dh,
                                   size_t dw) {
    require(h >= 1 && w >= 1 && dh >= 1 && dw >= 1, "resize extents must be positive");
    require(src.size() == h * w, "resize source holds " + std::to_string(src.size()) +
                                     " values, expected " + std::to_string(h * w));
    std::vector<float> out(dh * dw);
    const double sy = dh == 1 ? 0.0 : (double)(h - 1) / (double)(dh - 1);
    const double sx = dw == 1 ? 0.0 : (double)(w - 1) / (double)(dw - 1);
    for (size_t i = 0; i < dh; ++i) {
        const double y = sy * (double)i;
        const size_t y0 = (size_t)y;
        const size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = y - (double)y0;
        for (size_t j = 0; j < dw; ++j) {
            const double x = sx * (double)j;
            const size_t x0 = (size_t)x;
            const size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = x - (double)x0;
            const double top = (1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
            const double bot = (1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
            out[i * dw + j] = (float)((1.0 - fy) * top + fy * bot);
        }
    }
    return out;
}

CubeDataset window_samples(const GridSeries& series, const WindowConfig& cfg) {
    series.validate();
    cfg.validate();
    require(cfg.box_h <= series.height && cfg.box_w <= series.width,
            "box " + std::to_string(cfg.box_h) + "x" + std::to_string(cfg.box_w) +
                " does not fit the " + std::to_string(series.height) + "x" +
                std::to_string(series.width) + " grid");
    require(cfg.day_min >= series.start_day_of_year,
            "day_min " + std::to_string(cfg.day_min) + " precedes the series start day " +
                std::to_string(series.start_day_of_year));
    const size_t first_index = cfg.day_min - series.start_day_of_year;
    const size_t last_index = cfg.day_max - series.start_day_of_year;  // inclusive
    require(last_index < series.days, "day_max " + std::to_string(cfg.day_max) +
                                          " runs past the series (" +
                                          std::to_string(series.days) + " days from day " +
                                          std::to_string(series.start_day_of_year) + ")");
    const size_t n_starts = last_index - first_index + 2 - cfg.window;

    Rng rng(cfg.seed);
    // The box panel is drawn once; each sample then picks a box, then a start.
    std::vector<std::pair<size_t, size_t>> boxes(cfg.n_boxes);
    for (auto& [y0, x0] : boxes) {
        y0 = (size_t)rng.uniform_int((int64_t)(series.height - cfg.box_h + 1));
        x0 = (size_t)rng.uniform_int((int64_t)(series.width - cfg.box_w + 1));
    }

    CubeDataset ds;
    ds.count = cfg.n_samples;
    ds.t = cfg.window;
    ds.h = cfg.out_h;
    ds.w = cfg.out_w;
    ds.values.reserve((size_t)ds.count * ds.cube_size());

    std::vector<float> crop((size_t)cfg.box_h * cfg.box_w);
    for (uint32_t sample = 0; sample < cfg.n_samples; ++sample) {
        const auto [y0, x0] = boxes[(size_t)rng.uniform_int((int64_t)cfg.n_boxes)];
        const size_t start = first_index + (size_t)rng.uniform_int((int64_t)n_starts);
        for (size_t day = start; day < start + cfg.window; ++day) {
            for (size_t y = 0; y < cfg.box_h; ++y) {
                const float* row = series.values.data() +
                                   (day * series.height + y0 + y) * series.width + x0;
                std::copy(row, row + cfg.box_w, crop.data() + y * cfg.box_w);
            }
            std::vector<float> slice = resize_bilinear(crop, cfg.box_h, cfg.box_w, cfg.out_h,
                                                       cfg.out_w);
            ds.values.insert(ds.values.end(), slice.begin(), slice.end());
        }
    }
    return ds;
}

NormStats normalize(CubeDataset& ds) {
    require(!ds.normalized, "dataset is already normalized");
    double max_log = 0.0;
    for (float v : ds.values) max_log = std::max(max_log, std::log1p((double)v));
    require(max_log > 0.0, "cannot normalize: every value is zero");
    NormStats stats;
    stats.scale = max_log;
    normalize_with(ds, stats);
    return stats;
}

void normalize_with(CubeDataset& ds, const NormStats& stats) {
    require(!ds.normalized, "dataset is already normalized");
    require(stats.transform == "log1p_max", "unknown transform '" + stats.transform + "'");
    require(stats.scale > 0.0 && std::isfinite(stats.scale),
            "normalization scale must be positive and finite");
    for (float& v : ds.values) v = (float)(std::log1p((double)v) / stats.scale);
    ds.normalized = true;
    ds.stats = stats;
}

void denormalize(CubeDataset& ds) {
    require(ds.normalized, "dataset is not normalized");
    for (float& v : ds.values) v = (float)std::expm1((double)v * ds.stats.scale);
    ds.normalized = false;
    ds.stats = NormStats{};
}

std::pair<CubeDataset, CubeDataset> split_train_test(CubeDataset&& all, double test_fraction,
                                                     uint64_t seed) {
    require(test_fraction > 0.0 && test_fraction < 1.0,
            "test fraction must be in (0, 1), got " + std::to_string(test_fraction));
    const size_t n = all.count;
    const size_t n_test = (size_t)std::llround((double)n * test_fraction);
    require(n == 0 || n_test < n, "test fraction " + std::to_string(test_fraction) +
                                      " leaves no training cubes out of " + std::to_string(n));

    Rng rng(seed);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[(size_t)rng.uniform_int((int64_t)i)]);
    std::vector<char> is_test(n, 0);
    for (size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;

    CubeDataset test;
    test.t = all.t;
    test.h = all.h;
    test.w = all.w;
    test.normalized = all.normalized;
    test.stats = all.stats;
    test.count = (uint32_t)n_test;
    const size_t cube = all.cube_size();
    test.values.reserve(n_test * cube);
    for (size_t i = 0; i < n; ++i) {
        if (!is_test[i]) continue;
        auto src = all.cube(i);
        test.values.insert(test.values.end(), src.begin(), src.end());
    }
    // Compact the remaining train cubes in place instead of copying the whole
    // dataset; for the full-size corpus that halves peak memory.
    size_t dst = 0;
    for (size_t i = 0; i < n; ++i) {
        if (is_test[i]) continue;
        if (dst != i)
            std::memmove(all.values.data() + dst * cube, all.values.data() + i * cube,
                         cube * sizeof(float));
        ++dst;
    }
    all.count = (uint32_t)dst;
    all.values.resize(dst * cube);
    all.values.shrink_to_fit();
    return {std::move(all), std::move(test)};
}

double cube_mean(const CubeDataset& ds, size_t i) {
    auto c = ds.cube(i);
    double acc = 0.0;
    for (float v : c) acc += v;
    return acc / (double)c.size();
}

std::vector<double> cube_means(const CubeDataset& ds) {
    std::vector<double> out(ds.count);
    for (size_t i = 0; i < ds.count; ++i) out[i] = cube_mean(ds, i);
    return out;
}

Tensor cubes_to_tensor(const CubeDataset& ds, std::span<const size_t> indices) {
    require(!indices.empty(), "cubes_to_tensor needs at least one cube");
    Tensor x = Tensor::zeros({indices.size(), 1, ds.t, ds.h, ds.w});
    double* dst = x.data().data();
    const size_t cube = ds.cube_size();
    for (size_t b = 0; b < indices.size(); ++b) {
        require(indices[b] < ds.count, "cube index " + std::to_string(indices[b]) +
                                           " out of range (dataset has " +
                                           std::to_string(ds.count) + ")");
        auto src = ds.cube(indices[b]);
        for (size_t i = 0; i < cube; ++i) dst[b * cube + i] = (double)src[i];
    }
    return x;
}

CubeDataset dataset_from_tensor(const Tensor& xhat, bool normalized, const NormStats& stats) {
    const auto& s = xhat.shape();
    require(s.size() == 5 && s[1] == 1,
            "expected a [N,1,T,H,W] tensor, got " + shape_str(s));
    CubeDataset ds;
    ds.count = (uint32_t)s[0];
    ds.t = (uint32_t)s[2];
    ds.h = (uint32_t)s[3];
    ds.w = (uint32_t)s[4];
    ds.normalized = normalized;
    ds.stats = stats;
    ds.values.resize(xhat.size());
    const auto& src = xhat.data();
    for (size_t i = 0; i < src.size(); ++i) ds.values[i] = (float)src[i];
    return ds;
}

namespace {

constexpr char kGridMagic[] = "WXGRID01";
constexpr char kCubeMagic[] = "WXCUBE01";

void put_f32_span(std::vector<std::byte>& out, std::span<const float> values) {
    static_assert(std::endian::native == std::endian::little);
    put_bytes(out, values.data(), values.size() * sizeof(float));
}

void read_f32_span(ByteReader& in, std::span<float> values) {
    in.raw(values.data(), values.size() * sizeof(float));
}

}  // namespace

void save_grid(const std::string& path, const GridSeries& series) {
    series.validate();
    std::vector<std::byte> out;
    out.reserve(24 + series.size() * sizeof(float));
    put_bytes(out, kGridMagic, 8);
    put_u32(out, series.days);
    put_u32(out, series.height);
    put_u32(out, series.width);
    put_u32(out, series.start_day_of_year);
    put_f32_span(out, series.values);
    write_file_atomic(path, out);
}

GridSeries load_grid(const std::string& path) {
    auto bytes = read_file_bytes(path);
    ByteReader in(bytes, path);
    if (in.str(8) != kGridMagic)
        throw IoError(path + ": not a daily grid file (bad magic)");
    GridSeries series;
    series.days = in.u32();
    series.height = in.u32();
    series.width = in.u32();
    series.start_day_of_year = in.u32();
    if (series.days == 0 || series.height == 0 || series.width == 0)
        throw IoError(path + ": zero dimension in header");
    series.values.resize(series.size());
    read_f32_span(in, series.values);
    if (in.remaining() != 0)
        throw IoError(path + ": " + std::to_string(in.remaining()) +
                      " trailing bytes after payload");
    series.validate();
    return series;
}

void save_cubes(const std::string& path, const CubeDataset& ds) {
    ds.validate();
    std::vector<std::byte> out;
    out.reserve(29 + ds.values.size() * sizeof(float));
    put_bytes(out, kCubeMagic, 8);
    put_u32(out, ds.count);
    put_u32(out, ds.t);
    put_u32(out, ds.h);
    put_u32(out, ds.w);
    put_u8(out, ds.normalized ? 1 : 0);
    put_f32(out, ds.normalized ? (float)ds.stats.scale : 0.0f);
    put_f32_span(out, ds.values);
    write_file_atomic(path, out);
}

CubeDataset load_cubes(const std::string& path) {
    auto bytes = read_file_bytes(path);
    ByteReader in(bytes, path);
    if (in.str(8) != kCubeMagic)
        throw IoError(path + ": not a cube dataset file (bad magic)");
    CubeDataset ds;
    ds.count = in.u32();
    ds.t = in.u32();
    ds.h = in.u32();
    ds.w = in.u32();
    uint8_t units = in.u8();
    if (units > 1) throw IoError(path + ": unknown units flag " + std::to_string(units));
    float scale = in.f32();
    if (units == 1) {
        ds.normalized = true;
        ds.stats.scale = (double)scale;
    }
    if (ds.t == 0 || ds.h == 0 || ds.w == 0) throw IoError(path + ": zero dimension in header");
    ds.values.resize((size_t)ds.count * ds.cube_size());
    read_f32_span(in, ds.values);
    if (in.remaining() != 0)
        throw IoError(path + ": " + std::to_string(in.remaining()) +
                      " trailing bytes after payload");
    ds.validate();
    return ds;
}

}  // namespace wxgen
