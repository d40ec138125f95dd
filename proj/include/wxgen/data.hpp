#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wxgen/rng.hpp"
#include "wxgen/tensor.hpp"

namespace wxgen {

// Daily gridded precipitation in mm/day, day-major layout [day][y][x].
struct GridSeries {
    uint32_t days = 0;
    uint32_t height = 0;
    uint32_t width = 0;
    uint32_t start_day_of_year = 1;
    std::vector<float> values;

    float at(size_t d, size_t y, size_t x) const {
        return values[(d * height + y) * width + x];
    }
    size_t size() const { return (size_t)days * height * width; }
    void validate() const;
};

struct NormStats {
    std::string transform = "log1p_max";
    double scale = 0.0;  // C in v' = log1p(v) / C
};

// A stack of space-time cubes, cube-major. Either physical mm/day or
// normalized values together with the stats that produced them.
struct CubeDataset {
    uint32_t count = 0;
    uint32_t t = 0;
    uint32_t h = 0;
    uint32_t w = 0;
    bool normalized = false;
    NormStats stats;
    std::vector<float> values;

    size_t cube_size() const { return (size_t)t * h * w; }
    std::span<const float> cube(size_t i) const {
        return {values.data() + i * cube_size(), cube_size()};
    }
    std::span<float> cube(size_t i) {
        return {values.data() + i * cube_size(), cube_size()};
    }
    void validate() const;
};

// Synthetic monsoon rainfall: a smooth seasonal envelope drives both wet-pixel
// probability and gamma rain amounts; multi-day storm blocks and smoothed
// spatial noise add realistic clustering. All factors are non-negative.
struct MonsoonGenConfig {
    uint32_t days = 365;
    uint32_t height = 24;
    uint32_t width = 24;
    uint32_t start_day_of_year = 1;
    double base_wet_prob = 0.12;      // dry-season wet probability
    double seasonal_wet_prob = 0.60;  // added at envelope peak
    double gamma_shape = 1.5;
    double base_scale = 2.0;          // gamma scale, dry season (mm/day)
    double seasonal_scale = 10.0;     // added at envelope peak
    uint32_t storm_block_days = 8;    // consecutive days sharing one multiplier
    double storm_sigma = 0.6;         // lognormal sigma of block multipliers
    double noise_amplitude = 0.8;     // lognormal spatial noise strength
    uint32_t noise_radius = 2;        // box-blur radius of the noise field
    uint64_t seed = 2024;

    void validate() const;
};

// 0.5 * (1 + cos(pi * (d - 225) / 75)) on [150, 300], zero elsewhere:
// rises from day 150, peaks at 225, falls back to zero at 300.
double monsoon_envelope(double day_of_year);

GridSeries gen_synthetic_monsoon(const MonsoonGenConfig& config);

// Training windows: fixed-length day ranges starting anywhere in
// [day_min, day_max - window + 1] (whole window inside [day_min, day_max]),
// cropped to one of n_boxes jittered spatial boxes, then resized.
struct WindowConfig {
    uint32_t window = 32;
    uint32_t day_min = 150;
    uint32_t day_max = 300;  // inclusive
    uint32_t n_boxes = 16;
    uint32_t box_h = 20;
    uint32_t box_w = 20;
    uint32_t out_h = 32;
    uint32_t out_w = 32;
    uint32_t n_samples = 18000;
    uint64_t seed = 7;

    static WindowConfig paper();
    static WindowConfig desk();  // 16-day windows resized to 16x16
    void validate() const;
};

CubeDataset window_samples(const GridSeries& series, const WindowConfig& config);

// Corner-aligned bilinear resample of an h x w slice to dh x dw.
std::vector<float> resize_bilinear(std::span<const float> src, size_t h, size_t w, size_t dh,
                                   size_t dw);

// v' = log1p(v) / C with C the maximum of log1p(v) over this dataset, so the
// result lies in [0, 1]. Returns the stats for reuse on other datasets.
NormStats normalize(CubeDataset& ds);
void normalize_with(CubeDataset& ds, const NormStats& stats);
void denormalize(CubeDataset& ds);  // v = expm1(v' * C)

// Seeded shuffle; round(count * test_fraction) cubes become the test set,
// fraction in (0, 1). Cube order within each side follows the original
// dataset order.
std::pair<CubeDataset, CubeDataset> split_train_test(CubeDataset&& all, double test_fraction,
                                                     uint64_t seed);

double cube_mean(const CubeDataset& ds, size_t i);
std::vector<double> cube_means(const CubeDataset& ds);

// [B,1,T,H,W] tensor from selected cubes (f64 copies of the f32 data).
Tensor cubes_to_tensor(const CubeDataset& ds, std::span<const size_t> indices);
// Inverse direction for generated batches; xhat must be [N,1,T,H,W].
CubeDataset dataset_from_tensor(const Tensor& xhat, bool normalized, const NormStats& stats);

void save_grid(const std::string& path, const GridSeries& series);
GridSeries load_grid(const std::string& path);
void save_cubes(const std::string& path, const CubeDataset& ds);
CubeDataset load_cubes(const std::string& path);

}  // namespace wxgen
