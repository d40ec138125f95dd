#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "wxgen/data.hpp"

namespace wxgen {

// Paired quantiles of two pixel-value distributions on a shared prob grid.
struct QQCurve {
    std::vector<double> probs;  // strictly increasing, inside (0,1)
    std::vector<double> q_a;
    std::vector<double> q_b;

    void validate() const;
};

// n equally spaced interior probabilities i/(n+1), i = 1..n.
std::vector<double> default_probs(size_t n_probs = 199);

// Order statistics with linear interpolation at rank h = (n-1)p. probs must
// lie in [0,1]; the result is non-decreasing for ascending probs.
std::vector<double> quantiles(std::span<const float> values, std::span<const double> probs);

// Pools every pixel of each dataset and evaluates both quantile functions on
// the default grid of n_probs interior probabilities.
QQCurve qq_curve(const CubeDataset& a, const CubeDataset& b, size_t n_probs = 199);

enum class ExtremeDirection { top, bottom };

// Reference-set selector: the fraction of cubes with the greatest (top) or
// lowest (bottom) mean precipitation.
struct ExtremeRefSpec {
    double fraction = 0.10;
    ExtremeDirection direction = ExtremeDirection::top;

    void validate() const;
};

// The ceil(fraction*n) cubes ranked by per-cube mean; ties and output order
// keep the dataset's original cube order.
CubeDataset reference_extremes(const CubeDataset& ds, const ExtremeRefSpec& spec);

// max |q_a - q_b| over the curve's probs <= upto_prob (0 if none).
double qq_divergence(const QQCurve& curve, double upto_prob = 1.0);

// Fraction of pooled pixel values <= value: maps a physical threshold (e.g.
// a mm/day fidelity bound) to the prob below which qq_divergence applies.
double prob_reaching(const CubeDataset& ds, double value);

// CSV "prob,quantile_a,quantile_b" at full precision, plus an optional
// self-contained SVG scatter with the identity reference line.
void emit_qq(const QQCurve& curve, const std::filesystem::path& csv_path,
             const std::optional<std::filesystem::path>& svg_path = std::nullopt);

QQCurve load_qq_csv(const std::filesystem::path& csv_path);

}  // namespace wxgen
