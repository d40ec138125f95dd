#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wxgen/vae.hpp"

namespace wxgen {

struct GradCheckProbe {
    std::string param;
    size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    size_t checked = 0;
    size_t failed = 0;
    double max_rel_err = 0.0;
    double step = 0.0;
    double tol = 0.0;
    GradCheckProbe worst;
    std::vector<GradCheckProbe> failures;  // capped at 32 entries
    bool ok() const { return failed == 0 && checked > 0; }
};

// Where to place the evaluation point. A symmetric difference quotient only
// equals the derivative when the bracket [theta-step, theta+step] crosses no
// relu kink; smooth_region constructs positive weights, biases, data, and
// noise so every relu input stays strictly positive under any probe, making
// step-1e-4 comparisons exact. natural_init uses the ordinary signed init
// (biases nudged off zero so no kink sits exactly at the point); pair it with
// a much smaller step so kink crossings become negligible.
enum class GradCheckPoint { smooth_region, natural_init };

// 8^3 input, latent 4, 8 channels: small enough to finite-difference every
// parameter in well under two minutes.
ModelConfig toy_model_config();

// Compares analytic gradients of the full loss (rec + beta * KL) against
// central finite differences, parameter by parameter. probes_per_tensor = 0
// checks every element; otherwise a deterministic subsample per tensor.
GradCheckReport gradcheck_vae(const ModelConfig& config, uint64_t seed, double step, double tol,
                              size_t probes_per_tensor = 0, size_t batch = 2, double beta = 0.5,
                              GradCheckPoint point = GradCheckPoint::smooth_region);

std::string format_report(const GradCheckReport& report);

}  // namespace wxgen
