#ifndef LWAT_ANALYSIS_HPP
#define LWAT_ANALYSIS_HPP

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lwat/data.hpp"
#include "lwat/nn.hpp"

namespace lwat {

enum class AttackKind { FgsInput, CachedLayerwise, CachedInputOnly };

std::string to_string(AttackKind kind);
AttackKind attack_from_string(const std::string& name);

// x + eps*sign(grad_x J), clamped to the data's valid range. eps is in pixel
// units; for a normalized dataset the per-channel std rescales the step and
// the clamp bounds map the [0,1] pixel box into normalized coordinates.
Tensor fgs_attack(Model& model, const Tensor& x, const std::vector<int>& y, double eps,
                  const std::optional<DataStats>& stats = std::nullopt);

// Test-set accuracy (fraction) under Algorithm-1-style cached perturbations:
// each batch is perturbed by sign gradients accumulated from the previous
// batch; the first batch runs clean. inputOnly restricts injection to the
// input layer. k=1 is the fidelity mode; larger batches trade fidelity for
// speed. No parameters or persistent caches are modified.
double cached_layerwise_attack(Model& model, const Dataset& data, double eps, bool inputOnly,
                               int64_t batchSize = 1);

struct EpsSweepRow {
    double eps = 0;
    double accuracy = 0; // percent
};

struct EpsSweepReport {
    std::string attack;
    std::string model;
    std::string split = "test";
    std::vector<EpsSweepRow> rows;
};

// One accuracy per epsilon; a 0-entry leads the list (clean accuracy) and is
// prepended when missing. epsList must be strictly increasing.
EpsSweepReport eps_sweep(Model& model, const Dataset& data, AttackKind attack,
                         std::vector<double> epsList, int64_t batchSize = 250);

struct SpectrumReport {
    std::vector<double> sigma; // non-negative, non-increasing
    int samples = 0;
    std::string model;
};

// Jacobian of the encoder (network through the last hidden activation) per
// sample, singular values by one-sided Jacobi, averaged elementwise and
// truncated to topK.
SpectrumReport singular_spectrum(Model& model, const Dataset& data, int nSamples, int topK = 50);

// Encoder Jacobian at one sample, rows = d(feature_i)/d(input).
Tensor encoder_jacobian(Model& model, const Tensor& x);

struct BoundCheck {
    double lhs = 0; // ||J * delta||_2
    double rhs = 0; // sqrt(sum sigma_i^2) * ||delta||_2
    bool ok = false;
};

// First-order response bound at x along delta.
BoundCheck perturbation_bound_check(Model& model, const Tensor& x, const Tensor& delta);

// Same check against a precomputed Jacobian and spectrum (callers probing
// many directions at one sample).
BoundCheck bound_check_with(const Tensor& jacobian, const std::vector<double>& sigma,
                            const Tensor& delta);

// PCA onto the top-2 principal components; the largest-magnitude loading of
// each component is made positive so the projection is deterministic.
Tensor project2d(const Tensor& features);

// ---------------------------------------------------------------------------
// report serialization: JSON {kind, model, params, rows[]} plus CSV
// ---------------------------------------------------------------------------

void write_sweep_csv(std::ostream& os, const EpsSweepReport& report);
std::string sweep_to_json(const EpsSweepReport& report);
EpsSweepReport sweep_from_json(const std::string& text);

void write_spectrum_csv(std::ostream& os, const SpectrumReport& report); // index, sigma
std::string spectrum_to_json(const SpectrumReport& report);
SpectrumReport spectrum_from_json(const std::string& text);

} // namespace lwat

#endif // LWAT_ANALYSIS_HPP
