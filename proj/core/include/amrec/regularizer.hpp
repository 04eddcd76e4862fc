#pragma once

#include <cstdint>
#include <vector>

#include "amrec/conv.hpp"
#include "amrec/rng.hpp"
#include "amrec/tensor.hpp"

namespace amrec {

/**
 * Feature-map regularizer: r(y) = sum_i ||g_i(y)||_2 where g is the
 * extractor stack and g_i collects the output channels at spatial
 * position i. Nonsmooth wherever some g_i vanishes, hence the smoothed
 * companion below.
 *
 * Inputs are plain rank-2 images or sinograms; they are fed to the stack
 * as a single-channel map (or rank-3 directly for multi-channel inputs).
 */
struct Regularizer {
  LayerStack stack;
  std::size_t in_channels = 1;
};

void validate_regularizer(const Regularizer& reg);

// Number of spatial positions m_r for a given input extent (stride-1
// same-padding keeps it equal to rows*cols).
std::size_t feature_positions(std::size_t rows, std::size_t cols);
std::size_t feature_channels(const Regularizer& reg);

// Extractor output together with the per-position channel norms, so value,
// smoothed value, and the gradient cotangent can share one forward pass.
struct FeatureNorms {
  Tensor features;            // (channels, rows, cols)
  std::vector<double> norms;  // rows*cols entries
};
FeatureNorms extract_features(const Regularizer& reg, const Tensor& y);

// Which positions fell in the quadratic (small-norm) branch at this eps.
struct SmoothingPartition {
  double epsilon = 0.0;
  std::vector<std::uint8_t> small_ball; // 1 where ||g_i|| <= eps
  std::size_t small_count = 0;
};

// Values derived from an extraction, so callers needing several of them
// pay for the stack only once.
double norm21_from(const FeatureNorms& fn);
double smoothed_from(const FeatureNorms& fn, double eps,
                     SmoothingPartition* partition);

double norm21(const Regularizer& reg, const Tensor& y);

/**
 * The C1 surrogate: positions with ||g_i|| <= eps contribute
 * ||g_i||^2/(2 eps), the rest contribute ||g_i|| - eps/2. Satisfies
 * 0 <= norm21 - smoothed_value <= m_r*eps/2, and value + m_r*eps/2 is
 * non-decreasing in eps. Ties sit in the quadratic branch; both branches
 * agree there in value and derivative.
 */
double smoothed_value(const Regularizer& reg, const Tensor& y, double eps,
                      SmoothingPartition* partition = nullptr);

// Gradient of smoothed_value at y: one input-vjp with the per-position
// cotangent g_i/eps (small branch) or g_i/||g_i|| (large branch).
Tensor smoothed_grad(const Regularizer& reg, const Tensor& y, double eps);

// Fixed finite-difference extractors. `weight` scales the stencils and
// acts as the regularization strength: with the 3x3 pair below the
// smoothed value is weight * (smoothed isotropic TV).
Regularizer make_tv_regularizer(double weight);           // image, 3x3
Regularizer make_sinogram_tv_regularizer(double weight);  // sinogram, 3x7

// g(y) = y; turns norm21 into the plain l1 norm. Used by oracle tests.
Regularizer make_identity_regularizer();

// Random extractor for property tests.
Regularizer make_random_regularizer(std::size_t n_layers,
                                    std::size_t hidden_channels,
                                    std::size_t kh, std::size_t kw,
                                    double weight_scale, Rng& rng,
                                    bool final_linear = true,
                                    std::size_t in_channels = 1);

} // namespace amrec
