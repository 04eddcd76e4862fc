#pragma once

#include <cstdint>

#include "amrec/geometry.hpp"
#include "amrec/regularizer.hpp"
#include "amrec/tensor.hpp"

namespace amrec {

/**
 * Data-fit part of the reconstruction objective over the joint variable
 * (x, z): x is the image, z the full-view sinogram iterate, s0 the measured
 * sparse-view rows.
 *
 *   f(x, z) = 1/2 ||A x - z||^2 + lambda/2 ||P0 z - s0||^2
 *
 * where A is the projector for `geom` and P0 the row selector for `sel`.
 */
struct FidelityModel {
  Geometry geom;
  ViewSelector sel;
  Tensor s0;            // (selected views, detectors)
  double lambda = 1.0;
};

void validate_model(const FidelityModel& model);

double fidelity(const FidelityModel& model, const Tensor& x, const Tensor& z);
Tensor grad_x_f(const FidelityModel& model, const Tensor& x, const Tensor& z);
Tensor grad_z_f(const FidelityModel& model, const Tensor& x, const Tensor& z);

// Variants reusing a precomputed projection Ax; the solver keeps Ax cached
// across substeps, so these avoid repeated projector applications.
double fidelity_from_proj(const FidelityModel& model, const Tensor& Ax,
                          const Tensor& z);
Tensor grad_x_f_from_proj(const FidelityModel& model, const Tensor& Ax,
                          const Tensor& z);
Tensor grad_z_f_from_proj(const FidelityModel& model, const Tensor& Ax,
                          const Tensor& z);

// Full objective: fidelity plus image regularizer R(x) plus sinogram
// regularizer Q(z), in the plain and smoothed forms.
double phi(const FidelityModel& model, const Regularizer& R,
           const Regularizer& Q, const Tensor& x, const Tensor& z);
double phi_eps(const FidelityModel& model, const Regularizer& R,
               const Regularizer& Q, const Tensor& x, const Tensor& z,
               double eps);

struct JointGrad {
  Tensor x;
  Tensor z;
  double norm() const;
};
JointGrad grad_phi_eps(const FidelityModel& model, const Regularizer& R,
                       const Regularizer& Q, const Tensor& x, const Tensor& z,
                       double eps);

// ||grad phi_eps(x, z)||: the quantity driving the smoothing schedule and
// the convergence certificate.
double stationarity_residual(const FidelityModel& model, const Regularizer& R,
                             const Regularizer& Q, const Tensor& x,
                             const Tensor& z, double eps);

/**
 * Sampled smoothness summary for an extractor: m_hat bounds the Jacobian
 * operator norm, lg_hat the Lipschitz modulus of the Jacobian itself, both
 * maximized over random inputs with a short power iteration. For a linear
 * stack lg_hat is exactly zero.
 */
struct ExtractorSmoothness {
  std::size_t positions = 0; // feature positions m_r at the sampled extent
  double m_hat = 0.0;
  double lg_hat = 0.0;
};
ExtractorSmoothness estimate_smoothness(const Regularizer& reg,
                                        std::size_t samples,
                                        std::size_t rows, std::size_t cols,
                                        std::uint64_t seed);

// Curvature bound for grad of the smoothed regularizer value:
// sqrt(m) * lg_hat + m_hat^2 / eps.
double lipschitz_from_smoothness(const ExtractorSmoothness& s, double eps);

// Convenience wrapper combining the two calls above.
double lipschitz_estimate(const Regularizer& reg, double eps,
                          std::size_t samples, std::size_t rows,
                          std::size_t cols, std::uint64_t seed);

// Largest eigenvalue of the (constant) fidelity Hessian over (x, z),
// via power iteration from a deterministic start.
double fidelity_lipschitz(const FidelityModel& model, std::size_t iters = 40);

} // namespace amrec
