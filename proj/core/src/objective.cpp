#include "amrec/objective.hpp"

#include <cmath>

#include "amrec/errors.hpp"
#include "amrec/radon.hpp"
#include "amrec/rng.hpp"

namespace amrec {

void validate_model(const FidelityModel& model) {
  validate_geometry(model.geom);
  validate_selector(model.geom, model.sel);
  if (model.s0.rank() != 2 ||
      model.s0.extent(0) != model.sel.selected_count(model.geom) ||
      model.s0.extent(1) != model.geom.n_detectors) {
    throw ValidationError("FidelityModel: s0 must be (selected views, detectors)");
  }
  if (!(model.lambda >= 0.0)) {
    throw ValidationError("FidelityModel: lambda must be >= 0");
  }
  ensure_finite(model.s0, "FidelityModel s0");
}

namespace {

void require_pair(const FidelityModel& model, const Tensor& x, const Tensor& z) {
  const std::size_t n = model.geom.image_size;
  if (x.rank() != 2 || x.extent(0) != n || x.extent(1) != n) {
    throw ValidationError("objective: image has wrong shape");
  }
  if (z.rank() != 2 || z.extent(0) != model.geom.n_views ||
      z.extent(1) != model.geom.n_detectors) {
    throw ValidationError("objective: sinogram iterate has wrong shape");
  }
}

// lambda * P0^T (P0 z - s0), shaped like z.
Tensor consistency_grad(const FidelityModel& model, const Tensor& z) {
  Tensor picked = select_views(model.geom, model.sel, z);
  axpy(-1.0, model.s0, picked);
  scale(model.lambda, picked);
  return embed_views(model.geom, model.sel, picked);
}

} // namespace

double fidelity_from_proj(const FidelityModel& model, const Tensor& Ax,
                          const Tensor& z) {
  Tensor resid = sub(Ax, z);
  Tensor picked = select_views(model.geom, model.sel, z);
  axpy(-1.0, model.s0, picked);
  return 0.5 * norm2sq(resid) + 0.5 * model.lambda * norm2sq(picked);
}

Tensor grad_x_f_from_proj(const FidelityModel& model, const Tensor& Ax,
                          const Tensor& z) {
  return backproject(model.geom, sub(Ax, z));
}

Tensor grad_z_f_from_proj(const FidelityModel& model, const Tensor& Ax,
                          const Tensor& z) {
  Tensor g = sub(z, Ax);
  Tensor cons = consistency_grad(model, z);
  axpy(1.0, cons, g);
  return g;
}

double fidelity(const FidelityModel& model, const Tensor& x, const Tensor& z) {
  require_pair(model, x, z);
  return fidelity_from_proj(model, project(model.geom, x), z);
}

Tensor grad_x_f(const FidelityModel& model, const Tensor& x, const Tensor& z) {
  require_pair(model, x, z);
  return grad_x_f_from_proj(model, project(model.geom, x), z);
}

Tensor grad_z_f(const FidelityModel& model, const Tensor& x, const Tensor& z) {
  require_pair(model, x, z);
  return grad_z_f_from_proj(model, project(model.geom, x), z);
}

double phi(const FidelityModel& model, const Regularizer& R,
           const Regularizer& Q, const Tensor& x, const Tensor& z) {
  return fidelity(model, x, z) + norm21(R, x) + norm21(Q, z);
}

double phi_eps(const FidelityModel& model, const Regularizer& R,
               const Regularizer& Q, const Tensor& x, const Tensor& z,
               double eps) {
  return fidelity(model, x, z) + smoothed_value(R, x, eps) +
         smoothed_value(Q, z, eps);
}

double JointGrad::norm() const {
  return std::sqrt(norm2sq(x) + norm2sq(z));
}

JointGrad grad_phi_eps(const FidelityModel& model, const Regularizer& R,
                       const Regularizer& Q, const Tensor& x, const Tensor& z,
                       double eps) {
  require_pair(model, x, z);
  const Tensor Ax = project(model.geom, x);
  JointGrad g;
  g.x = grad_x_f_from_proj(model, Ax, z);
  Tensor rx = smoothed_grad(R, x, eps);
  axpy(1.0, rx, g.x);
  g.z = grad_z_f_from_proj(model, Ax, z);
  Tensor qz = smoothed_grad(Q, z, eps);
  axpy(1.0, qz, g.z);
  return g;
}

double stationarity_residual(const FidelityModel& model, const Regularizer& R,
                             const Regularizer& Q, const Tensor& x,
                             const Tensor& z, double eps) {
  return grad_phi_eps(model, R, Q, x, z, eps).norm();
}

namespace {

// sigma_max of the extractor Jacobian at `input`, power iteration on J^T J.
double jacobian_sigma(const LayerStack& stack, const Tensor& input, Rng& rng,
                      std::size_t iters) {
  Tensor u = gaussian_tensor(input.shape(), rng);
  double un = norm2(u);
  if (un == 0.0) return 0.0;
  scale(1.0 / un, u);
  double sigma = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    Tensor w = conv_jvp(stack, input, u);
    sigma = norm2(w);
    if (sigma == 0.0) return 0.0;
    Tensor back = conv_input_vjp(stack, input, w);
    const double bn = norm2(back);
    if (bn == 0.0) break;
    scale(1.0 / bn, back);
    u = std::move(back);
  }
  return sigma;
}

// sigma_max of J(y1) - J(y2), same scheme with differenced actions.
double jacobian_diff_sigma(const LayerStack& stack, const Tensor& y1,
                           const Tensor& y2, Rng& rng, std::size_t iters) {
  Tensor u = gaussian_tensor(y1.shape(), rng);
  double un = norm2(u);
  if (un == 0.0) return 0.0;
  scale(1.0 / un, u);
  double sigma = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    Tensor w = conv_jvp(stack, y1, u);
    Tensor w2 = conv_jvp(stack, y2, u);
    axpy(-1.0, w2, w);
    sigma = norm2(w);
    if (sigma == 0.0) return 0.0;
    Tensor back = conv_input_vjp(stack, y1, w);
    Tensor back2 = conv_input_vjp(stack, y2, w);
    axpy(-1.0, back2, back);
    const double bn = norm2(back);
    if (bn == 0.0) break;
    scale(1.0 / bn, back);
    u = std::move(back);
  }
  return sigma;
}

} // namespace

ExtractorSmoothness estimate_smoothness(const Regularizer& reg,
                                        std::size_t samples,
                                        std::size_t rows, std::size_t cols,
                                        std::uint64_t seed) {
  validate_regularizer(reg);
  if (samples == 0) {
    throw ValidationError("estimate_smoothness: need at least one sample");
  }
  Rng rng(seed);
  ExtractorSmoothness out;
  out.positions = feature_positions(rows, cols);
  for (std::size_t s = 0; s < samples; ++s) {
    Tensor y1 = gaussian_tensor({reg.in_channels, rows, cols}, rng);
    out.m_hat = std::max(out.m_hat, jacobian_sigma(reg.stack, y1, rng, 6));
    Tensor step = gaussian_tensor(y1.shape(), rng, 0.5);
    Tensor y2 = y1;
    axpy(1.0, step, y2);
    const double dist = norm2(step);
    if (dist > 0.0) {
      const double ds = jacobian_diff_sigma(reg.stack, y1, y2, rng, 8);
      out.lg_hat = std::max(out.lg_hat, ds / dist);
    }
  }
  return out;
}

double lipschitz_from_smoothness(const ExtractorSmoothness& s, double eps) {
  if (!(eps > 0.0)) {
    throw ValidationError("lipschitz_from_smoothness: eps must be > 0");
  }
  return std::sqrt(static_cast<double>(s.positions)) * s.lg_hat +
         s.m_hat * s.m_hat / eps;
}

double lipschitz_estimate(const Regularizer& reg, double eps,
                          std::size_t samples, std::size_t rows,
                          std::size_t cols, std::uint64_t seed) {
  return lipschitz_from_smoothness(
      estimate_smoothness(reg, samples, rows, cols, seed), eps);
}

double fidelity_lipschitz(const FidelityModel& model, std::size_t iters) {
  validate_model(model);
  const std::size_t n = model.geom.image_size;
  Tensor wx = Tensor::full({n, n}, 1.0);
  Tensor wz = Tensor::full({model.geom.n_views, model.geom.n_detectors}, 1.0);
  double nrm = std::sqrt(norm2sq(wx) + norm2sq(wz));
  scale(1.0 / nrm, wx);
  scale(1.0 / nrm, wz);

  double lam = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    const Tensor Awx = project(model.geom, wx);
    Tensor hx = backproject(model.geom, sub(Awx, wz));
    Tensor hz = sub(wz, Awx);
    Tensor cons = embed_views(model.geom, model.sel,
                              select_views(model.geom, model.sel, wz));
    axpy(model.lambda, cons, hz);
    lam = dot(wx, hx) + dot(wz, hz);
    nrm = std::sqrt(norm2sq(hx) + norm2sq(hz));
    if (nrm == 0.0) break;
    scale(1.0 / nrm, hx);
    scale(1.0 / nrm, hz);
    wx = std::move(hx);
    wz = std::move(hz);
  }
  return lam;
}

} // namespace amrec
