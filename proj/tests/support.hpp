#pragma once

// Shared helpers for the test binaries. The reference implementations here
// are deliberately written from the definitions, independent of the library
// code they check: direct-summation convolution, windowed structural
// similarity from its formula, dense and conjugate-gradient linear solvers.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include "amrec/conv.hpp"
#include "amrec/objective.hpp"
#include "amrec/radon.hpp"
#include "amrec/tensor.hpp"

namespace testsupport {

inline double rel_err(double got, double want) {
  const double scale = std::max({std::abs(got), std::abs(want), 1e-300});
  return std::abs(got - want) / scale;
}

// Relative error with an absolute floor, for quantities that are legitimately
// near zero.
inline double rel_err_floored(double got, double want, double floor_) {
  return std::abs(got - want) / std::max(std::abs(want), floor_);
}

// ---------------------------------------------------------------------------
// Direct-summation convolution reference.
//
// Zero same-padding, stride 1, no bias; the smoothed ramp activation after
// every layer except (optionally) the last. Quadruple loop per layer, written
// straight from the definition.
// ---------------------------------------------------------------------------

inline double ramp_ref(double x, double delta) {
  if (x <= -delta) return 0.0;
  if (x >= delta) return x;
  const double t = x + delta;
  return t * t / (4.0 * delta);
}

inline amrec::Tensor conv_layer_ref(const amrec::Tensor& kernel,
                                    const amrec::Tensor& input) {
  const std::size_t co = kernel.extent(0), ci = kernel.extent(1);
  const std::size_t kh = kernel.extent(2), kw = kernel.extent(3);
  const std::size_t rows = input.extent(1), cols = input.extent(2);
  const std::ptrdiff_t ph = (static_cast<std::ptrdiff_t>(kh) - 1) / 2;
  const std::ptrdiff_t pw = (static_cast<std::ptrdiff_t>(kw) - 1) / 2;
  amrec::Tensor out({co, rows, cols});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v) {
              const std::ptrdiff_t rr =
                  static_cast<std::ptrdiff_t>(r) + static_cast<std::ptrdiff_t>(u) - ph;
              const std::ptrdiff_t cc =
                  static_cast<std::ptrdiff_t>(c) + static_cast<std::ptrdiff_t>(v) - pw;
              if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(rows) ||
                  cc >= static_cast<std::ptrdiff_t>(cols))
                continue;
              acc += kernel(o, i, u, v) *
                     input(i, static_cast<std::size_t>(rr),
                           static_cast<std::size_t>(cc));
            }
        out(o, r, c) = acc;
      }
  return out;
}

inline amrec::Tensor conv_stack_ref(const amrec::LayerStack& stack,
                                    const amrec::Tensor& input) {
  amrec::Tensor cur = input;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    cur = conv_layer_ref(stack.layers[l].kernel, cur);
    const bool activate = l + 1 < stack.layers.size() || !stack.final_linear;
    if (activate) {
      for (double& v : cur.values()) v = ramp_ref(v, stack.layers[l].delta);
    }
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Finite differences.
// ---------------------------------------------------------------------------

// Central difference of a scalar functional along a direction.
inline double directional_fd(const std::function<double(const amrec::Tensor&)>& f,
                             const amrec::Tensor& y, const amrec::Tensor& dir,
                             double h) {
  amrec::Tensor plus = y, minus = y;
  amrec::axpy(h, dir, plus);
  amrec::axpy(-h, dir, minus);
  return (f(plus) - f(minus)) / (2.0 * h);
}

// ---------------------------------------------------------------------------
// Dense linear solve (Gaussian elimination, partial pivoting). Used by the
// small least-squares oracles; n stays tiny.
// ---------------------------------------------------------------------------

inline std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-14)
      throw std::runtime_error("solve_dense: singular system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double m = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= m * a[col][c];
      b[r] -= m * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (std::size_t c = ri + 1; c < n; ++c) acc -= a[ri][c] * x[c];
    x[ri] = acc / a[ri][ri];
  }
  return x;
}

// ---------------------------------------------------------------------------
// Conjugate gradient on the joint data-fit normal system.
//
// The quadratic 1/2||Ax - z||^2 + lambda/2||P0 z - s0||^2 has gradient
//   Hx = A^T(Ax - z)
//   Hz = (z - Ax) + lambda P0^T(P0 z - s0)
// so its minimizers solve H w = rhs with rhs = (0, lambda P0^T s0) and H the
// positive semidefinite block operator applied below. CG in the joint space
// gives an independent minimizer to compare the solver against.
// ---------------------------------------------------------------------------

struct JointVec {
  amrec::Tensor x;
  amrec::Tensor z;
};

inline double joint_dot(const JointVec& a, const JointVec& b) {
  return amrec::dot(a.x, b.x) + amrec::dot(a.z, b.z);
}

inline JointVec fidelity_hessian_apply(const amrec::FidelityModel& m,
                                       const JointVec& w) {
  amrec::Tensor aw = amrec::project(m.geom, w.x);
  amrec::Tensor hx = amrec::backproject(m.geom, amrec::sub(aw, w.z));
  amrec::Tensor hz = amrec::sub(w.z, aw);
  amrec::Tensor sel = amrec::select_views(m.geom, m.sel, w.z);
  amrec::Tensor emb = amrec::embed_views(m.geom, m.sel, sel);
  amrec::axpy(m.lambda, emb, hz);
  return {std::move(hx), std::move(hz)};
}

inline JointVec cg_fidelity_minimizer(const amrec::FidelityModel& m,
                                      std::size_t iters) {
  const std::size_t n = m.geom.image_size;
  JointVec w{amrec::Tensor({n, n}),
             amrec::Tensor({m.geom.n_views, m.geom.n_detectors})};
  JointVec r{amrec::Tensor({n, n}),
             amrec::Tensor({m.geom.n_views, m.geom.n_detectors})};
  // rhs = (0, lambda P0^T s0); initial residual = rhs - H*0 = rhs.
  r.z = amrec::embed_views(m.geom, m.sel, m.s0);
  amrec::scale(m.lambda, r.z);
  JointVec p = r;
  double rs = joint_dot(r, r);
  for (std::size_t it = 0; it < iters && rs > 1e-26; ++it) {
    JointVec hp = fidelity_hessian_apply(m, p);
    const double denom = joint_dot(p, hp);
    if (denom <= 0.0) break; // numerical null-space direction, done
    const double step = rs / denom;
    amrec::axpy(step, p.x, w.x);
    amrec::axpy(step, p.z, w.z);
    amrec::axpy(-step, hp.x, r.x);
    amrec::axpy(-step, hp.z, r.z);
    const double rs_next = joint_dot(r, r);
    const double mix = rs_next / rs;
    amrec::Tensor px = r.x, pz = r.z;
    amrec::axpy(mix, p.x, px);
    amrec::axpy(mix, p.z, pz);
    p.x = std::move(px);
    p.z = std::move(pz);
    rs = rs_next;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Structural similarity reference: 11x11 Gaussian window, stddev 1.5,
// stabilizers (0.01*peak)^2 and (0.03*peak)^2, averaged over windows fully
// inside the image. Written directly from the formula.
// ---------------------------------------------------------------------------

inline double ssim_ref(const amrec::Tensor& a, const amrec::Tensor& b,
                       double peak) {
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  const int half = 5;
  double win[11][11];
  double wsum = 0.0;
  for (int u = -half; u <= half; ++u)
    for (int v = -half; v <= half; ++v) {
      const double g = std::exp(-(u * u + v * v) / (2.0 * 1.5 * 1.5));
      win[u + half][v + half] = g;
      wsum += g;
    }
  for (auto& row : win)
    for (double& w : row) w /= wsum;

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = half; r + half < rows; ++r)
    for (std::size_t c = half; c + half < cols; ++c) {
      double ma = 0.0, mb = 0.0;
      for (int u = -half; u <= half; ++u)
        for (int v = -half; v <= half; ++v) {
          const double w = win[u + half][v + half];
          ma += w * a(r + u, c + v);
          mb += w * b(r + u, c + v);
        }
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (int u = -half; u <= half; ++u)
        for (int v = -half; v <= half; ++v) {
          const double w = win[u + half][v + half];
          const double da = a(r + u, c + v) - ma;
          const double db = b(r + u, c + v) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Scratch directories for file-format and pipeline tests.
// ---------------------------------------------------------------------------

inline std::string fresh_dir(const std::string& tag) {
  static int counter = 0;
  const auto base = std::filesystem::temp_directory_path() / "amrec-tests";
  const auto dir = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir.string();
}

} // namespace testsupport
