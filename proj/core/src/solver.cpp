#include "amrec/solver.hpp"

#include <cmath>
#include <sstream>

#include "amrec/errors.hpp"
#include "amrec/radon.hpp"

namespace amrec {

void validate_params(const SolverParams& p) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("SolverParams: ") + name +
                            " must be positive and finite");
    }
  };
  positive(p.alpha, "alpha");
  positive(p.beta, "beta");
  positive(p.prox_p, "prox_p");
  positive(p.prox_q, "prox_q");
  positive(p.bar_alpha, "bar_alpha");
  positive(p.bar_beta, "bar_beta");
  positive(p.eta, "eta");
  positive(p.eps0, "eps0");
  if (!(p.rho > 0.0 && p.rho < 1.0)) {
    throw ValidationError("SolverParams: rho must lie in (0, 1)");
  }
  if (!(p.delta > 0.0)) {
    throw ValidationError("SolverParams: delta must be positive");
  }
  if (!(p.gamma > 0.0 && p.gamma < 1.0)) {
    throw ValidationError("SolverParams: gamma must lie in (0, 1)");
  }
  if (!(p.sigma >= 0.0) || !std::isfinite(p.sigma)) {
    throw ValidationError("SolverParams: sigma must be >= 0");
  }
  if (!(p.eps_tol >= 0.0)) {
    throw ValidationError("SolverParams: eps_tol must be >= 0");
  }
  if (p.max_outer_iters == 0) {
    throw ValidationError("SolverParams: max_outer_iters must be >= 1");
  }
}

const char* branch_name(StepBranch branch) {
  return branch == StepBranch::candidate ? "u-accepted" : "v-fallback";
}

StepBranch branch_from_name(const std::string& name) {
  if (name == "u-accepted") return StepBranch::candidate;
  if (name == "v-fallback") return StepBranch::fallback;
  throw ValidationError("unknown step branch name: " + name);
}

namespace {

void validate_problem(const SolverProblem& problem) {
  if (!problem.model || !problem.reg_image || !problem.reg_sino) {
    throw ValidationError("SolverProblem: model and both regularizers required");
  }
  validate_model(*problem.model);
  validate_regularizer(*problem.reg_image);
  validate_regularizer(*problem.reg_sino);
  if (problem.reg_image->in_channels != 1 || problem.reg_sino->in_channels != 1) {
    throw ValidationError("SolverProblem: regularizers must take one channel");
  }
}

double joint_residual(const SolverState& s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.grad_fx.size(); ++i) {
    const double g = s.grad_fx[i] + s.grad_rx[i];
    acc += g * g;
  }
  for (std::size_t i = 0; i < s.grad_fz.size(); ++i) {
    const double g = s.grad_fz[i] + s.grad_qz[i];
    acc += g * g;
  }
  return std::sqrt(acc);
}

// Value pieces at a prospective iterate, sharing one extractor pass per
// variable between the smoothed and the raw regularizer values.
struct PointValues {
  double fid = 0.0;
  double smooth_r = 0.0;
  double smooth_q = 0.0;
  double raw_r = 0.0;
  double raw_q = 0.0;
  double phi_eps() const { return fid + smooth_r + smooth_q; }
  double phi() const { return fid + raw_r + raw_q; }
};

PointValues evaluate_point(const SolverProblem& problem, const Tensor& proj,
                           const Tensor& x, const Tensor& z, double eps) {
  PointValues v;
  v.fid = fidelity_from_proj(*problem.model, proj, z);
  const FeatureNorms fr = extract_features(*problem.reg_image, x);
  const FeatureNorms fq = extract_features(*problem.reg_sino, z);
  v.smooth_r = smoothed_from(fr, eps, nullptr);
  v.smooth_q = smoothed_from(fq, eps, nullptr);
  v.raw_r = norm21_from(fr);
  v.raw_q = norm21_from(fq);
  return v;
}

void refresh_gradients(const SolverProblem& problem, SolverState& s) {
  s.grad_fx = grad_x_f_from_proj(*problem.model, s.proj_x, s.z);
  s.grad_fz = grad_z_f_from_proj(*problem.model, s.proj_x, s.z);
  s.grad_rx = smoothed_grad(*problem.reg_image, s.x, s.eps);
  s.grad_qz = smoothed_grad(*problem.reg_sino, s.z, s.eps);
  s.grad_norm = joint_residual(s);
}

} // namespace

SolverState make_state(const SolverProblem& problem, const SolverParams& params,
                       Tensor x0, Tensor z0) {
  validate_problem(problem);
  validate_params(params);
  ensure_finite(x0, "solver x0");
  ensure_finite(z0, "solver z0");

  SolverState s;
  s.x = std::move(x0);
  s.z = std::move(z0);
  s.eps = params.eps0;
  s.bar_alpha = params.bar_alpha;
  s.bar_beta = params.bar_beta;
  s.proj_x = project(problem.model->geom, s.x);
  const PointValues v = evaluate_point(problem, s.proj_x, s.x, s.z, s.eps);
  s.fid = v.fid;
  s.smooth_r = v.smooth_r;
  s.smooth_q = v.smooth_q;
  refresh_gradients(problem, s);
  return s;
}

std::pair<Tensor, Tensor> u_update(const SolverProblem& problem,
                                   const SolverParams& params,
                                   const SolverState& state) {
  // z block: gradient step on f, then a gradient step on smoothed Q taken
  // at the intermediate point, with the combined step length alpha_hat.
  Tensor b = state.z;
  axpy(-params.alpha, state.grad_fz, b);
  Tensor uz = b;
  Tensor qb = smoothed_grad(*problem.reg_sino, b, state.eps);
  axpy(-params.alpha_hat(), qb, uz);

  // x block against the updated z.
  Tensor gxu = grad_x_f_from_proj(*problem.model, state.proj_x, uz);
  Tensor c = state.x;
  axpy(-params.beta, gxu, c);
  Tensor ux = c;
  Tensor rc = smoothed_grad(*problem.reg_image, c, state.eps);
  axpy(-params.beta_hat(), rc, ux);
  return {std::move(ux), std::move(uz)};
}

bool sdc_check(const SolverParams& params, double phi_eps_candidate,
               double phi_eps_current, double grad_norm_current,
               double step_x, double step_z) {
  const double decrease = phi_eps_candidate - phi_eps_current;
  const bool descent =
      decrease <= -params.eta * (step_x * step_x + step_z * step_z);
  const bool controlled =
      grad_norm_current <= (step_x + step_z) / params.eta;
  return descent && controlled;
}

FallbackStep bcd_fallback(const SolverProblem& problem,
                          const SolverParams& params, SolverState& state) {
  // Joint gradients of phi_eps at the current point, from the caches. The
  // z step uses them directly; the x step re-linearizes f at the updated z.
  Tensor dir_z = state.grad_fz;
  axpy(1.0, state.grad_qz, dir_z);

  const double phi_cur = state.phi_eps_value();
  double last_phi = 0.0;
  double last_move = 0.0;
  bool have_candidate = false;

  for (std::size_t shrinks = 0;; ++shrinks) {
    if (shrinks > 0) {
      state.bar_alpha *= params.rho;
      state.bar_beta *= params.rho;
    }
    if (shrinks > params.max_linesearch) {
      std::ostringstream os;
      os << "fallback line search exhausted after " << params.max_linesearch
         << " shrinks at iteration " << state.k << ": eps=" << state.eps
         << " bar_alpha=" << state.bar_alpha << " bar_beta=" << state.bar_beta
         << " phi_eps=" << phi_cur;
      if (have_candidate) {
        os << " last candidate phi_eps=" << last_phi
           << " last squared move=" << last_move;
      }
      throw InvariantFailure(os.str());
    }

    Tensor vz = state.z;
    axpy(-state.bar_alpha, dir_z, vz);
    try {
      Tensor gxv = grad_x_f_from_proj(*problem.model, state.proj_x, vz);
      axpy(1.0, state.grad_rx, gxv);
      Tensor vx = state.x;
      axpy(-state.bar_beta, gxv, vx);

      Tensor proj_vx = project(problem.model->geom, vx);
      const PointValues v = evaluate_point(problem, proj_vx, vx, vz, state.eps);
      Tensor dx = sub(vx, state.x);
      Tensor dz = sub(vz, state.z);
      const double move = norm2sq(dx) + norm2sq(dz);
      last_phi = v.phi_eps();
      last_move = move;
      have_candidate = true;
      if (std::isfinite(last_phi) && last_phi - phi_cur <= -params.delta * move) {
        FallbackStep step;
        step.vx = std::move(vx);
        step.vz = std::move(vz);
        step.proj_vx = std::move(proj_vx);
        step.fid = v.fid;
        step.smooth_r = v.smooth_r;
        step.smooth_q = v.smooth_q;
        step.shrinks = shrinks;
        return step;
      }
    } catch (const InvariantFailure&) {
      // A non-finite evaluation at an overlong step counts as a failed
      // attempt; the next shrink brings the step back into range.
    }
  }
}

IterationRecord solver_step(const SolverProblem& problem,
                            const SolverParams& params, SolverState& state) {
  const double phi_cur = state.phi_eps_value();

  Tensor new_x, new_z, new_proj;
  PointValues new_vals;
  StepBranch branch = StepBranch::candidate;
  std::size_t shrinks = 0;
  bool accepted = false;

  try {
    auto [ux, uz] = u_update(problem, params, state);
    Tensor proj_ux = project(problem.model->geom, ux);
    const PointValues vals = evaluate_point(problem, proj_ux, ux, uz, state.eps);
    Tensor dx = sub(ux, state.x);
    Tensor dz = sub(uz, state.z);
    if (std::isfinite(vals.phi_eps()) &&
        sdc_check(params, vals.phi_eps(), phi_cur, state.grad_norm,
                  norm2(dx), norm2(dz))) {
      new_x = std::move(ux);
      new_z = std::move(uz);
      new_proj = std::move(proj_ux);
      new_vals = vals;
      accepted = true;
    }
  } catch (const InvariantFailure&) {
    // Candidate produced non-finite values; treat as a failed descent test
    // and fall through to the safeguarded step.
  }

  if (!accepted) {
    FallbackStep fb = bcd_fallback(problem, params, state);
    branch = StepBranch::fallback;
    shrinks = fb.shrinks;
    new_x = std::move(fb.vx);
    new_z = std::move(fb.vz);
    new_proj = std::move(fb.proj_vx);
    new_vals.fid = fb.fid;
    new_vals.smooth_r = fb.smooth_r;
    new_vals.smooth_q = fb.smooth_q;
    // Raw regularizer values were not needed during backtracking; fill them
    // for the record.
    new_vals.raw_r = norm21(*problem.reg_image, new_x);
    new_vals.raw_q = norm21(*problem.reg_sino, new_z);
  }

  state.x = std::move(new_x);
  state.z = std::move(new_z);
  state.proj_x = std::move(new_proj);
  state.fid = new_vals.fid;
  state.smooth_r = new_vals.smooth_r;
  state.smooth_q = new_vals.smooth_q;
  refresh_gradients(problem, state);

  IterationRecord rec;
  rec.k = state.k;
  rec.eps = state.eps;
  rec.phi_eps = state.phi_eps_value();
  rec.phi = new_vals.phi();
  rec.grad_norm = state.grad_norm;
  rec.branch = branch;
  rec.linesearch_count = shrinks;
  rec.reduced = state.grad_norm < params.sigma * params.gamma * state.eps;

  if (rec.reduced) {
    state.eps *= params.gamma;
    // Fidelity pieces are eps-independent; only the smoothed values and
    // regularizer gradients change.
    const FeatureNorms fr = extract_features(*problem.reg_image, state.x);
    const FeatureNorms fq = extract_features(*problem.reg_sino, state.z);
    state.smooth_r = smoothed_from(fr, state.eps, nullptr);
    state.smooth_q = smoothed_from(fq, state.eps, nullptr);
    state.grad_rx = smoothed_grad(*problem.reg_image, state.x, state.eps);
    state.grad_qz = smoothed_grad(*problem.reg_sino, state.z, state.eps);
    state.grad_norm = joint_residual(state);
    state.bar_alpha = params.bar_alpha;
    state.bar_beta = params.bar_beta;
  }
  state.k += 1;
  return rec;
}

std::size_t linesearch_bound(const SolverParams& params, double lip) {
  const double s_star = 1.0 / (params.delta + lip / 2.0);
  const double start = std::max(params.bar_alpha, params.bar_beta);
  if (start <= s_star) return 0;
  const double r = std::log(s_star / start) / std::log(params.rho);
  return static_cast<std::size_t>(std::ceil(r - 1e-12));
}

double stationarity_rate_constant(const SolverParams& params, double lip,
                                  double proj_norm) {
  // Returns C2 with ||grad phi_eps(x_k,z_k)||^2 <= C2 * (phi_eps(k) -
  // phi_eps(k+1)) on any iteration of a fixed-eps segment, valid for both
  // branches. Candidate branch: the acceptance test gives both a gradient
  // bound by the step length and an eta-weighted descent. Fallback branch:
  // steps are explicit gradient steps no shorter than s_min, so the
  // gradient is bounded by move/s_min plus a projector cross term, and the
  // descent test gives a delta-weighted decrease.
  const double s_star = 1.0 / (params.delta + lip / 2.0);
  const double s_min = std::min(std::min(params.bar_alpha, params.bar_beta),
                                params.rho * s_star);
  const double u_part = 2.0 / (params.eta * params.eta * params.eta);
  const double t = 1.0 / s_min + proj_norm;
  const double v_part = 2.0 * t * t / params.delta;
  return std::max(u_part, v_part);
}

SolveResult run_solver(const SolverProblem& problem, const SolverParams& params,
                       Tensor x0, Tensor z0,
                       const SolveDiagnosticsConfig& diag) {
  SolverState state = make_state(problem, params, std::move(x0), std::move(z0));

  SolveResult result;
  const std::size_t n = problem.model->geom.image_size;
  const double m_r = static_cast<double>(feature_positions(n, n));
  const double m_q = static_cast<double>(feature_positions(
      problem.model->geom.n_views, problem.model->geom.n_detectors));
  result.m_total = m_r + m_q;
  result.surrogate_initial =
      state.phi_eps_value() + result.m_total * params.eps0 / 2.0;

  ExtractorSmoothness sr, sq;
  if (diag.estimate_curvature) {
    sr = estimate_smoothness(*problem.reg_image, diag.smoothness_samples, n, n,
                             diag.smoothness_seed);
    sq = estimate_smoothness(*problem.reg_sino, diag.smoothness_samples,
                             problem.model->geom.n_views,
                             problem.model->geom.n_detectors,
                             diag.smoothness_seed + 1);
    result.fidelity_lip =
        fidelity_lipschitz(*problem.model, diag.fidelity_power_iters);
  }
  auto segment_for = [&](double eps) {
    EpsSegment seg;
    seg.eps = eps;
    if (diag.estimate_curvature) {
      seg.lip_estimate = result.fidelity_lip +
                         lipschitz_from_smoothness(sr, eps) +
                         lipschitz_from_smoothness(sq, eps);
      seg.linesearch_bound = amrec::linesearch_bound(params, seg.lip_estimate);
    } else {
      seg.lip_estimate = 0.0;
      seg.linesearch_bound = params.max_linesearch;
    }
    return seg;
  };
  result.segments.push_back(segment_for(state.eps));

  result.trace.reserve(params.max_outer_iters);
  while (state.k < params.max_outer_iters) {
    IterationRecord rec = solver_step(problem, params, state);
    result.trace.push_back(rec);
    if (rec.reduced) {
      if (state.eps <= params.eps_tol) {
        result.converged = true;
        result.eps_final = rec.eps;
        result.grad_norm_final = rec.grad_norm;
        break;
      }
      result.segments.push_back(segment_for(state.eps));
    }
  }
  if (!result.converged) {
    result.eps_final = state.eps;
    result.grad_norm_final = state.grad_norm;
  }
  result.x = std::move(state.x);
  result.z = std::move(state.z);
  return result;
}

} // namespace amrec
