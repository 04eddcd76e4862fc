#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "amrec/objective.hpp"

namespace amrec {

/**
 * Alternating-minimization solver for
 *
 *   min_{x,z} phi(x, z) = f(x, z) + R(x) + Q(z)
 *
 * working on the smoothed surrogate phi_eps and shrinking eps on a
 * stationarity-driven schedule. Each outer iteration first tries a pair of
 * linearized proximal-gradient steps (the candidate branch); if those fail
 * a sufficient-descent test, a backtracking block-coordinate fallback step
 * is taken instead, which guarantees monotone descent of phi_eps.
 */
struct SolverParams {
  // Candidate branch step sizes: gradient steps alpha (z block) and beta
  // (x block), proximal weights prox_q / prox_p for the smoothed
  // regularizer steps.
  double alpha = 0.1;
  double beta = 0.1;
  double prox_p = 0.1;
  double prox_q = 0.1;

  // Fallback branch: initial step sizes, shrink factor, descent constant.
  double bar_alpha = 0.9;
  double bar_beta = 0.9;
  double rho = 0.5;
  double delta = 1e-3;

  // Sufficient-descent constant for accepting the candidate branch.
  double eta = 1e-3;

  // Smoothing schedule: eps starts at eps0 and shrinks by gamma whenever
  // the stationarity residual drops below sigma*gamma*eps; the run stops
  // once the post-shrink eps would be <= eps_tol. sigma = 0 freezes eps.
  double gamma = 0.5;
  double sigma = 1.0;
  double eps0 = 1.0;
  double eps_tol = 1e-4;

  std::size_t max_outer_iters = 2000;
  std::size_t max_linesearch = 60;

  // Combined step sizes of the two-stage candidate updates.
  double alpha_hat() const { return alpha * prox_q / (alpha + prox_q); }
  double beta_hat() const { return beta * prox_p / (beta + prox_p); }
};

void validate_params(const SolverParams& params);

struct SolverProblem {
  const FidelityModel* model = nullptr;
  const Regularizer* reg_image = nullptr; // R, acts on x
  const Regularizer* reg_sino = nullptr;  // Q, acts on z
};

enum class StepBranch { candidate, fallback };
const char* branch_name(StepBranch branch); // "u-accepted" / "v-fallback"
StepBranch branch_from_name(const std::string& name);

struct IterationRecord {
  std::size_t k = 0;
  double eps = 0.0;       // smoothing level this step ran at
  double phi_eps = 0.0;   // smoothed objective at the new iterate, same eps
  double phi = 0.0;       // unsmoothed objective at the new iterate
  double grad_norm = 0.0; // stationarity residual at the new iterate, same eps
  StepBranch branch = StepBranch::candidate;
  std::size_t linesearch_count = 0; // fallback shrinks taken this step
  bool reduced = false;             // eps was shrunk after this step
};

/**
 * Solver state between outer iterations. Everything below x/z/eps is a
 * cache evaluated at the current (x, z, eps); solver_step maintains it so
 * each iteration costs a near-minimal number of projector and extractor
 * applications.
 */
struct SolverState {
  Tensor x;
  Tensor z;
  double eps = 0.0;
  std::size_t k = 0;

  // Current fallback step sizes; they persist across iterations at a fixed
  // eps and reset to the configured values when eps shrinks.
  double bar_alpha = 0.0;
  double bar_beta = 0.0;

  Tensor proj_x;    // A x
  double fid = 0.0; // f(x, z)
  double smooth_r = 0.0;
  double smooth_q = 0.0;
  Tensor grad_fx; // A^T (A x - z)
  Tensor grad_fz; // z - A x + lambda P0^T (P0 z - s0)
  Tensor grad_rx; // grad of smoothed R at x
  Tensor grad_qz; // grad of smoothed Q at z
  double grad_norm = 0.0;

  double phi_eps_value() const { return fid + smooth_r + smooth_q; }
};

SolverState make_state(const SolverProblem& problem, const SolverParams& params,
                       Tensor x0, Tensor z0);

// Candidate branch: z step through f and the smoothed Q, then x step
// through f (at the updated z) and the smoothed R.
std::pair<Tensor, Tensor> u_update(const SolverProblem& problem,
                                   const SolverParams& params,
                                   const SolverState& state);

// Acceptance test for the candidate pair: enough decrease of phi_eps and a
// gradient norm controlled by the step lengths. Ties pass.
bool sdc_check(const SolverParams& params, double phi_eps_candidate,
               double phi_eps_current, double grad_norm_current,
               double step_x, double step_z);

struct FallbackStep {
  Tensor vx;
  Tensor vz;
  Tensor proj_vx;
  double fid = 0.0;
  double smooth_r = 0.0;
  double smooth_q = 0.0;
  std::size_t shrinks = 0;
  double phi_eps_value() const { return fid + smooth_r + smooth_q; }
};

// Backtracking block-coordinate step; shrinks state's bar step sizes until
// the descent test passes. Throws InvariantFailure past max_linesearch.
FallbackStep bcd_fallback(const SolverProblem& problem,
                          const SolverParams& params, SolverState& state);

// One outer iteration: candidate step, acceptance test, fallback if needed,
// then the eps-shrink test at the new iterate. Advances the state.
IterationRecord solver_step(const SolverProblem& problem,
                            const SolverParams& params, SolverState& state);

// Worst-case number of fallback shrinks within one fixed-eps segment, from
// the curvature bound: backtracking stops once the step drops below
// 1/(delta + lip/2).
std::size_t linesearch_bound(const SolverParams& params, double lip);

// Coefficient C2 such that every iteration of a fixed-eps segment obeys
// ||grad phi_eps(x_k, z_k)||^2 <= C2 * (phi_eps(k) - phi_eps(k+1)). Summing
// over a segment of K steps with objective gap G gives
// min_k ||grad|| <= sqrt(C2*G) * K^(-1/2) <= sqrt(C2*G) * K^(-1/3).
// `lip` is the segment's curvature bound, `proj_norm` the projector's
// operator norm (the cross term picked up by the fallback x step).
double stationarity_rate_constant(const SolverParams& params, double lip,
                                  double proj_norm);

struct EpsSegment {
  double eps = 0.0;
  double lip_estimate = 0.0;       // curvature bound for grad phi_eps
  std::size_t linesearch_bound = 0;
};

struct SolveResult {
  Tensor x;
  Tensor z;
  std::vector<IterationRecord> trace;
  bool converged = false;        // stopped via the eps_tol rule
  double eps_final = 0.0;        // eps at the stopping step, before the shrink
  double grad_norm_final = 0.0;
  double surrogate_initial = 0.0; // phi_eps(x0,z0) + m_total*eps0/2
  double m_total = 0.0;           // feature positions of R plus Q
  double fidelity_lip = 0.0;
  std::vector<EpsSegment> segments;
};

struct SolveDiagnosticsConfig {
  std::size_t smoothness_samples = 40;
  std::uint64_t smoothness_seed = 20240915;
  std::size_t fidelity_power_iters = 40;
  bool estimate_curvature = true; // disable to skip the sampling pass
};

SolveResult run_solver(const SolverProblem& problem, const SolverParams& params,
                       Tensor x0, Tensor z0,
                       const SolveDiagnosticsConfig& diag = {});

} // namespace amrec
