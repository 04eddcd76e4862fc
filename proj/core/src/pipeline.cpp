#include "amrec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "amrec/errors.hpp"
#include "amrec/init.hpp"
#include "amrec/io.hpp"
#include "amrec/metrics.hpp"
#include "amrec/phantom.hpp"
#include "amrec/radon.hpp"
#include "amrec/solver.hpp"

namespace amrec {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory: " + dir);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// JSON value for a double that may be infinite (identical images give an
// infinite peak signal-to-noise ratio).
json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw ValidationError("write failed: " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  json j = json::parse(os.str(), nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed JSON in " + path);
  return j;
}

void write_config_echo(const RunConfig& cfg) {
  std::ofstream f(join(cfg.out_dir, "config.json"));
  if (!f) throw ValidationError("cannot write config echo");
  f << config_to_json_text(cfg) << "\n";
}

Tensor build_phantom(const RunConfig& cfg, Rng& rng) {
  if (cfg.phantom.kind == "shepp-logan") {
    return shepp_logan(cfg.geometry.image_size);
  }
  return random_ellipse_phantom(cfg.geometry.image_size, cfg.phantom.ellipses,
                                rng);
}

Regularizer build_regularizer(const RegularizerChoice& choice, bool sinogram) {
  if (choice.kind == "file") {
    StoredStack stored = load_layer_stack(choice.file);
    Regularizer reg;
    reg.stack = std::move(stored.stack);
    reg.in_channels = 1;
    validate_regularizer(reg);
    return reg;
  }
  return sinogram ? make_sinogram_tv_regularizer(choice.weight)
                  : make_tv_regularizer(choice.weight);
}

InitPair build_init(const RunConfig& cfg, const Tensor& s0) {
  if (cfg.selector.offset != 0) {
    throw ValidationError("init: completion assumes selector offset 0");
  }
  if (cfg.init.mode == "zero-fill" || cfg.selector.rate == 1) {
    InitPair pair;
    pair.z0 = embed_views(cfg.geometry, cfg.selector, s0);
    pair.x0 = fbp(cfg.geometry, pair.z0);
    return pair;
  }
  if (cfg.init.mode == "interpolation") {
    return init_pair(make_interpolation_advance(cfg.selector.rate),
                     cfg.geometry, s0);
  }
  ViewAdvanceMap map = load_advance_map(cfg.init.map_file);
  if (map.rate != cfg.selector.rate) {
    throw ValidationError("init: advance map rate does not match selector");
  }
  return init_pair(map, cfg.geometry, s0);
}

json params_to_json(const SolverParams& p) {
  return json{{"alpha", p.alpha},
              {"beta", p.beta},
              {"prox_p", p.prox_p},
              {"prox_q", p.prox_q},
              {"bar_alpha", p.bar_alpha},
              {"bar_beta", p.bar_beta},
              {"rho", p.rho},
              {"delta", p.delta},
              {"eta", p.eta},
              {"gamma", p.gamma},
              {"sigma", p.sigma},
              {"eps0", p.eps0},
              {"eps_tol", p.eps_tol},
              {"max_outer_iters", p.max_outer_iters},
              {"max_linesearch", p.max_linesearch}};
}

SolverParams params_from_json(const json& j, const std::string& where) {
  SolverParams p;
  try {
    p.alpha = j.at("alpha").get<double>();
    p.beta = j.at("beta").get<double>();
    p.prox_p = j.at("prox_p").get<double>();
    p.prox_q = j.at("prox_q").get<double>();
    p.bar_alpha = j.at("bar_alpha").get<double>();
    p.bar_beta = j.at("bar_beta").get<double>();
    p.rho = j.at("rho").get<double>();
    p.delta = j.at("delta").get<double>();
    p.eta = j.at("eta").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.sigma = j.at("sigma").get<double>();
    p.eps0 = j.at("eps0").get<double>();
    p.eps_tol = j.at("eps_tol").get<double>();
    p.max_outer_iters = j.at("max_outer_iters").get<std::size_t>();
    p.max_linesearch = j.at("max_linesearch").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad solver params record: " + e.what());
  }
  return p;
}

struct SolveOutcome {
  SolverParams effective;
  InitPair start;
  SolveResult result;
};

// Shared reconstruct/stability path: regularizers, warm start, effective
// step sizes, solve.
SolveOutcome solve_from_measurements(const RunConfig& cfg, const Tensor& s0) {
  FidelityModel model{cfg.geometry, cfg.selector, s0, cfg.lambda};
  validate_model(model);

  Regularizer reg_r = build_regularizer(cfg.reg_image, false);
  Regularizer reg_q = build_regularizer(cfg.reg_sino, true);

  SolveOutcome outcome;
  outcome.effective = cfg.solver;
  if (cfg.beta_auto_scale > 0.0) {
    const double lip = fidelity_lipschitz(model);
    if (lip > 0.0) {
      outcome.effective.beta = cfg.beta_auto_scale / lip;
    }
  }
  outcome.start = build_init(cfg, s0);

  SolverProblem problem{&model, &reg_r, &reg_q};
  outcome.result = run_solver(problem, outcome.effective, outcome.start.x0,
                              outcome.start.z0);
  return outcome;
}

json segments_to_json(const std::vector<EpsSegment>& segments) {
  json out = json::array();
  for (const EpsSegment& s : segments) {
    out.push_back(json{{"eps", s.eps},
                       {"lip_estimate", s.lip_estimate},
                       {"linesearch_bound", s.linesearch_bound}});
  }
  return out;
}

json solve_metrics(const SolveOutcome& outcome) {
  std::size_t candidate_rows = 0;
  for (const IterationRecord& r : outcome.result.trace) {
    if (r.branch == StepBranch::candidate) ++candidate_rows;
  }
  json j;
  j["iterations"] = outcome.result.trace.size();
  j["branch_counts"] = {
      {"u-accepted", candidate_rows},
      {"v-fallback", outcome.result.trace.size() - candidate_rows}};
  j["converged"] = outcome.result.converged;
  j["eps_final"] = outcome.result.eps_final;
  j["grad_norm_final"] = outcome.result.grad_norm_final;
  j["surrogate_initial"] = outcome.result.surrogate_initial;
  j["m_total"] = outcome.result.m_total;
  j["fidelity_lip"] = outcome.result.fidelity_lip;
  j["segments"] = segments_to_json(outcome.result.segments);
  j["params"] = params_to_json(outcome.effective);
  if (!outcome.result.trace.empty()) {
    const IterationRecord& last = outcome.result.trace.back();
    j["phi_final"] = last.phi;
    j["phi_eps_final"] = last.phi_eps;
  }
  return j;
}

// Reconstruction quality numbers against the ground truth, when available.
void add_reference_metrics(json& j, const RunConfig& cfg, const Tensor& s0,
                           const SolveOutcome& outcome, const Tensor* phantom,
                           const Tensor* sino_full) {
  if (phantom) {
    double peak = 0.0;
    for (std::size_t i = 0; i < phantom->size(); ++i) {
      peak = std::max(peak, (*phantom)[i]);
    }
    if (peak > 0.0) {
      j["peak"] = peak;
      j["psnr"] = json_number(psnr(outcome.result.x, *phantom, peak));
      j["ssim"] = ssim(outcome.result.x, *phantom, peak);
      j["rmse"] = rmse(outcome.result.x, *phantom);
      j["psnr_init"] = json_number(psnr(outcome.start.x0, *phantom, peak));

      Tensor zero_fill = embed_views(cfg.geometry, cfg.selector, s0);
      Tensor fbp_baseline = fbp(cfg.geometry, zero_fill);
      j["psnr_zero_fill_fbp"] = json_number(psnr(fbp_baseline, *phantom, peak));
    }
  }
  if (sino_full) {
    j["rmse_z_star"] = rmse(outcome.result.z, *sino_full);
    j["rmse_completion_used"] = rmse(outcome.start.z0, *sino_full);
    Tensor zero_fill = embed_views(cfg.geometry, cfg.selector, s0);
    j["rmse_completion_zero_fill"] = rmse(zero_fill, *sino_full);
    if (cfg.selector.rate > 1) {
      Tensor interp = complete_sinogram(
          make_interpolation_advance(cfg.selector.rate), cfg.geometry, s0);
      j["rmse_completion_interpolation"] = rmse(interp, *sino_full);
    }
  }
}

void write_solution(const RunConfig& cfg, const SolveOutcome& outcome,
                    json metrics) {
  save_tensor(join(cfg.out_dir, "x_star.bin"), outcome.result.x, "image",
              cfg.geometry);
  save_tensor(join(cfg.out_dir, "z_star.bin"), outcome.result.z, "sinogram",
              cfg.geometry);
  write_pgm(join(cfg.out_dir, "x_star.pgm"), outcome.result.x);
  write_pgm(join(cfg.out_dir, "z_star.pgm"), outcome.result.z);
  save_tensor(join(cfg.out_dir, "x_init.bin"), outcome.start.x0, "image",
              cfg.geometry);
  save_tensor(join(cfg.out_dir, "z_init.bin"), outcome.start.z0, "sinogram",
              cfg.geometry);
  write_trace_csv(join(cfg.out_dir, "trace.csv"), outcome.result.trace);
  write_json_file(join(cfg.out_dir, "metrics.json"), metrics);
}

} // namespace

int cmd_simulate(const RunConfig& cfg) {
  validate_config(cfg);
  ensure_dir(cfg.out_dir);
  Rng rng(cfg.seed);

  Tensor phantom = build_phantom(cfg, rng);
  Tensor full = project(cfg.geometry, phantom);
  Tensor s0 = select_views(cfg.geometry, cfg.selector, full);
  if (cfg.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < s0.size(); ++i) {
      s0[i] += cfg.noise_sigma * rng.normal();
    }
  }

  save_tensor(join(cfg.out_dir, "phantom.bin"), phantom, "image", cfg.geometry);
  write_pgm(join(cfg.out_dir, "phantom.pgm"), phantom);
  save_tensor(join(cfg.out_dir, "sino_full.bin"), full, "sinogram",
              cfg.geometry);
  save_tensor(join(cfg.out_dir, "sino_sparse.bin"), s0, "sinogram",
              cfg.geometry);
  write_config_echo(cfg);
  return 0;
}

namespace {

// Measurements plus whatever references the data directory holds.
struct LoadedData {
  Tensor s0;
  bool have_phantom = false;
  Tensor phantom;
  bool have_full = false;
  Tensor sino_full;
};

LoadedData load_data(const RunConfig& cfg) {
  const std::string dir = cfg.data_dir.empty() ? cfg.out_dir : cfg.data_dir;
  LoadedData data;
  StoredTensor stored = load_tensor(join(dir, "sino_sparse.bin"));
  if (stored.geom.image_size != cfg.geometry.image_size ||
      stored.geom.n_views != cfg.geometry.n_views ||
      stored.geom.n_detectors != cfg.geometry.n_detectors ||
      stored.geom.detector_spacing != cfg.geometry.detector_spacing) {
    throw ValidationError("reconstruct: stored geometry does not match config");
  }
  data.s0 = std::move(stored.values);

  const std::string phantom_path = join(dir, "phantom.bin");
  if (fs::exists(phantom_path)) {
    data.phantom = load_tensor(phantom_path).values;
    data.have_phantom = true;
  }
  const std::string full_path = join(dir, "sino_full.bin");
  if (fs::exists(full_path)) {
    data.sino_full = load_tensor(full_path).values;
    data.have_full = true;
  }
  return data;
}

} // namespace

int cmd_reconstruct(const RunConfig& cfg) {
  validate_config(cfg);
  ensure_dir(cfg.out_dir);
  LoadedData data = load_data(cfg);

  SolveOutcome outcome = solve_from_measurements(cfg, data.s0);

  json metrics = solve_metrics(outcome);
  add_reference_metrics(metrics, cfg, data.s0, outcome,
                        data.have_phantom ? &data.phantom : nullptr,
                        data.have_full ? &data.sino_full : nullptr);
  write_solution(cfg, outcome, std::move(metrics));
  write_config_echo(cfg);
  return 0;
}

int cmd_init_train(const RunConfig& cfg) {
  validate_config(cfg);
  if (cfg.selector.rate < 2) {
    throw ValidationError("init-train: selector rate must be >= 2");
  }
  ensure_dir(cfg.out_dir);
  Rng rng(cfg.seed);

  std::vector<Tensor> sinos;
  sinos.reserve(cfg.train.dataset_size);
  for (std::size_t i = 0; i < cfg.train.dataset_size; ++i) {
    Tensor ph = random_ellipse_phantom(cfg.geometry.image_size,
                                       cfg.train.ellipses, rng);
    sinos.push_back(project(cfg.geometry, ph));
  }

  ViewAdvanceMap map = make_conv_advance(
      cfg.selector.rate, cfg.train.blocks, cfg.train.hidden_channels,
      cfg.train.kernel_h, cfg.train.kernel_w, cfg.train.init_scale, rng,
      cfg.train.use_skip);

  TrainSettings settings;
  settings.epochs = cfg.train.epochs;
  settings.step_size = cfg.train.step_size;
  settings.include_wrap_pair = cfg.train.include_wrap_pair;
  const std::vector<double> losses = train_advance(map, sinos, settings);

  save_advance_map(join(cfg.out_dir, "advance_map.bin"), map);
  {
    std::ofstream f(join(cfg.out_dir, "loss.csv"));
    if (!f) throw ValidationError("cannot write loss.csv");
    f << "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", losses[i]);
      f << i << "," << buf << "\n";
    }
  }

  // Held-out completion comparison: learned map against the blend baseline
  // on a fresh phantom.
  Tensor test_ph = random_ellipse_phantom(cfg.geometry.image_size,
                                          cfg.train.ellipses, rng);
  Tensor test_full = project(cfg.geometry, test_ph);
  Tensor test_s0 = select_views(cfg.geometry, cfg.selector, test_full);
  Tensor learned_fill = complete_sinogram(map, cfg.geometry, test_s0);
  Tensor interp_fill = complete_sinogram(
      make_interpolation_advance(cfg.selector.rate), cfg.geometry, test_s0);

  json metrics;
  metrics["initial_loss"] = losses.front();
  metrics["final_loss"] = losses.back();
  metrics["loss_ratio"] =
      losses.front() > 0.0 ? losses.back() / losses.front() : 0.0;
  metrics["epochs"] = settings.epochs;
  metrics["pairs_include_wrap"] = settings.include_wrap_pair;
  metrics["holdout_rmse_learned"] = rmse(learned_fill, test_full);
  metrics["holdout_rmse_interpolation"] = rmse(interp_fill, test_full);
  write_json_file(join(cfg.out_dir, "metrics.json"), metrics);
  write_config_echo(cfg);
  return 0;
}

int cmd_stability(const RunConfig& cfg) {
  validate_config(cfg);
  ensure_dir(cfg.out_dir);
  Rng rng(cfg.seed);

  Tensor clean = build_phantom(cfg, rng);
  double clean_peak = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    clean_peak = std::max(clean_peak, clean[i]);
  }

  Tensor perturbed = clean;
  json stamp_info;
  if (cfg.stability.perturbation == "text-stamp") {
    const Tensor mask = text_stamp_mask(cfg.geometry.image_size);
    double mask_sum = 0.0, mask_count = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] > 0.5) {
        mask_sum += clean[i];
        mask_count += 1.0;
      }
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] > 0.5) perturbed[i] = cfg.stability.stamp_value;
    }
    stamp_info["stamp_value"] = cfg.stability.stamp_value;
    stamp_info["stamp_pixels"] = mask_count;
    stamp_info["stamp_contrast"] =
        cfg.stability.stamp_value - (mask_count > 0 ? mask_sum / mask_count : 0.0);
  } else {
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
      perturbed[i] += cfg.stability.noise_sigma * rng.normal();
    }
  }

  Tensor full = project(cfg.geometry, perturbed);
  Tensor s0 = select_views(cfg.geometry, cfg.selector, full);
  if (cfg.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < s0.size(); ++i) {
      s0[i] += cfg.noise_sigma * rng.normal();
    }
  }

  SolveOutcome outcome = solve_from_measurements(cfg, s0);

  json metrics = solve_metrics(outcome);
  metrics["perturbation"] = cfg.stability.perturbation;
  if (clean_peak > 0.0) {
    metrics["peak"] = clean_peak;
    metrics["psnr_vs_perturbed"] =
        json_number(psnr(outcome.result.x, perturbed, clean_peak));
    metrics["psnr_vs_clean"] =
        json_number(psnr(outcome.result.x, clean, clean_peak));
  }
  if (cfg.stability.perturbation == "text-stamp") {
    const Tensor mask = text_stamp_mask(cfg.geometry.image_size);
    double acc = 0.0, count = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] > 0.5) {
        acc += std::abs(outcome.result.x[i]);
        count += 1.0;
      }
    }
    const double mean_abs = count > 0 ? acc / count : 0.0;
    const double contrast = stamp_info["stamp_contrast"].get<double>();
    metrics["stamp_mean_abs"] = mean_abs;
    metrics["stamp_contrast"] = contrast;
    metrics["stamp_recovered"] = mean_abs > 0.5 * contrast;
    metrics["stamp_pixels"] = stamp_info["stamp_pixels"];
  } else {
    metrics["noise_sigma"] = cfg.stability.noise_sigma;
  }

  save_tensor(join(cfg.out_dir, "phantom.bin"), perturbed, "image",
              cfg.geometry);
  save_tensor(join(cfg.out_dir, "phantom_clean.bin"), clean, "image",
              cfg.geometry);
  save_tensor(join(cfg.out_dir, "sino_full.bin"), full, "sinogram",
              cfg.geometry);
  save_tensor(join(cfg.out_dir, "sino_sparse.bin"), s0, "sinogram",
              cfg.geometry);
  write_pgm(join(cfg.out_dir, "phantom.pgm"), perturbed);
  write_pgm(join(cfg.out_dir, "phantom_clean.pgm"), clean);

  Tensor diff({clean.extent(0), clean.extent(1)});
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = std::abs(outcome.result.x[i] - clean[i]);
  }
  write_pgm(join(cfg.out_dir, "diff_vs_clean.pgm"), diff);

  write_solution(cfg, outcome, std::move(metrics));
  write_config_echo(cfg);
  return 0;
}

namespace {

double get_num(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ValidationError(where + ": missing numeric field \"" + key + "\"");
  }
  return j.at(key).get<double>();
}

struct SegmentInfo {
  double eps = 0.0;
  double lip = 0.0;
  std::size_t bound = 0;
};

void add_check(RunReport& report, const std::string& name, bool passed,
               const std::string& detail) {
  report.checks.push_back({name, passed, detail});
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

} // namespace

RunReport check_run_directory(const std::string& run_dir) {
  RunReport report;
  report.run_dir = run_dir;

  const std::vector<IterationRecord> trace =
      read_trace_csv(join(run_dir, "trace.csv"));
  const json metrics = read_json_file(join(run_dir, "metrics.json"));
  const std::string where = join(run_dir, "metrics.json");

  const double m_total = get_num(metrics, "m_total", where);
  const double surrogate_initial = get_num(metrics, "surrogate_initial", where);
  const double fidelity_lip = get_num(metrics, "fidelity_lip", where);
  if (!metrics.contains("params")) {
    throw ValidationError(where + ": missing params echo");
  }
  const SolverParams params = params_from_json(metrics["params"], where);
  std::vector<SegmentInfo> segments;
  if (metrics.contains("segments")) {
    for (const json& js : metrics["segments"]) {
      SegmentInfo s;
      s.eps = get_num(js, "eps", where);
      s.lip = get_num(js, "lip_estimate", where);
      s.bound = static_cast<std::size_t>(get_num(js, "linesearch_bound", where));
      segments.push_back(s);
    }
  }

  add_check(report, "trace-nonempty", !trace.empty(),
            std::to_string(trace.size()) + " rows");
  if (trace.empty()) {
    report.all_passed = false;
    return report;
  }

  // Surrogate monotonicity: phi_eps + m_total*eps/2 never increases, and
  // starts no higher than the recorded initial value.
  {
    bool ok = true;
    std::string detail = "non-increasing";
    double prev = surrogate_initial;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const double t = trace[i].phi_eps + 0.5 * m_total * trace[i].eps;
      const double slack = 1e-9 * std::max(1.0, std::abs(prev));
      if (t > prev + slack) {
        ok = false;
        detail = "rises at row " + std::to_string(i) + " (" + fmt(t) + " > " +
                 fmt(prev) + ")";
        break;
      }
      prev = t;
    }
    add_check(report, "surrogate-monotone", ok, detail);
  }

  // Smoothing schedule: eps follows eps0 * gamma^(number of prior shrinks)
  // and the shrink flag agrees with the recorded stationarity residual.
  {
    bool ok = true;
    std::string detail = "eps follows the shrink law";
    double expected = params.eps0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (std::abs(trace[i].eps - expected) >
          1e-12 * std::max(1.0, std::abs(expected))) {
        ok = false;
        detail = "eps off schedule at row " + std::to_string(i);
        break;
      }
      const bool should_reduce =
          trace[i].grad_norm < params.sigma * params.gamma * trace[i].eps;
      if (trace[i].reduced != should_reduce) {
        ok = false;
        detail = "reduced flag contradicts grad_norm at row " +
                 std::to_string(i);
        break;
      }
      if (trace[i].reduced) expected *= params.gamma;
    }
    add_check(report, "eps-schedule", ok, detail);
  }

  // Line search effort: candidate rows take no shrinks, fallback rows stay
  // within the per-segment worst case derived from the curvature estimate.
  {
    bool ok = true;
    std::string detail = "within bounds";
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const IterationRecord& r = trace[i];
      if (r.branch == StepBranch::candidate && r.linesearch_count != 0) {
        ok = false;
        detail = "candidate row " + std::to_string(i) + " has shrinks";
        break;
      }
      if (r.linesearch_count > params.max_linesearch) {
        ok = false;
        detail = "row " + std::to_string(i) + " exceeds max_linesearch";
        break;
      }
      const SegmentInfo* seg = nullptr;
      for (const SegmentInfo& s : segments) {
        if (std::abs(s.eps - r.eps) <= 1e-12 * std::max(1.0, s.eps)) {
          seg = &s;
          break;
        }
      }
      if (seg && seg->lip > 0.0 && r.linesearch_count > seg->bound) {
        ok = false;
        detail = "row " + std::to_string(i) + " took " +
                 std::to_string(r.linesearch_count) + " shrinks, bound " +
                 std::to_string(seg->bound);
        break;
      }
    }
    add_check(report, "linesearch-bounded", ok, detail);
  }

  // Convergence certificate, when the run claims one.
  if (metrics.contains("converged") && metrics["converged"].is_boolean() &&
      metrics["converged"].get<bool>()) {
    const double eps_final = get_num(metrics, "eps_final", where);
    const double grad_final = get_num(metrics, "grad_norm_final", where);
    bool ok = true;
    std::string detail = "certificate consistent";
    const IterationRecord& last = trace.back();
    if (!last.reduced) {
      ok = false;
      detail = "final row did not shrink eps";
    } else if (std::abs(last.eps - eps_final) >
               1e-12 * std::max(1.0, eps_final)) {
      ok = false;
      detail = "eps_final does not match the final row";
    } else if (!(grad_final < params.sigma * params.gamma * eps_final)) {
      ok = false;
      detail = "grad_norm_final too large for the shrink that fired";
    } else if (!(eps_final * params.gamma <=
                 params.eps_tol * (1.0 + 1e-12))) {
      ok = false;
      detail = "post-shrink eps above eps_tol";
    }
    add_check(report, "certificate", ok, detail);
  }

  // Stationarity rate over the first fixed-eps segment: the best residual
  // seen must beat sqrt(C2*G)/K^(1/3) with C2 from the recorded constants.
  if (!segments.empty() && segments[0].lip > 0.0) {
    std::size_t k_end = 0;
    while (k_end < trace.size() && !trace[k_end].reduced) ++k_end;
    if (k_end < trace.size()) ++k_end; // include the row that shrank
    double best = std::numeric_limits<double>::infinity();
    double min_phi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k_end; ++i) {
      best = std::min(best, trace[i].grad_norm);
      min_phi = std::min(min_phi, trace[i].phi_eps);
    }
    const double gap = std::max(0.0, surrogate_initial - min_phi);
    const double c2 = stationarity_rate_constant(params, segments[0].lip,
                                                 std::sqrt(fidelity_lip));
    const double k_count = static_cast<double>(k_end);
    const double bound = std::sqrt(c2 * gap) / std::cbrt(k_count);
    const bool ok = best <= bound * (1.0 + 1e-9);
    add_check(report, "stationarity-rate", ok,
              "min grad " + fmt(best) + " vs bound " + fmt(bound) + " over " +
                  std::to_string(k_end) + " rows");
  }

  report.all_passed = true;
  for (const ReportCheck& c : report.checks) {
    report.all_passed = report.all_passed && c.passed;
  }
  return report;
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& out_dir) {
  if (run_dirs.empty()) {
    throw ValidationError("report: needs at least one run directory");
  }
  ensure_dir(out_dir);

  bool all = true;
  json jruns = json::array();
  std::ostringstream text;
  for (const std::string& dir : run_dirs) {
    RunReport rep = check_run_directory(dir);
    all = all && rep.all_passed;
    json jchecks = json::array();
    for (const ReportCheck& c : rep.checks) {
      text << (c.passed ? "[PASS] " : "[FAIL] ") << dir << ": " << c.name
           << " (" << c.detail << ")\n";
      jchecks.push_back(json{{"name", c.name},
                             {"passed", c.passed},
                             {"detail", c.detail}});
    }
    jruns.push_back(json{{"run_dir", dir},
                         {"all_passed", rep.all_passed},
                         {"checks", std::move(jchecks)}});
  }

  std::cout << text.str();
  {
    std::ofstream f(join(out_dir, "report.txt"));
    if (!f) throw ValidationError("cannot write report.txt");
    f << text.str();
  }
  write_json_file(join(out_dir, "report.json"),
                  json{{"all_passed", all}, {"runs", std::move(jruns)}});
  return all ? 0 : 3;
}

} // namespace amrec
