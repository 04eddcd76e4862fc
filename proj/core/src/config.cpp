#include "amrec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw ValidationError("config: " + where + ": " + what);
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
}

void reject_unknown(const json& j, const std::string& where,
                    const std::set<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (known.find(it.key()) == known.end()) {
      bad(where, "unknown key \"" + it.key() + "\"");
    }
  }
}

template <typename T>
void assign(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    bad(where, std::string("bad value for \"") + key + "\": " + e.what());
  }
}

void parse_geometry(const json& j, Geometry& g, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where,
                 {"image_size", "n_views", "n_detectors", "detector_spacing"});
  assign(j, "image_size", g.image_size, where);
  assign(j, "n_views", g.n_views, where);
  assign(j, "n_detectors", g.n_detectors, where);
  assign(j, "detector_spacing", g.detector_spacing, where);
}

void parse_selector(const json& j, ViewSelector& s, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"rate", "offset"});
  assign(j, "rate", s.rate, where);
  assign(j, "offset", s.offset, where);
}

void parse_solver(const json& j, SolverParams& p, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where,
                 {"alpha", "beta", "prox_p", "prox_q", "bar_alpha", "bar_beta",
                  "rho", "delta", "eta", "gamma", "sigma", "eps0", "eps_tol",
                  "max_outer_iters", "max_linesearch"});
  assign(j, "alpha", p.alpha, where);
  assign(j, "beta", p.beta, where);
  assign(j, "prox_p", p.prox_p, where);
  assign(j, "prox_q", p.prox_q, where);
  assign(j, "bar_alpha", p.bar_alpha, where);
  assign(j, "bar_beta", p.bar_beta, where);
  assign(j, "rho", p.rho, where);
  assign(j, "delta", p.delta, where);
  assign(j, "eta", p.eta, where);
  assign(j, "gamma", p.gamma, where);
  assign(j, "sigma", p.sigma, where);
  assign(j, "eps0", p.eps0, where);
  assign(j, "eps_tol", p.eps_tol, where);
  assign(j, "max_outer_iters", p.max_outer_iters, where);
  assign(j, "max_linesearch", p.max_linesearch, where);
}

void parse_regularizer(const json& j, RegularizerChoice& r,
                       const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"kind", "weight", "file"});
  assign(j, "kind", r.kind, where);
  assign(j, "weight", r.weight, where);
  assign(j, "file", r.file, where);
  if (r.kind != "tv" && r.kind != "file") {
    bad(where, "kind must be \"tv\" or \"file\"");
  }
  if (r.kind == "file" && r.file.empty()) {
    bad(where, "kind \"file\" needs a file path");
  }
}

void parse_init(const json& j, InitChoice& c, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"mode", "map_file"});
  assign(j, "mode", c.mode, where);
  assign(j, "map_file", c.map_file, where);
  if (c.mode != "zero-fill" && c.mode != "interpolation" &&
      c.mode != "learned") {
    bad(where, "mode must be zero-fill, interpolation, or learned");
  }
  if (c.mode == "learned" && c.map_file.empty()) {
    bad(where, "learned mode needs map_file");
  }
}

void parse_train(const json& j, TrainChoice& t, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where,
                 {"dataset_size", "ellipses", "epochs", "step_size",
                  "include_wrap_pair", "blocks", "hidden_channels", "use_skip",
                  "kernel_h", "kernel_w", "init_scale"});
  assign(j, "dataset_size", t.dataset_size, where);
  assign(j, "ellipses", t.ellipses, where);
  assign(j, "epochs", t.epochs, where);
  assign(j, "step_size", t.step_size, where);
  assign(j, "include_wrap_pair", t.include_wrap_pair, where);
  assign(j, "blocks", t.blocks, where);
  assign(j, "hidden_channels", t.hidden_channels, where);
  assign(j, "use_skip", t.use_skip, where);
  assign(j, "kernel_h", t.kernel_h, where);
  assign(j, "kernel_w", t.kernel_w, where);
  assign(j, "init_scale", t.init_scale, where);
}

void parse_stability(const json& j, StabilityChoice& s,
                     const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"perturbation", "noise_sigma", "stamp_value"});
  assign(j, "perturbation", s.perturbation, where);
  assign(j, "noise_sigma", s.noise_sigma, where);
  assign(j, "stamp_value", s.stamp_value, where);
  if (s.perturbation != "gaussian" && s.perturbation != "text-stamp") {
    bad(where, "perturbation must be gaussian or text-stamp");
  }
}

void parse_phantom(const json& j, PhantomChoice& p, const std::string& where) {
  require_object(j, where);
  reject_unknown(j, where, {"kind", "ellipses"});
  assign(j, "kind", p.kind, where);
  assign(j, "ellipses", p.ellipses, where);
  if (p.kind != "shepp-logan" && p.kind != "random-ellipses") {
    bad(where, "kind must be shepp-logan or random-ellipses");
  }
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("config: malformed JSON");
  require_object(j, "top level");
  reject_unknown(j, "top level",
                 {"geometry", "selector", "solver", "lambda", "reg_image",
                  "reg_sino", "init", "train", "stability", "phantom",
                  "noise_sigma", "seed", "out_dir", "data_dir",
                  "beta_auto_scale"});

  RunConfig cfg;
  if (j.contains("geometry")) parse_geometry(j["geometry"], cfg.geometry, "geometry");
  if (j.contains("selector")) parse_selector(j["selector"], cfg.selector, "selector");
  if (j.contains("solver")) parse_solver(j["solver"], cfg.solver, "solver");
  assign(j, "lambda", cfg.lambda, "top level");
  if (j.contains("reg_image")) parse_regularizer(j["reg_image"], cfg.reg_image, "reg_image");
  if (j.contains("reg_sino")) parse_regularizer(j["reg_sino"], cfg.reg_sino, "reg_sino");
  if (j.contains("init")) parse_init(j["init"], cfg.init, "init");
  if (j.contains("train")) parse_train(j["train"], cfg.train, "train");
  if (j.contains("stability")) parse_stability(j["stability"], cfg.stability, "stability");
  if (j.contains("phantom")) parse_phantom(j["phantom"], cfg.phantom, "phantom");
  assign(j, "noise_sigma", cfg.noise_sigma, "top level");
  assign(j, "seed", cfg.seed, "top level");
  assign(j, "out_dir", cfg.out_dir, "top level");
  assign(j, "data_dir", cfg.data_dir, "top level");
  assign(j, "beta_auto_scale", cfg.beta_auto_scale, "top level");

  validate_config(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config_text(os.str());
}

std::string config_to_json_text(const RunConfig& cfg) {
  json j;
  j["geometry"] = {{"image_size", cfg.geometry.image_size},
                   {"n_views", cfg.geometry.n_views},
                   {"n_detectors", cfg.geometry.n_detectors},
                   {"detector_spacing", cfg.geometry.detector_spacing}};
  j["selector"] = {{"rate", cfg.selector.rate}, {"offset", cfg.selector.offset}};
  j["solver"] = {{"alpha", cfg.solver.alpha},
                 {"beta", cfg.solver.beta},
                 {"prox_p", cfg.solver.prox_p},
                 {"prox_q", cfg.solver.prox_q},
                 {"bar_alpha", cfg.solver.bar_alpha},
                 {"bar_beta", cfg.solver.bar_beta},
                 {"rho", cfg.solver.rho},
                 {"delta", cfg.solver.delta},
                 {"eta", cfg.solver.eta},
                 {"gamma", cfg.solver.gamma},
                 {"sigma", cfg.solver.sigma},
                 {"eps0", cfg.solver.eps0},
                 {"eps_tol", cfg.solver.eps_tol},
                 {"max_outer_iters", cfg.solver.max_outer_iters},
                 {"max_linesearch", cfg.solver.max_linesearch}};
  j["lambda"] = cfg.lambda;
  j["reg_image"] = {{"kind", cfg.reg_image.kind},
                    {"weight", cfg.reg_image.weight},
                    {"file", cfg.reg_image.file}};
  j["reg_sino"] = {{"kind", cfg.reg_sino.kind},
                   {"weight", cfg.reg_sino.weight},
                   {"file", cfg.reg_sino.file}};
  j["init"] = {{"mode", cfg.init.mode}, {"map_file", cfg.init.map_file}};
  j["train"] = {{"dataset_size", cfg.train.dataset_size},
                {"ellipses", cfg.train.ellipses},
                {"epochs", cfg.train.epochs},
                {"step_size", cfg.train.step_size},
                {"include_wrap_pair", cfg.train.include_wrap_pair},
                {"blocks", cfg.train.blocks},
                {"hidden_channels", cfg.train.hidden_channels},
                {"use_skip", cfg.train.use_skip},
                {"kernel_h", cfg.train.kernel_h},
                {"kernel_w", cfg.train.kernel_w},
                {"init_scale", cfg.train.init_scale}};
  j["stability"] = {{"perturbation", cfg.stability.perturbation},
                    {"noise_sigma", cfg.stability.noise_sigma},
                    {"stamp_value", cfg.stability.stamp_value}};
  j["phantom"] = {{"kind", cfg.phantom.kind},
                  {"ellipses", cfg.phantom.ellipses}};
  j["noise_sigma"] = cfg.noise_sigma;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["data_dir"] = cfg.data_dir;
  j["beta_auto_scale"] = cfg.beta_auto_scale;
  return j.dump(2);
}

void validate_config(const RunConfig& cfg) {
  validate_geometry(cfg.geometry);
  validate_selector(cfg.geometry, cfg.selector);
  validate_params(cfg.solver);
  if (!(cfg.lambda >= 0.0)) {
    throw ValidationError("config: lambda must be >= 0");
  }
  if (cfg.reg_image.kind == "tv" && !(cfg.reg_image.weight > 0.0)) {
    throw ValidationError("config: reg_image.weight must be positive");
  }
  if (cfg.reg_sino.kind == "tv" && !(cfg.reg_sino.weight > 0.0)) {
    throw ValidationError("config: reg_sino.weight must be positive");
  }
  if (!(cfg.noise_sigma >= 0.0)) {
    throw ValidationError("config: noise_sigma must be >= 0");
  }
  if (!(cfg.stability.noise_sigma >= 0.0)) {
    throw ValidationError("config: stability.noise_sigma must be >= 0");
  }
  if (!(cfg.beta_auto_scale >= 0.0)) {
    throw ValidationError("config: beta_auto_scale must be >= 0");
  }
  if (cfg.out_dir.empty()) {
    throw ValidationError("config: out_dir must not be empty");
  }
}

} // namespace amrec
