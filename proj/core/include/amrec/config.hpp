#pragma once

#include <cstdint>
#include <string>

#include "amrec/geometry.hpp"
#include "amrec/solver.hpp"

namespace amrec {

/**
 * Configuration for the command-line pipeline, loaded from JSON. Parsing is
 * strict: unknown keys anywhere in the document are rejected so typos fail
 * loudly instead of silently keeping a default.
 */
struct RegularizerChoice {
  std::string kind = "tv"; // "tv" for the built-in stencils, "file" to load
  double weight = 1.0;     // stencil scale for the tv kind
  std::string file;        // layer-stack path for the file kind
};

struct InitChoice {
  // "zero-fill": missing views set to zero before filtering;
  // "interpolation": blended view-advance completion;
  // "learned": convolutional advance map loaded from map_file.
  std::string mode = "interpolation";
  std::string map_file;
};

struct TrainChoice {
  std::size_t dataset_size = 20;
  std::size_t ellipses = 6;
  std::size_t epochs = 200;
  double step_size = 1e-3;
  bool include_wrap_pair = true;
  std::size_t blocks = 1;
  std::size_t hidden_channels = 8;
  bool use_skip = true;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 7;
  double init_scale = 0.01;
};

struct StabilityChoice {
  std::string perturbation = "gaussian"; // or "text-stamp"
  double noise_sigma = 0.03;
  double stamp_value = 1.0;
};

struct PhantomChoice {
  std::string kind = "shepp-logan"; // or "random-ellipses"
  std::size_t ellipses = 6;
};

struct RunConfig {
  Geometry geometry;
  ViewSelector selector;
  SolverParams solver;
  double lambda = 1.0;
  RegularizerChoice reg_image{"tv", 0.05, ""};
  RegularizerChoice reg_sino{"tv", 0.05, ""};
  InitChoice init;
  TrainChoice train;
  StabilityChoice stability;
  PhantomChoice phantom;
  double noise_sigma = 0.0; // measurement noise added by the simulator
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string data_dir; // where simulate wrote its outputs
  // When positive, beta and bar_beta are set to this multiple of the
  // inverse fidelity curvature estimated at startup instead of the raw
  // configured values; the image block's conditioning depends strongly on
  // the geometry, so a relative step is the practical way to configure it.
  double beta_auto_scale = 0.0;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string config_to_json_text(const RunConfig& cfg);

void validate_config(const RunConfig& cfg);

} // namespace amrec
