#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amrec/geometry.hpp"
#include "amrec/init.hpp"
#include "amrec/solver.hpp"
#include "amrec/tensor.hpp"

namespace amrec {

/**
 * Tensor container: raw float64 in native (little-endian) byte order at
 * `path`, plus a JSON sidecar at path + ".json" carrying the shape, a kind
 * tag ("image", "sinogram", ...) and the acquisition geometry.
 */
void save_tensor(const std::string& path, const Tensor& t,
                 const std::string& kind, const Geometry& geom);

struct StoredTensor {
  Tensor values;
  std::string kind;
  Geometry geom;
};
StoredTensor load_tensor(const std::string& path);

// 16-bit binary PGM (P5, maxval 65535, most significant byte first) with
// min-max windowing; a constant image maps to all zeros. The reader exists
// for round-trip checks and returns the raw samples.
void write_pgm(const std::string& path, const Tensor& image);

struct PgmImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint16_t> pixels;
};
PgmImage read_pgm(const std::string& path);

/**
 * Layer-stack container: one single-line JSON header (layer kernel shapes,
 * activation half-widths, final_linear flag, optional role tag) terminated
 * by a newline, followed by every kernel's entries as raw float64 in layer
 * order.
 */
void save_layer_stack(const std::string& path, const LayerStack& stack,
                      const std::string& role = "");

struct StoredStack {
  LayerStack stack;
  std::string role;
};
StoredStack load_layer_stack(const std::string& path);

// Advance maps reuse the same header-plus-payload layout with kind, rate
// and skip metadata; the convolutional kind stores each block's layers
// back to back in the payload.
void save_advance_map(const std::string& path, const ViewAdvanceMap& map);
ViewAdvanceMap load_advance_map(const std::string& path);

// Iteration trace as CSV with the exact header
// k,eps,phi_eps,phi,grad_norm,branch,linesearch_count,reduced
// and round-trip-exact float formatting.
void write_trace_csv(const std::string& path,
                     const std::vector<IterationRecord>& trace);
std::vector<IterationRecord> read_trace_csv(const std::string& path);

} // namespace amrec
