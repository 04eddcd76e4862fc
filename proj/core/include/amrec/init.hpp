#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "amrec/conv.hpp"
#include "amrec/geometry.hpp"
#include "amrec/rng.hpp"
#include "amrec/tensor.hpp"

namespace amrec {

/**
 * View-advance map for sinogram completion. Applied to a sparse sinogram
 * sampled at every rate-th view, it predicts the sinogram rotated forward
 * by one view of the full grid; applying it i times and interleaving the
 * results fills in the missing views.
 */
enum class AdvanceKind { interpolation, convolutional };

struct ViewAdvanceMap {
  AdvanceKind kind = AdvanceKind::interpolation;
  std::size_t rate = 2;
  // Convolutional kind only: residual blocks applied in order. With
  // use_skip each block computes y + block(y), otherwise block(y) alone.
  std::vector<LayerStack> blocks;
  bool use_skip = true;
};

void validate_advance_map(const ViewAdvanceMap& map);

ViewAdvanceMap make_interpolation_advance(std::size_t rate);

// Random-initialized residual blocks, each hidden->1 two-layer stack with
// kernels (kh, kw). Sinogram rows are views, columns detectors, so a wide
// detector extent is the useful default.
ViewAdvanceMap make_conv_advance(std::size_t rate, std::size_t n_blocks,
                                 std::size_t hidden_channels, std::size_t kh,
                                 std::size_t kw, double weight_scale, Rng& rng,
                                 bool use_skip = true);

/**
 * One advance: input (V, D) sampled at view angles {offset + j*rate}, output
 * the same shape at angles one full-grid step later. The interpolation kind
 * blends each row with the next, closing the last row through the
 * opposite-ray identity (angle + pi flips the detector axis). rate 1 leaves
 * nothing to advance and is rejected.
 */
Tensor advance(const ViewAdvanceMap& map, const Tensor& s);

// Interleaves s0 and its advanced copies into a full (V*rate, D) sinogram:
// row j*rate + i comes from the i-times advanced s0. rate 1 returns s0.
Tensor complete_sinogram(const ViewAdvanceMap& map, const Geometry& geom,
                         const Tensor& s0);

// Completed sinogram plus its filtered backprojection: the warm start pair
// for the solver.
struct InitPair {
  Tensor x0;
  Tensor z0;
};
InitPair init_pair(const ViewAdvanceMap& map, const Geometry& geom,
                   const Tensor& s0);

/**
 * Mean squared advance error of `map` over full sinograms: each sinogram
 * is split into its rate phase shifts s_0..s_{rate-1}; pairs (s_{i-1}, s_i)
 * for i < rate are always scored, and with include_wrap_pair the pair
 * closing the cycle (s_{rate-1} advanced onto s_0 shifted one block row,
 * last row through the opposite-ray identity) joins them.
 */
double advance_loss(const ViewAdvanceMap& map,
                    const std::vector<Tensor>& sinograms,
                    bool include_wrap_pair);

struct TrainSettings {
  std::size_t epochs = 200;
  double step_size = 1e-3;
  bool include_wrap_pair = true;
};

// Full-batch gradient descent on advance_loss over the given full
// sinograms. Returns the loss curve: entry 0 before any update, entry t
// after t updates. Requires a convolutional map.
std::vector<double> train_advance(ViewAdvanceMap& map,
                                  const std::vector<Tensor>& sinograms,
                                  const TrainSettings& settings);

} // namespace amrec
