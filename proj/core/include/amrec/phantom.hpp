#pragma once

#include "amrec/rng.hpp"
#include "amrec/tensor.hpp"

namespace amrec {

// Standard 10-ellipse Shepp-Logan head phantom (the contrast-adjusted
// parameter table common in tomography toolkits) on an n x n grid,
// values in [0, 1]. Requires n >= 16.
Tensor shepp_logan(std::size_t n);

// Sum of `count` random ellipses (seeded), clamped to [0, 1]. Used as a
// procedural stand-in for a training image family.
Tensor random_ellipse_phantom(std::size_t n, std::size_t count, Rng& rng);

// 0/1 mask rendering the fixed test phrase "CAN U / SEE IT" in a 5x7
// bitmap font, scaled to the grid. Used by the perturbation stability
// experiment. Requires n >= 64.
Tensor text_stamp_mask(std::size_t n);

} // namespace amrec
