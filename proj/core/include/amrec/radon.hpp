#pragma once

#include "amrec/geometry.hpp"
#include "amrec/tensor.hpp"

namespace amrec {

/**
 * Discrete Radon transform by Joseph's method: each ray is sampled at unit
 * steps along its dominant axis, the two neighboring pixels along the other
 * axis are linearly interpolated, and the sum is weighted by the path
 * length per step (1/max(|cos|,|sin|)). Linear in the image.
 *
 * backproject is the exact transpose of project (same taps, scattered
 * instead of gathered), which the objective gradients rely on:
 * <project(x), y> == <x, backproject(y)> to rounding.
 */
Tensor project(const Geometry& geom, const Tensor& image);
Tensor backproject(const Geometry& geom, const Tensor& sino);

/**
 * Filtered backprojection: per-view ramp filtering (Ram-Lak) in the
 * frequency domain with zero padding to a power of two, then a
 * pixel-driven backprojection with linear detector interpolation, scaled
 * by pi/n_views. `hann` applies a Hann apodization on top of the ramp;
 * it is meant for visual output only and is off by default.
 */
Tensor fbp(const Geometry& geom, const Tensor& sino, bool hann = false);

// Row selection P and its transpose. select_views keeps rows
// {offset, offset+rate, ...}; embed_views scatters them back into a
// zero-filled full sinogram.
Tensor select_views(const Geometry& geom, const ViewSelector& sel,
                    const Tensor& full_sino);
Tensor embed_views(const Geometry& geom, const ViewSelector& sel,
                   const Tensor& sparse_sino);

} // namespace amrec
