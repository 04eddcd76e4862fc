#pragma once

#include <cstddef>

namespace amrec {

/**
 * Parallel-beam acquisition geometry.
 *
 * The image is n x n with unit pixel pitch, centered on the rotation axis:
 * pixel (row r, col c) has center (x, y) = (c - (n-1)/2, (n-1)/2 - r).
 * View v looks along angle theta_v = v*pi/n_views; the ray for detector d
 * is the line { (x, y) : x*cos(theta) + y*sin(theta) = t_d } with
 * t_d = (d - (n_detectors-1)/2) * detector_spacing, so the detector array
 * is centered on the axis.
 */
struct Geometry {
  std::size_t image_size = 128;
  std::size_t n_views = 180;
  std::size_t n_detectors = 185;
  double detector_spacing = 1.0;

  double view_angle(std::size_t v) const;
  double detector_pos(std::size_t d) const {
    return (static_cast<double>(d) -
            0.5 * static_cast<double>(n_detectors - 1)) *
           detector_spacing;
  }
};

void validate_geometry(const Geometry& geom);

// Keeps every rate-th view starting at `offset`: indices
// {offset, offset+rate, ...}. rate must divide n_views and offset < rate.
struct ViewSelector {
  std::size_t rate = 1;
  std::size_t offset = 0;

  std::size_t selected_count(const Geometry& geom) const {
    return geom.n_views / rate;
  }
};

void validate_selector(const Geometry& geom, const ViewSelector& sel);

} // namespace amrec
