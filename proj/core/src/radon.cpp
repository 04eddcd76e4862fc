#include "amrec/radon.hpp"

#include <cmath>
#include <complex>
#include <vector>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

void require_image(const Geometry& geom, const Tensor& image,
                   const char* op) {
  if (image.rank() != 2 || image.extent(0) != geom.image_size ||
      image.extent(1) != geom.image_size) {
    throw ValidationError(std::string(op) +
                          ": image does not match geometry image_size");
  }
}

void require_sino(const Geometry& geom, const Tensor& sino, const char* op) {
  if (sino.rank() != 2 || sino.extent(0) != geom.n_views ||
      sino.extent(1) != geom.n_detectors) {
    throw ValidationError(std::string(op) +
                          ": sinogram does not match geometry");
  }
}

// One ray's taps, shared verbatim between project (gather) and backproject
// (scatter) so the two stay exact transposes of each other. `Visit` is
// called as visit(pixel_index, weight) for every pixel the ray touches.
template <typename Visit>
inline void trace_ray(std::size_t n, double cos_t, double sin_t, double t,
                      Visit&& visit) {
  const double half = 0.5 * static_cast<double>(n - 1);
  if (std::fabs(cos_t) >= std::fabs(sin_t)) {
    // Dominant axis vertical: visit every row, interpolate between columns.
    const double step = 1.0 / std::fabs(cos_t);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = half - static_cast<double>(r);
      const double x = (t - y * sin_t) / cos_t;
      const double cc = x + half;
      const double fl = std::floor(cc);
      const double frac = cc - fl;
      const long c0 = static_cast<long>(fl);
      if (c0 >= 0 && c0 < static_cast<long>(n)) {
        visit(r * n + static_cast<std::size_t>(c0), (1.0 - frac) * step);
      }
      if (c0 + 1 >= 0 && c0 + 1 < static_cast<long>(n)) {
        visit(r * n + static_cast<std::size_t>(c0 + 1), frac * step);
      }
    }
  } else {
    // Dominant axis horizontal: visit every column, interpolate rows.
    const double step = 1.0 / std::fabs(sin_t);
    for (std::size_t c = 0; c < n; ++c) {
      const double x = static_cast<double>(c) - half;
      const double y = (t - x * cos_t) / sin_t;
      const double rr = half - y;
      const double fl = std::floor(rr);
      const double frac = rr - fl;
      const long r0 = static_cast<long>(fl);
      if (r0 >= 0 && r0 < static_cast<long>(n)) {
        visit(static_cast<std::size_t>(r0) * n + c, (1.0 - frac) * step);
      }
      if (r0 + 1 >= 0 && r0 + 1 < static_cast<long>(n)) {
        visit(static_cast<std::size_t>(r0 + 1) * n + c, frac * step);
      }
    }
  }
}

// In-place iterative radix-2 FFT, power-of-two length. inverse includes
// the 1/N normalization. Plenty for the short ramp-filter transforms here;
// keeping it local avoids an FFT library dependency for one call site.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

} // namespace

double Geometry::view_angle(std::size_t v) const {
  return static_cast<double>(v) * kPi / static_cast<double>(n_views);
}

void validate_geometry(const Geometry& geom) {
  if (geom.image_size == 0 || geom.n_views == 0 || geom.n_detectors == 0) {
    throw ValidationError("Geometry: extents must be positive");
  }
  if (!(geom.detector_spacing > 0.0)) {
    throw ValidationError("Geometry: detector_spacing must be positive");
  }
}

void validate_selector(const Geometry& geom, const ViewSelector& sel) {
  if (sel.rate == 0 || geom.n_views % sel.rate != 0) {
    throw ValidationError("ViewSelector: rate must divide n_views");
  }
  if (sel.offset >= sel.rate) {
    throw ValidationError("ViewSelector: offset must lie in [0, rate)");
  }
}

Tensor project(const Geometry& geom, const Tensor& image) {
  validate_geometry(geom);
  require_image(geom, image, "project");

  Tensor sino({geom.n_views, geom.n_detectors});
  const double* img = image.data();
  for (std::size_t v = 0; v < geom.n_views; ++v) {
    const double theta = geom.view_angle(v);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    for (std::size_t d = 0; d < geom.n_detectors; ++d) {
      const double t = geom.detector_pos(d);
      double acc = 0.0;
      trace_ray(geom.image_size, c, s, t,
                [&](std::size_t pix, double w) { acc += w * img[pix]; });
      sino(v, d) = acc;
    }
  }
  ensure_finite(sino, "project");
  return sino;
}

Tensor backproject(const Geometry& geom, const Tensor& sino) {
  validate_geometry(geom);
  require_sino(geom, sino, "backproject");

  Tensor image({geom.image_size, geom.image_size});
  double* img = image.data();
  for (std::size_t v = 0; v < geom.n_views; ++v) {
    const double theta = geom.view_angle(v);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    for (std::size_t d = 0; d < geom.n_detectors; ++d) {
      const double val = sino(v, d);
      if (val == 0.0) continue;
      trace_ray(geom.image_size, c, s, geom.detector_pos(d),
                [&](std::size_t pix, double w) { img[pix] += w * val; });
    }
  }
  ensure_finite(image, "backproject");
  return image;
}

Tensor fbp(const Geometry& geom, const Tensor& sino, bool hann) {
  validate_geometry(geom);
  require_sino(geom, sino, "fbp");

  const std::size_t dcount = geom.n_detectors;
  const std::size_t npad = next_pow2(std::max<std::size_t>(64, 2 * dcount));

  // Frequency response: |f| in cycles per physical detector unit, with an
  // optional Hann taper toward Nyquist.
  std::vector<double> ramp(npad);
  for (std::size_t k = 0; k < npad; ++k) {
    const double ks = (k <= npad / 2)
                          ? static_cast<double>(k)
                          : static_cast<double>(k) - static_cast<double>(npad);
    double m = std::fabs(ks) /
               (static_cast<double>(npad) * geom.detector_spacing);
    if (hann) {
      m *= 0.5 * (1.0 + std::cos(2.0 * kPi * ks / static_cast<double>(npad)));
    }
    ramp[k] = m;
  }

  Tensor filtered({geom.n_views, dcount});
  std::vector<std::complex<double>> row(npad);
  for (std::size_t v = 0; v < geom.n_views; ++v) {
    for (std::size_t k = 0; k < npad; ++k) {
      row[k] = (k < dcount) ? std::complex<double>(sino(v, k), 0.0)
                            : std::complex<double>(0.0, 0.0);
    }
    fft_pow2(row, false);
    for (std::size_t k = 0; k < npad; ++k) row[k] *= ramp[k];
    fft_pow2(row, true);
    for (std::size_t d = 0; d < dcount; ++d) filtered(v, d) = row[d].real();
  }

  // Pixel-driven backprojection of the filtered rows.
  const std::size_t n = geom.image_size;
  const double half = 0.5 * static_cast<double>(n - 1);
  const double dhalf = 0.5 * static_cast<double>(dcount - 1);
  Tensor image({n, n});
  const double view_scale = kPi / static_cast<double>(geom.n_views);
  for (std::size_t v = 0; v < geom.n_views; ++v) {
    const double theta = geom.view_angle(v);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double* q = filtered.data() + v * dcount;
    for (std::size_t r = 0; r < n; ++r) {
      const double y = half - static_cast<double>(r);
      double* out_row = image.data() + r * n;
      for (std::size_t col = 0; col < n; ++col) {
        const double x = static_cast<double>(col) - half;
        const double t = x * c + y * s;
        const double dd = t / geom.detector_spacing + dhalf;
        const double fl = std::floor(dd);
        const double frac = dd - fl;
        const long d0 = static_cast<long>(fl);
        double val = 0.0;
        if (d0 >= 0 && d0 < static_cast<long>(dcount)) {
          val += (1.0 - frac) * q[d0];
        }
        if (d0 + 1 >= 0 && d0 + 1 < static_cast<long>(dcount)) {
          val += frac * q[d0 + 1];
        }
        out_row[col] += view_scale * val;
      }
    }
  }
  ensure_finite(image, "fbp");
  return image;
}

Tensor select_views(const Geometry& geom, const ViewSelector& sel,
                    const Tensor& full_sino) {
  validate_geometry(geom);
  validate_selector(geom, sel);
  require_sino(geom, full_sino, "select_views");

  const std::size_t rows = sel.selected_count(geom);
  Tensor out({rows, geom.n_detectors});
  for (std::size_t j = 0; j < rows; ++j) {
    const std::size_t src = sel.offset + j * sel.rate;
    for (std::size_t d = 0; d < geom.n_detectors; ++d) {
      out(j, d) = full_sino(src, d);
    }
  }
  return out;
}

Tensor embed_views(const Geometry& geom, const ViewSelector& sel,
                   const Tensor& sparse_sino) {
  validate_geometry(geom);
  validate_selector(geom, sel);
  const std::size_t rows = sel.selected_count(geom);
  if (sparse_sino.rank() != 2 || sparse_sino.extent(0) != rows ||
      sparse_sino.extent(1) != geom.n_detectors) {
    throw ValidationError("embed_views: sub-sinogram shape does not match "
                          "selector");
  }

  Tensor out({geom.n_views, geom.n_detectors});
  for (std::size_t j = 0; j < rows; ++j) {
    const std::size_t dst = sel.offset + j * sel.rate;
    for (std::size_t d = 0; d < geom.n_detectors; ++d) {
      out(dst, d) = sparse_sino(j, d);
    }
  }
  return out;
}

} // namespace amrec
