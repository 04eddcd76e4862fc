#include "amrec/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

struct Ellipse {
  double intensity;
  double a, b;       // half axes in [-1, 1] coordinates
  double x0, y0;     // center
  double phi_deg;    // rotation, degrees counterclockwise
};

// Contrast-adjusted Shepp-Logan table (intensities sum into [0, 1]).
const std::vector<Ellipse> kSheppLogan = {
    {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
    {-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
    {-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
    {-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
    {0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
    {0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
    {0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
    {0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
    {0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
    {0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
};

Tensor render_ellipses(std::size_t n, const std::vector<Ellipse>& table) {
  Tensor img({n, n});
  const double inv = 2.0 / static_cast<double>(n);
  for (const Ellipse& e : table) {
    const double phi = e.phi_deg * kPi / 180.0;
    const double cp = std::cos(phi);
    const double sp = std::sin(phi);
    const double inv_a2 = 1.0 / (e.a * e.a);
    const double inv_b2 = 1.0 / (e.b * e.b);
    for (std::size_t r = 0; r < n; ++r) {
      const double y = 1.0 - (static_cast<double>(r) + 0.5) * inv;
      for (std::size_t c = 0; c < n; ++c) {
        const double x = (static_cast<double>(c) + 0.5) * inv - 1.0;
        const double u = x - e.x0;
        const double v = y - e.y0;
        const double ur = u * cp + v * sp;
        const double vr = -u * sp + v * cp;
        if (ur * ur * inv_a2 + vr * vr * inv_b2 <= 1.0) {
          img(r, c) += e.intensity;
        }
      }
    }
  }
  return img;
}

// 5x7 glyphs for the stamp phrase, one string per row, '#' marks a pixel.
const char* const kFontC[7] = {".###.", "#...#", "#....", "#....",
                               "#....", "#...#", ".###."};
const char* const kFontA[7] = {".###.", "#...#", "#...#", "#####",
                               "#...#", "#...#", "#...#"};
const char* const kFontN[7] = {"#...#", "##..#", "#.#.#", "#..##",
                               "#...#", "#...#", "#...#"};
const char* const kFontU[7] = {"#...#", "#...#", "#...#", "#...#",
                               "#...#", "#...#", ".###."};
const char* const kFontS[7] = {".####", "#....", "#....", ".###.",
                               "....#", "....#", "####."};
const char* const kFontE[7] = {"#####", "#....", "#....", "####.",
                               "#....", "#....", "#####"};
const char* const kFontI[7] = {".###.", "..#..", "..#..", "..#..",
                               "..#..", "..#..", ".###."};
const char* const kFontT[7] = {"#####", "..#..", "..#..", "..#..",
                               "..#..", "..#..", "..#.."};

const char* const* glyph(char ch) {
  switch (ch) {
    case 'C': return kFontC;
    case 'A': return kFontA;
    case 'N': return kFontN;
    case 'U': return kFontU;
    case 'S': return kFontS;
    case 'E': return kFontE;
    case 'I': return kFontI;
    case 'T': return kFontT;
    default: return nullptr; // space
  }
}

void stamp_line(Tensor& mask, const std::string& text, std::size_t top,
                std::size_t left, std::size_t scale) {
  const std::size_t n = mask.extent(0);
  for (std::size_t ci = 0; ci < text.size(); ++ci) {
    const char* const* g = glyph(text[ci]);
    if (!g) continue;
    const std::size_t gx = left + ci * 6 * scale;
    for (std::size_t gy = 0; gy < 7; ++gy) {
      for (std::size_t gc = 0; gc < 5; ++gc) {
        if (g[gy][gc] != '#') continue;
        for (std::size_t sy = 0; sy < scale; ++sy) {
          for (std::size_t sx = 0; sx < scale; ++sx) {
            const std::size_t r = top + gy * scale + sy;
            const std::size_t c = gx + gc * scale + sx;
            if (r < n && c < n) mask(r, c) = 1.0;
          }
        }
      }
    }
  }
}

} // namespace

Tensor shepp_logan(std::size_t n) {
  if (n < 16) {
    throw ValidationError("shepp_logan: grid must be at least 16x16");
  }
  Tensor img = render_ellipses(n, kSheppLogan);
  // Ellipse intensities cancel exactly over parts of the head; keep the
  // floating-point noise from dipping below zero there.
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Tensor random_ellipse_phantom(std::size_t n, std::size_t count, Rng& rng) {
  if (n < 16) {
    throw ValidationError("random_ellipse_phantom: grid must be at least "
                          "16x16");
  }
  std::vector<Ellipse> table;
  table.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Ellipse e;
    e.intensity = rng.uniform(0.08, 0.35);
    e.a = rng.uniform(0.08, 0.40);
    e.b = rng.uniform(0.08, 0.40);
    e.x0 = rng.uniform(-0.55, 0.55);
    e.y0 = rng.uniform(-0.55, 0.55);
    e.phi_deg = rng.uniform(0.0, 180.0);
    table.push_back(e);
  }
  Tensor img = render_ellipses(n, table);
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Tensor text_stamp_mask(std::size_t n) {
  if (n < 64) {
    throw ValidationError("text_stamp_mask: grid must be at least 64x64");
  }
  Tensor mask({n, n});
  const std::size_t scale = std::max<std::size_t>(1, n / 64);
  // Two lines, upper-middle of the grid where the phantom has structure.
  const std::size_t top = n / 4;
  const std::size_t left = n / 5;
  stamp_line(mask, "CAN U", top, left, scale);
  stamp_line(mask, "SEE IT", top + 9 * scale, left, scale);
  return mask;
}

} // namespace amrec
