#include "amrec/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

void require_comparable(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(where) + ": shapes differ");
  }
  ensure_finite(a, where);
  ensure_finite(b, where);
}

} // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_comparable(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double rmse(const Tensor& a, const Tensor& b) { return std::sqrt(mse(a, b)); }

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!(peak > 0.0)) throw ValidationError("psnr: peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
  require_comparable(a, b, "ssim");
  if (!(peak > 0.0)) throw ValidationError("ssim: peak must be positive");
  if (a.rank() != 2 || a.extent(0) < 11 || a.extent(1) < 11) {
    throw ValidationError("ssim: needs a rank-2 image of at least 11x11");
  }
  const std::size_t h = a.extent(0);
  const std::size_t w = a.extent(1);

  // 11x11 Gaussian window, stddev 1.5, normalized to sum 1.
  double win[11][11];
  double wsum = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      const double dy = i - 5;
      const double dx = j - 5;
      win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      wsum += win[i][j];
    }
  }
  for (auto& row : win) {
    for (double& v : row) v /= wsum;
  }

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + 11 <= h; ++r) {
    for (std::size_t c = 0; c + 11 <= w; ++c) {
      double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int i = 0; i < 11; ++i) {
        const double* pa = a.data() + (r + i) * w + c;
        const double* pb = b.data() + (r + i) * w + c;
        for (int j = 0; j < 11; ++j) {
          const double wv = win[i][j];
          ma += wv * pa[j];
          mb += wv * pb[j];
          saa += wv * pa[j] * pa[j];
          sbb += wv * pb[j] * pb[j];
          sab += wv * pa[j] * pb[j];
        }
      }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double vab = sab - ma * mb;
      const double num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
      const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

} // namespace amrec
