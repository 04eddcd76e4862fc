#pragma once

#include "amrec/tensor.hpp"

namespace amrec {

double mse(const Tensor& a, const Tensor& b);
double rmse(const Tensor& a, const Tensor& b);

// 10*log10(peak^2 / mse). Identical inputs give +infinity; serializers
// write that as the string "inf".
double psnr(const Tensor& a, const Tensor& b, double peak);

/**
 * Single-scale structural similarity with the standard 11x11 Gaussian
 * window (stddev 1.5) and constants C1 = (0.01*peak)^2, C2 = (0.03*peak)^2,
 * averaged over windows lying fully inside the image. Inputs must be at
 * least 11x11.
 */
double ssim(const Tensor& a, const Tensor& b, double peak);

} // namespace amrec
