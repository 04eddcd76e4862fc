#include "amrec/regularizer.hpp"

#include <cmath>
#include <stdexcept>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

// Stacks accept (channels, rows, cols); plain images and sinograms come in
// rank-2 and are treated as one channel.
Tensor lift_input(const Tensor& y, std::size_t in_channels) {
  if (y.rank() == 2) {
    if (in_channels != 1) {
      throw ValidationError("regularizer: rank-2 input but extractor expects " +
                            std::to_string(in_channels) + " channels");
    }
    Tensor out({1, y.extent(0), y.extent(1)});
    std::copy(y.data(), y.data() + y.size(), out.data());
    return out;
  }
  if (y.rank() == 3) {
    if (y.extent(0) != in_channels) {
      throw ValidationError("regularizer: input has " +
                            std::to_string(y.extent(0)) +
                            " channels, extractor expects " +
                            std::to_string(in_channels));
    }
    return y;
  }
  throw ValidationError("regularizer: input must be rank 2 or 3");
}

Tensor lower_like(const Tensor& grad3, const Tensor& y) {
  if (y.rank() == 3) return grad3;
  Tensor out({y.extent(0), y.extent(1)});
  std::copy(grad3.data(), grad3.data() + grad3.size(), out.data());
  return out;
}

} // namespace

void validate_regularizer(const Regularizer& reg) {
  validate_stack(reg.stack, reg.in_channels);
}

std::size_t feature_positions(std::size_t rows, std::size_t cols) {
  return rows * cols;
}

std::size_t feature_channels(const Regularizer& reg) {
  return stack_output_channels(reg.stack);
}

FeatureNorms extract_features(const Regularizer& reg, const Tensor& y) {
  FeatureNorms fn;
  fn.features = conv_forward(reg.stack, lift_input(y, reg.in_channels));
  const std::size_t channels = fn.features.extent(0);
  const std::size_t m = fn.features.extent(1) * fn.features.extent(2);
  fn.norms.assign(m, 0.0);
  const double* g = fn.features.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* gc = g + c * m;
    for (std::size_t i = 0; i < m; ++i) fn.norms[i] += gc[i] * gc[i];
  }
  for (std::size_t i = 0; i < m; ++i) fn.norms[i] = std::sqrt(fn.norms[i]);
  return fn;
}

double norm21(const Regularizer& reg, const Tensor& y) {
  return norm21_from(extract_features(reg, y));
}

double norm21_from(const FeatureNorms& fn) {
  double total = 0.0;
  for (double n : fn.norms) total += n;
  return total;
}

double smoothed_from(const FeatureNorms& fn, double eps,
                     SmoothingPartition* partition) {
  if (!(eps > 0.0)) throw ValidationError("smoothed_from: eps must be > 0");
  const std::vector<double>& norms = fn.norms;
  if (partition) {
    partition->epsilon = eps;
    partition->small_ball.assign(norms.size(), 0);
    partition->small_count = 0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const double n = norms[i];
    if (n <= eps) {
      total += n * n / (2.0 * eps);
      if (partition) {
        partition->small_ball[i] = 1;
        ++partition->small_count;
      }
    } else {
      total += n - eps / 2.0;
    }
  }
  return total;
}

double smoothed_value(const Regularizer& reg, const Tensor& y, double eps,
                      SmoothingPartition* partition) {
  if (!(eps > 0.0)) throw ValidationError("smoothed_value: eps must be > 0");
  const FeatureNorms fn = extract_features(reg, y);
  return smoothed_from(fn, eps, partition);
}

Tensor smoothed_grad(const Regularizer& reg, const Tensor& y, double eps) {
  if (!(eps > 0.0)) throw ValidationError("smoothed_grad: eps must be > 0");
  const Tensor input = lift_input(y, reg.in_channels);
  const FeatureNorms fn = extract_features(reg, y);
  const std::size_t channels = fn.features.extent(0);
  const std::size_t m = fn.features.extent(1) * fn.features.extent(2);

  // Cotangent of the huber-like outer function: g_i/eps inside the small
  // ball (including ties, where the two branch formulas agree), g_i/||g_i||
  // outside. Zero feature vectors fall in the small ball and contribute 0.
  Tensor cot(fn.features.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* gc = fn.features.data() + c * m;
    double* oc = cot.data() + c * m;
    for (std::size_t i = 0; i < m; ++i) {
      const double n = fn.norms[i];
      oc[i] = (n <= eps) ? gc[i] / eps : gc[i] / n;
    }
  }
  Tensor grad3 = conv_input_vjp(reg.stack, input, cot);
  ensure_finite(grad3, "smoothed_grad");
  return lower_like(grad3, y);
}

namespace {

Regularizer stencil_pair(std::size_t kh, std::size_t kw, double weight,
                         std::size_t cr, std::size_t cc) {
  // Two output channels: forward difference along columns and along rows,
  // both anchored at the kernel center (cr, cc).
  Tensor k({2, 1, kh, kw});
  k(0, 0, cr, cc) = -weight;
  k(0, 0, cr, cc + 1) = weight;
  k(1, 0, cr, cc) = -weight;
  k(1, 0, cr + 1, cc) = weight;
  Regularizer reg;
  reg.stack.layers.push_back(make_conv_layer(k));
  reg.stack.final_linear = true;
  reg.in_channels = 1;
  return reg;
}

} // namespace

Regularizer make_tv_regularizer(double weight) {
  if (!(weight > 0.0)) throw ValidationError("make_tv_regularizer: weight must be > 0");
  return stencil_pair(3, 3, weight, 1, 1);
}

Regularizer make_sinogram_tv_regularizer(double weight) {
  if (!(weight > 0.0)) {
    throw ValidationError("make_sinogram_tv_regularizer: weight must be > 0");
  }
  // Wider detector-axis support: sinogram rows (views) and columns
  // (detectors) have different natural scales.
  return stencil_pair(3, 7, weight, 1, 3);
}

Regularizer make_identity_regularizer() {
  Tensor k({1, 1, 1, 1});
  k[0] = 1.0;
  Regularizer reg;
  reg.stack.layers.push_back(make_conv_layer(k));
  reg.stack.final_linear = true;
  reg.in_channels = 1;
  return reg;
}

Regularizer make_random_regularizer(std::size_t n_layers,
                                    std::size_t hidden_channels,
                                    std::size_t kh, std::size_t kw,
                                    double weight_scale, Rng& rng,
                                    bool final_linear,
                                    std::size_t in_channels) {
  if (n_layers == 0) throw ValidationError("make_random_regularizer: need >= 1 layer");
  Regularizer reg;
  reg.in_channels = in_channels;
  std::size_t cin = in_channels;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Tensor k = gaussian_tensor({hidden_channels, cin, kh, kw}, rng, weight_scale);
    reg.stack.layers.push_back(make_conv_layer(k));
    cin = hidden_channels;
  }
  reg.stack.final_linear = final_linear;
  validate_regularizer(reg);
  return reg;
}

} // namespace amrec
