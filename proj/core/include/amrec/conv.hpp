#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "amrec/tensor.hpp"

namespace amrec {

/**
 * One convolution layer: kernel (out_channels, in_channels, kh, kw) with
 * stride 1 and zero same-padding, no bias. Spatial kernel extents must be
 * odd so that pad = (k-1)/2 preserves the input extents exactly.
 *
 * `delta` is the half-width of the activation's quadratic band, see
 * smoothed_relu below.
 */
struct ConvLayer {
  Tensor kernel;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  double delta = 1e-3;
};

// Builds a layer from a kernel, deriving the same-padding extents.
// Rejects even kernel extents and delta <= 0.
ConvLayer make_conv_layer(Tensor kernel, double delta = 1e-3);

/**
 * A feature extractor: layers applied in order, each followed by the
 * smoothed ReLU except that the last layer stays linear when final_linear
 * is set (the default; a norm of linear features is the common case for
 * the regularizers built on top of this).
 */
struct LayerStack {
  std::vector<ConvLayer> layers;
  bool final_linear = true;
};

// Validates kernel shapes, padding, channel chaining against the given
// input channel count. Errors name the offending layer index.
void validate_stack(const LayerStack& stack, std::size_t in_channels);

std::size_t stack_output_channels(const LayerStack& stack);

/**
 * C1 ramp used as the activation: 0 for x <= -delta, x for x >= delta,
 * and the quadratic interpolant (x+delta)^2/(4 delta) in between. Monotone,
 * within delta/4 of the plain ReLU everywhere, derivative in [0, 1].
 */
double smoothed_relu(double x, double delta);
double smoothed_relu_deriv(double x, double delta);

/**
 * Applies the stack to a (channels, rows, cols) input. Output spatial
 * extents equal the input's; output channel count is the last layer's.
 */
Tensor conv_forward(const LayerStack& stack, const Tensor& input);

// Forward pass that keeps what the backward passes need: the input fed to
// each layer and each layer's pre-activation map.
struct ForwardTrace {
  std::vector<Tensor> layer_inputs;
  std::vector<Tensor> preacts;
  Tensor output;
};
ForwardTrace conv_forward_trace(const LayerStack& stack, const Tensor& input);

/**
 * Transpose-Jacobian actions of the stack at `input`.
 *
 * conv_input_vjp returns d<conv_forward(y), cotangent>/dy, shaped like the
 * input; conv_weight_vjp returns the per-layer kernel-shaped gradients of
 * the same scalar. conv_vjp computes both in one backward sweep (used by
 * the trainer, which needs weight gradients while chaining through
 * skip connections).
 */
Tensor conv_input_vjp(const LayerStack& stack, const Tensor& input,
                      const Tensor& cotangent);
std::vector<Tensor> conv_weight_vjp(const LayerStack& stack,
                                    const Tensor& input,
                                    const Tensor& cotangent);

struct StackVjp {
  Tensor input_grad;
  std::vector<Tensor> weight_grads;
};
StackVjp conv_vjp(const LayerStack& stack, const Tensor& input,
                  const Tensor& cotangent);

// Directional derivative of conv_forward at `input` along `tangent`
// (tangent shaped like the input, result shaped like the output).
// Exact forward-mode sweep; the curvature estimators are built on it.
Tensor conv_jvp(const LayerStack& stack, const Tensor& input,
                const Tensor& tangent);

} // namespace amrec
