#include "amrec/conv.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "amrec/errors.hpp"

namespace amrec {

namespace {

using idx = std::ptrdiff_t;

void require_kernel(const Tensor& kernel) {
  if (kernel.rank() != 4) {
    throw ValidationError("ConvLayer: kernel must have rank 4 "
                          "(out_channels, in_channels, kh, kw)");
  }
  if (kernel.extent(2) % 2 == 0 || kernel.extent(3) % 2 == 0) {
    throw ValidationError("ConvLayer: kernel extents must be odd for "
                          "same-padding with stride 1");
  }
}

// Loop bounds such that y + dy stays in [0, n) while y stays in [0, n).
inline void tap_range(idx n, idx d, idx& lo, idx& hi) {
  lo = std::max<idx>(0, -d);
  hi = std::min<idx>(n, n - d);
}

// out[oc,y,x] = sum_{ic,ky,kx} K[oc,ic,ky,kx] * in[ic, y+ky-ph, x+kx-pw]
// with zeros outside the grid.
Tensor conv2d(const Tensor& kernel, std::size_t ph, std::size_t pw,
              const Tensor& in) {
  const std::size_t oc_n = kernel.extent(0);
  const std::size_t ic_n = kernel.extent(1);
  const std::size_t kh = kernel.extent(2);
  const std::size_t kw = kernel.extent(3);
  const idx h = static_cast<idx>(in.extent(1));
  const idx w = static_cast<idx>(in.extent(2));

  Tensor out({oc_n, in.extent(1), in.extent(2)});
  for (std::size_t oc = 0; oc < oc_n; ++oc) {
    for (std::size_t ic = 0; ic < ic_n; ++ic) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double kv = kernel(oc, ic, ky, kx);
          if (kv == 0.0) continue;
          const idx dy = static_cast<idx>(ky) - static_cast<idx>(ph);
          const idx dx = static_cast<idx>(kx) - static_cast<idx>(pw);
          idx y0, y1, x0, x1;
          tap_range(h, dy, y0, y1);
          tap_range(w, dx, x0, x1);
          for (idx y = y0; y < y1; ++y) {
            const double* src = in.data() + (static_cast<idx>(ic) * h + y + dy) * w;
            double* dst = out.data() + (static_cast<idx>(oc) * h + y) * w;
            for (idx x = x0; x < x1; ++x) {
              dst[x] += kv * src[x + dx];
            }
          }
        }
      }
    }
  }
  return out;
}

// Exact transpose of conv2d: scatters the cotangent through the same taps.
Tensor conv2d_input_vjp(const Tensor& kernel, std::size_t ph, std::size_t pw,
                        const Tensor& cot, std::size_t in_h,
                        std::size_t in_w) {
  const std::size_t oc_n = kernel.extent(0);
  const std::size_t ic_n = kernel.extent(1);
  const std::size_t kh = kernel.extent(2);
  const std::size_t kw = kernel.extent(3);
  const idx h = static_cast<idx>(in_h);
  const idx w = static_cast<idx>(in_w);

  Tensor grad({ic_n, in_h, in_w});
  for (std::size_t oc = 0; oc < oc_n; ++oc) {
    for (std::size_t ic = 0; ic < ic_n; ++ic) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double kv = kernel(oc, ic, ky, kx);
          if (kv == 0.0) continue;
          const idx dy = static_cast<idx>(ky) - static_cast<idx>(ph);
          const idx dx = static_cast<idx>(kx) - static_cast<idx>(pw);
          idx y0, y1, x0, x1;
          tap_range(h, dy, y0, y1);
          tap_range(w, dx, x0, x1);
          for (idx y = y0; y < y1; ++y) {
            double* dst = grad.data() + (static_cast<idx>(ic) * h + y + dy) * w;
            const double* src = cot.data() + (static_cast<idx>(oc) * h + y) * w;
            for (idx x = x0; x < x1; ++x) {
              dst[x + dx] += kv * src[x];
            }
          }
        }
      }
    }
  }
  return grad;
}

Tensor conv2d_weight_vjp(const Tensor& kernel, std::size_t ph, std::size_t pw,
                         const Tensor& in, const Tensor& cot) {
  const std::size_t oc_n = kernel.extent(0);
  const std::size_t ic_n = kernel.extent(1);
  const std::size_t kh = kernel.extent(2);
  const std::size_t kw = kernel.extent(3);
  const idx h = static_cast<idx>(in.extent(1));
  const idx w = static_cast<idx>(in.extent(2));

  Tensor grad({oc_n, ic_n, kh, kw});
  for (std::size_t oc = 0; oc < oc_n; ++oc) {
    for (std::size_t ic = 0; ic < ic_n; ++ic) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const idx dy = static_cast<idx>(ky) - static_cast<idx>(ph);
          const idx dx = static_cast<idx>(kx) - static_cast<idx>(pw);
          idx y0, y1, x0, x1;
          tap_range(h, dy, y0, y1);
          tap_range(w, dx, x0, x1);
          double s = 0.0;
          for (idx y = y0; y < y1; ++y) {
            const double* src = in.data() + (static_cast<idx>(ic) * h + y + dy) * w;
            const double* c = cot.data() + (static_cast<idx>(oc) * h + y) * w;
            for (idx x = x0; x < x1; ++x) {
              s += c[x] * src[x + dx];
            }
          }
          grad(oc, ic, ky, kx) = s;
        }
      }
    }
  }
  return grad;
}

void require_input(const Tensor& input) {
  if (input.rank() != 3) {
    throw ValidationError("conv_forward: input must have rank 3 "
                          "(channels, rows, cols)");
  }
}

} // namespace

ConvLayer make_conv_layer(Tensor kernel, double delta) {
  require_kernel(kernel);
  if (!(delta > 0.0)) {
    throw ValidationError("ConvLayer: smoothing delta must be positive");
  }
  ConvLayer layer;
  layer.pad_h = (kernel.extent(2) - 1) / 2;
  layer.pad_w = (kernel.extent(3) - 1) / 2;
  layer.kernel = std::move(kernel);
  layer.delta = delta;
  return layer;
}

void validate_stack(const LayerStack& stack, std::size_t in_channels) {
  if (stack.layers.empty()) {
    throw ValidationError("LayerStack: needs at least one layer");
  }
  std::size_t channels = in_channels;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const ConvLayer& layer = stack.layers[l];
    require_kernel(layer.kernel);
    if (!(layer.delta > 0.0)) {
      std::ostringstream os;
      os << "LayerStack: layer " << l << " has non-positive delta";
      throw ValidationError(os.str());
    }
    if (layer.pad_h != (layer.kernel.extent(2) - 1) / 2 ||
        layer.pad_w != (layer.kernel.extent(3) - 1) / 2) {
      std::ostringstream os;
      os << "LayerStack: layer " << l
         << " padding does not preserve spatial extents";
      throw ValidationError(os.str());
    }
    if (layer.kernel.extent(1) != channels) {
      std::ostringstream os;
      os << "LayerStack: layer " << l << " expects "
         << layer.kernel.extent(1) << " input channels, got " << channels;
      throw ValidationError(os.str());
    }
    channels = layer.kernel.extent(0);
  }
}

std::size_t stack_output_channels(const LayerStack& stack) {
  if (stack.layers.empty()) {
    throw ValidationError("LayerStack: needs at least one layer");
  }
  return stack.layers.back().kernel.extent(0);
}

double smoothed_relu(double x, double delta) {
  if (x <= -delta) return 0.0;
  if (x >= delta) return x;
  const double t = x + delta;
  return t * t / (4.0 * delta);
}

double smoothed_relu_deriv(double x, double delta) {
  if (x <= -delta) return 0.0;
  if (x >= delta) return 1.0;
  return (x + delta) / (2.0 * delta);
}

ForwardTrace conv_forward_trace(const LayerStack& stack, const Tensor& input) {
  require_input(input);
  validate_stack(stack, input.extent(0));

  ForwardTrace trace;
  const std::size_t n_layers = stack.layers.size();
  trace.layer_inputs.reserve(n_layers);
  trace.preacts.reserve(n_layers);

  Tensor cur = input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const ConvLayer& layer = stack.layers[l];
    trace.layer_inputs.push_back(std::move(cur));
    Tensor pre = conv2d(layer.kernel, layer.pad_h, layer.pad_w,
                        trace.layer_inputs.back());
    const bool activated = !(l + 1 == n_layers && stack.final_linear);
    cur = pre;
    if (activated) {
      for (double& v : cur.values()) v = smoothed_relu(v, layer.delta);
    }
    trace.preacts.push_back(std::move(pre));
  }
  ensure_finite(cur, "conv_forward");
  trace.output = std::move(cur);
  return trace;
}

Tensor conv_forward(const LayerStack& stack, const Tensor& input) {
  return conv_forward_trace(stack, input).output;
}

namespace {

// Shared backward sweep; either output may be null.
void backward(const LayerStack& stack, const ForwardTrace& trace,
              const Tensor& cotangent, Tensor* input_grad,
              std::vector<Tensor>* weight_grads) {
  const std::size_t n_layers = stack.layers.size();
  if (!cotangent.same_shape(trace.output)) {
    throw ValidationError("conv vjp: cotangent shape does not match "
                          "conv_forward output");
  }
  if (weight_grads) {
    weight_grads->assign(n_layers, Tensor());
  }

  Tensor cot = cotangent;
  for (std::size_t l = n_layers; l-- > 0;) {
    const ConvLayer& layer = stack.layers[l];
    const bool activated = !(l + 1 == n_layers && stack.final_linear);
    if (activated) {
      const Tensor& pre = trace.preacts[l];
      double* pc = cot.data();
      const double* pp = pre.data();
      for (std::size_t i = 0; i < cot.size(); ++i) {
        pc[i] *= smoothed_relu_deriv(pp[i], layer.delta);
      }
    }
    if (weight_grads) {
      (*weight_grads)[l] = conv2d_weight_vjp(layer.kernel, layer.pad_h,
                                             layer.pad_w,
                                             trace.layer_inputs[l], cot);
    }
    if (l > 0 || input_grad != nullptr) {
      cot = conv2d_input_vjp(layer.kernel, layer.pad_h, layer.pad_w, cot,
                             trace.layer_inputs[l].extent(1),
                             trace.layer_inputs[l].extent(2));
    }
  }
  if (input_grad) {
    ensure_finite(cot, "conv_input_vjp");
    *input_grad = std::move(cot);
  }
}

} // namespace

Tensor conv_input_vjp(const LayerStack& stack, const Tensor& input,
                      const Tensor& cotangent) {
  const ForwardTrace trace = conv_forward_trace(stack, input);
  Tensor grad;
  backward(stack, trace, cotangent, &grad, nullptr);
  return grad;
}

std::vector<Tensor> conv_weight_vjp(const LayerStack& stack,
                                    const Tensor& input,
                                    const Tensor& cotangent) {
  const ForwardTrace trace = conv_forward_trace(stack, input);
  std::vector<Tensor> grads;
  backward(stack, trace, cotangent, nullptr, &grads);
  return grads;
}

StackVjp conv_vjp(const LayerStack& stack, const Tensor& input,
                  const Tensor& cotangent) {
  const ForwardTrace trace = conv_forward_trace(stack, input);
  StackVjp result;
  backward(stack, trace, cotangent, &result.input_grad, &result.weight_grads);
  return result;
}

Tensor conv_jvp(const LayerStack& stack, const Tensor& input,
                const Tensor& tangent) {
  if (!tangent.same_shape(input)) {
    throw ValidationError("conv_jvp: tangent shape does not match input");
  }
  const ForwardTrace trace = conv_forward_trace(stack, input);
  const std::size_t n_layers = stack.layers.size();

  Tensor tan = tangent;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const ConvLayer& layer = stack.layers[l];
    Tensor pre_tan = conv2d(layer.kernel, layer.pad_h, layer.pad_w, tan);
    const bool activated = !(l + 1 == n_layers && stack.final_linear);
    if (activated) {
      const double* pp = trace.preacts[l].data();
      double* pt = pre_tan.data();
      for (std::size_t i = 0; i < pre_tan.size(); ++i) {
        pt[i] *= smoothed_relu_deriv(pp[i], layer.delta);
      }
    }
    tan = std::move(pre_tan);
  }
  ensure_finite(tan, "conv_jvp");
  return tan;
}

} // namespace amrec
