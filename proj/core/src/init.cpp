#include "amrec/init.hpp"

#include <cmath>
#include <sstream>

#include "amrec/errors.hpp"
#include "amrec/radon.hpp"

namespace amrec {

void validate_advance_map(const ViewAdvanceMap& map) {
  if (map.rate == 0) throw ValidationError("ViewAdvanceMap: rate must be >= 1");
  if (map.kind == AdvanceKind::convolutional) {
    if (map.blocks.empty()) {
      throw ValidationError("ViewAdvanceMap: convolutional map needs blocks");
    }
    for (std::size_t b = 0; b < map.blocks.size(); ++b) {
      validate_stack(map.blocks[b], 1);
      if (stack_output_channels(map.blocks[b]) != 1) {
        std::ostringstream os;
        os << "ViewAdvanceMap: block " << b << " must map one channel to one";
        throw ValidationError(os.str());
      }
    }
  }
}

ViewAdvanceMap make_interpolation_advance(std::size_t rate) {
  ViewAdvanceMap map;
  map.kind = AdvanceKind::interpolation;
  map.rate = rate;
  validate_advance_map(map);
  return map;
}

ViewAdvanceMap make_conv_advance(std::size_t rate, std::size_t n_blocks,
                                 std::size_t hidden_channels, std::size_t kh,
                                 std::size_t kw, double weight_scale, Rng& rng,
                                 bool use_skip) {
  if (n_blocks == 0) {
    throw ValidationError("make_conv_advance: need at least one block");
  }
  ViewAdvanceMap map;
  map.kind = AdvanceKind::convolutional;
  map.rate = rate;
  map.use_skip = use_skip;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    LayerStack stack;
    stack.layers.push_back(
        make_conv_layer(gaussian_tensor({hidden_channels, 1, kh, kw}, rng,
                                        weight_scale)));
    stack.layers.push_back(
        make_conv_layer(gaussian_tensor({1, hidden_channels, kh, kw}, rng,
                                        weight_scale)));
    stack.final_linear = true;
    map.blocks.push_back(std::move(stack));
  }
  validate_advance_map(map);
  return map;
}

namespace {

void require_sinogram(const Tensor& s, const char* where) {
  if (s.rank() != 2 || s.extent(0) == 0 || s.extent(1) == 0) {
    throw ValidationError(std::string(where) +
                          ": expected a (views, detectors) tensor");
  }
}

Tensor lift_rows(const Tensor& s) {
  Tensor out({1, s.extent(0), s.extent(1)});
  std::copy(s.data(), s.data() + s.size(), out.data());
  return out;
}

Tensor lower_rows(const Tensor& s3) {
  Tensor out({s3.extent(1), s3.extent(2)});
  std::copy(s3.data(), s3.data() + s3.size(), out.data());
  return out;
}

Tensor conv_advance_forward(const ViewAdvanceMap& map, const Tensor& s) {
  Tensor cur = lift_rows(s);
  for (const LayerStack& block : map.blocks) {
    Tensor out = conv_forward(block, cur);
    if (map.use_skip) axpy(1.0, cur, out);
    cur = std::move(out);
  }
  return lower_rows(cur);
}

// Row at the angle one block past the last: the same ray seen from the
// opposite side, so the first row with the detector axis reversed.
void wrapped_first_row(const Tensor& s, std::vector<double>& row) {
  const std::size_t d_n = s.extent(1);
  row.resize(d_n);
  for (std::size_t d = 0; d < d_n; ++d) {
    row[d] = s(0, d_n - 1 - d);
  }
}

Tensor interpolation_advance(const ViewAdvanceMap& map, const Tensor& s) {
  const std::size_t v_n = s.extent(0);
  const std::size_t d_n = s.extent(1);
  const double w = 1.0 / static_cast<double>(map.rate);
  Tensor out({v_n, d_n});
  for (std::size_t j = 0; j < v_n; ++j) {
    if (j + 1 < v_n) {
      for (std::size_t d = 0; d < d_n; ++d) {
        out(j, d) = (1.0 - w) * s(j, d) + w * s(j + 1, d);
      }
    } else {
      std::vector<double> wrap;
      wrapped_first_row(s, wrap);
      for (std::size_t d = 0; d < d_n; ++d) {
        out(j, d) = (1.0 - w) * s(j, d) + w * wrap[d];
      }
    }
  }
  return out;
}

} // namespace

Tensor advance(const ViewAdvanceMap& map, const Tensor& s) {
  validate_advance_map(map);
  require_sinogram(s, "advance");
  if (map.rate < 2) {
    throw ValidationError("advance: rate 1 means no views are missing; "
                          "there is nothing to advance");
  }
  ensure_finite(s, "advance input");
  if (map.kind == AdvanceKind::interpolation) {
    return interpolation_advance(map, s);
  }
  return conv_advance_forward(map, s);
}

Tensor complete_sinogram(const ViewAdvanceMap& map, const Geometry& geom,
                         const Tensor& s0) {
  validate_advance_map(map);
  validate_geometry(geom);
  require_sinogram(s0, "complete_sinogram");
  const std::size_t p = map.rate;
  if (geom.n_views % p != 0) {
    throw ValidationError("complete_sinogram: rate must divide n_views");
  }
  const std::size_t v_n = geom.n_views / p;
  if (s0.extent(0) != v_n || s0.extent(1) != geom.n_detectors) {
    throw ValidationError("complete_sinogram: s0 must be "
                          "(n_views/rate, n_detectors)");
  }
  if (p == 1) return s0;

  Tensor full({geom.n_views, geom.n_detectors});
  Tensor cur = s0;
  for (std::size_t i = 0; i < p; ++i) {
    if (i > 0) cur = advance(map, cur);
    for (std::size_t j = 0; j < v_n; ++j) {
      for (std::size_t d = 0; d < geom.n_detectors; ++d) {
        full(j * p + i, d) = cur(j, d);
      }
    }
  }
  return full;
}

InitPair init_pair(const ViewAdvanceMap& map, const Geometry& geom,
                   const Tensor& s0) {
  InitPair pair;
  pair.z0 = complete_sinogram(map, geom, s0);
  pair.x0 = fbp(geom, pair.z0);
  return pair;
}

namespace {

struct AdvancePair {
  Tensor input;  // (V, D)
  Tensor target; // (V, D)
};

// Phase decomposition of a full sinogram plus the training pairs it
// yields: consecutive phases, optionally closing the cycle back onto the
// first phase shifted by one block row.
std::vector<AdvancePair> pairs_from_sinogram(const Tensor& full,
                                             std::size_t rate,
                                             bool include_wrap_pair) {
  require_sinogram(full, "advance_loss");
  if (rate < 2) {
    throw ValidationError("advance training: rate must be >= 2");
  }
  if (full.extent(0) % rate != 0) {
    throw ValidationError("advance training: rate must divide the sinogram "
                          "view count");
  }
  const std::size_t v_n = full.extent(0) / rate;
  const std::size_t d_n = full.extent(1);

  std::vector<Tensor> phases(rate, Tensor({v_n, d_n}));
  for (std::size_t i = 0; i < rate; ++i) {
    for (std::size_t j = 0; j < v_n; ++j) {
      for (std::size_t d = 0; d < d_n; ++d) {
        phases[i](j, d) = full(j * rate + i, d);
      }
    }
  }

  std::vector<AdvancePair> pairs;
  for (std::size_t i = 1; i < rate; ++i) {
    pairs.push_back({phases[i - 1], phases[i]});
  }
  if (include_wrap_pair) {
    Tensor target({v_n, d_n});
    for (std::size_t j = 0; j + 1 < v_n; ++j) {
      for (std::size_t d = 0; d < d_n; ++d) {
        target(j, d) = phases[0](j + 1, d);
      }
    }
    std::vector<double> wrap;
    wrapped_first_row(phases[0], wrap);
    for (std::size_t d = 0; d < d_n; ++d) {
      target(v_n - 1, d) = wrap[d];
    }
    pairs.push_back({phases[rate - 1], std::move(target)});
  }
  return pairs;
}

std::vector<AdvancePair> collect_pairs(const std::vector<Tensor>& sinograms,
                                       std::size_t rate,
                                       bool include_wrap_pair) {
  if (sinograms.empty()) {
    throw ValidationError("advance training: empty sinogram set");
  }
  std::vector<AdvancePair> all;
  for (const Tensor& s : sinograms) {
    std::vector<AdvancePair> p = pairs_from_sinogram(s, rate, include_wrap_pair);
    for (AdvancePair& ap : p) all.push_back(std::move(ap));
  }
  return all;
}

double loss_over_pairs(const ViewAdvanceMap& map,
                       const std::vector<AdvancePair>& pairs) {
  double total = 0.0;
  for (const AdvancePair& p : pairs) {
    Tensor pred = advance(map, p.input);
    Tensor diff = sub(pred, p.target);
    total += norm2sq(diff);
  }
  return total / static_cast<double>(pairs.size());
}

} // namespace

double advance_loss(const ViewAdvanceMap& map,
                    const std::vector<Tensor>& sinograms,
                    bool include_wrap_pair) {
  validate_advance_map(map);
  return loss_over_pairs(map,
                         collect_pairs(sinograms, map.rate, include_wrap_pair));
}

std::vector<double> train_advance(ViewAdvanceMap& map,
                                  const std::vector<Tensor>& sinograms,
                                  const TrainSettings& settings) {
  validate_advance_map(map);
  if (map.kind != AdvanceKind::convolutional) {
    throw ValidationError("train_advance: only convolutional maps train");
  }
  if (!(settings.step_size > 0.0)) {
    throw ValidationError("train_advance: step_size must be positive");
  }
  const std::vector<AdvancePair> pairs =
      collect_pairs(sinograms, map.rate, settings.include_wrap_pair);
  const double pair_scale = 1.0 / static_cast<double>(pairs.size());
  const std::size_t n_blocks = map.blocks.size();

  std::vector<double> losses;
  losses.reserve(settings.epochs + 1);
  losses.push_back(loss_over_pairs(map, pairs));

  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    // One full-batch gradient accumulation over all pairs.
    std::vector<std::vector<Tensor>> grads(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      grads[b].reserve(map.blocks[b].layers.size());
      for (const ConvLayer& layer : map.blocks[b].layers) {
        grads[b].push_back(Tensor(layer.kernel.shape()));
      }
    }

    for (const AdvancePair& p : pairs) {
      // Forward, keeping each block's input for the backward sweep.
      std::vector<Tensor> block_inputs;
      block_inputs.reserve(n_blocks);
      Tensor cur = lift_rows(p.input);
      for (const LayerStack& block : map.blocks) {
        block_inputs.push_back(cur);
        Tensor out = conv_forward(block, cur);
        if (map.use_skip) axpy(1.0, cur, out);
        cur = std::move(out);
      }

      Tensor cot = cur;
      axpy(-1.0, lift_rows(p.target), cot);
      scale(2.0 * pair_scale, cot);

      for (std::size_t b = n_blocks; b-- > 0;) {
        StackVjp vjp = conv_vjp(map.blocks[b], block_inputs[b], cot);
        for (std::size_t l = 0; l < vjp.weight_grads.size(); ++l) {
          axpy(1.0, vjp.weight_grads[l], grads[b][l]);
        }
        if (map.use_skip) {
          axpy(1.0, vjp.input_grad, cot);
        } else {
          cot = std::move(vjp.input_grad);
        }
      }
    }

    for (std::size_t b = 0; b < n_blocks; ++b) {
      for (std::size_t l = 0; l < map.blocks[b].layers.size(); ++l) {
        axpy(-settings.step_size, grads[b][l], map.blocks[b].layers[l].kernel);
        ensure_finite(map.blocks[b].layers[l].kernel, "train_advance kernel");
      }
    }
    losses.push_back(loss_over_pairs(map, pairs));
  }
  return losses;
}

} // namespace amrec
