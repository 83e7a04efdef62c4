#include "styleswap/layers.hpp"

#include <cmath>

namespace styleswap {

namespace {

std::ptrdiff_t as_signed(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

void require_rank3(const Shape& shape, const char* what) {
  if (shape.size() != 3) {
    throw ShapeError(std::string(what) + ": expected rank-3 (h, w, c) input, got " + shape_string(shape));
  }
}

void require_kind(const LayerSpec& spec, LayerKind kind, const char* what) {
  if (spec.kind != kind) {
    throw ConfigError(std::string(what) + ": spec is a " + to_string(spec.kind) + " layer");
  }
}

template <typename T>
void require_channels(const BasicTensor<T>& input, std::size_t expected, const char* what) {
  require_rank3(input.shape(), what);
  if (input.channels() != expected) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(input.channels()) +
                     " channels, layer expects " + std::to_string(expected));
  }
}

template <typename T>
void require_grad_shape(const BasicTensor<T>& grad, const Shape& expected, const char* what) {
  if (grad.shape() != expected) {
    throw ShapeError(std::string(what) + ": grad_output shape " + shape_string(grad.shape()) +
                     " does not match forward output " + shape_string(expected));
  }
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "Conv";
    case LayerKind::TransposedConv: return "TransposedConv";
    case LayerKind::MaxPool: return "MaxPool";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::InstanceNorm: return "InstanceNorm";
    case LayerKind::NNUpsample: return "NNUpsample";
  }
  return "Unknown";
}

LayerSpec LayerSpec::conv(std::size_t in, std::size_t out, std::size_t filter, std::size_t stride,
                          std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.in_channels = in;
  s.out_channels = out;
  s.filter = filter;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::transposed_conv(std::size_t in, std::size_t out, std::size_t filter,
                                     std::size_t stride, std::size_t padding) {
  LayerSpec s = conv(in, out, filter, stride, padding);
  s.kind = LayerKind::TransposedConv;
  return s;
}

LayerSpec LayerSpec::max_pool(std::size_t factor) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::instance_norm() {
  LayerSpec s;
  s.kind = LayerKind::InstanceNorm;
  return s;
}

LayerSpec LayerSpec::nn_upsample(std::size_t factor) {
  LayerSpec s;
  s.kind = LayerKind::NNUpsample;
  s.factor = factor;
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::Conv:
    case LayerKind::TransposedConv:
      if (filter < 1 || stride < 1 || in_channels < 1 || out_channels < 1) {
        throw ConfigError(to_string(kind) + " layer needs filter, stride and channel counts >= 1");
      }
      break;
    case LayerKind::MaxPool:
    case LayerKind::NNUpsample:
      if (factor < 1) throw ConfigError(to_string(kind) + " layer needs factor >= 1");
      break;
    case LayerKind::ReLU:
    case LayerKind::InstanceNorm:
      break;
    default:
      throw ConfigError("unknown layer kind");
  }
}

Shape LayerSpec::output_shape(const Shape& input) const {
  validate();
  require_rank3(input, "output_shape");
  const std::size_t h = input[0], w = input[1], c = input[2];
  switch (kind) {
    case LayerKind::Conv: {
      if (c != in_channels) {
        throw ShapeError("Conv: input has " + std::to_string(c) + " channels, layer expects " +
                         std::to_string(in_channels));
      }
      if (h + 2 * padding < filter || w + 2 * padding < filter) {
        throw ShapeError("Conv: filter " + std::to_string(filter) + " larger than padded input " +
                         shape_string(input));
      }
      return {(h + 2 * padding - filter) / stride + 1, (w + 2 * padding - filter) / stride + 1,
              out_channels};
    }
    case LayerKind::TransposedConv: {
      if (c != in_channels) {
        throw ShapeError("TransposedConv: input has " + std::to_string(c) +
                         " channels, layer expects " + std::to_string(in_channels));
      }
      const std::size_t fh = (h - 1) * stride + filter, fw = (w - 1) * stride + filter;
      if (fh <= 2 * padding || fw <= 2 * padding) {
        throw ShapeError("TransposedConv: padding consumes the whole output");
      }
      return {fh - 2 * padding, fw - 2 * padding, out_channels};
    }
    case LayerKind::MaxPool:
      if (h < factor || w < factor) {
        throw ShapeError("MaxPool: input " + shape_string(input) + " smaller than one window");
      }
      return {h / factor, w / factor, c};
    case LayerKind::NNUpsample:
      return {h * factor, w * factor, c};
    case LayerKind::InstanceNorm:
      if (h * w < 2) throw ShapeError("InstanceNorm: needs at least 2 spatial cells per channel");
      return input;
    case LayerKind::ReLU:
      return input;
  }
  return input;
}

template <typename T>
void check_params(const LayerSpec& spec, const LayerParams<T>& params) {
  if (!spec.has_params()) {
    if (!params.weights.empty() || !params.bias.empty()) {
      throw ShapeError(to_string(spec.kind) + " layer carries unexpected parameters");
    }
    return;
  }
  if (params.weights.shape() != spec.weight_shape()) {
    throw ShapeError(to_string(spec.kind) + " weights " + shape_string(params.weights.shape()) +
                     ", expected " + shape_string(spec.weight_shape()));
  }
  if (params.bias.shape() != spec.bias_shape()) {
    throw ShapeError(to_string(spec.kind) + " bias " + shape_string(params.bias.shape()) + ", expected " +
                     shape_string(spec.bias_shape()));
  }
}

template <typename T>
LayerParams<T> init_params(const LayerSpec& spec, Rng& rng) {
  spec.validate();
  if (!spec.has_params()) return {};
  const double fan_in = static_cast<double>(spec.filter * spec.filter * spec.in_channels);
  const T bound = static_cast<T>(std::sqrt(6.0 / fan_in));
  LayerParams<T> p;
  p.weights = random_uniform<T>(spec.weight_shape(), -bound, bound, rng);
  p.bias = BasicTensor<T>::zeros(spec.bias_shape());
  return p;
}

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const LayerSpec& spec,
                              const LayerParams<T>& params) {
  require_kind(spec, LayerKind::Conv, "conv2d_forward");
  require_channels(input, spec.in_channels, "conv2d_forward");
  check_params(spec, params);
  const Shape out_shape = spec.output_shape(input.shape());
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = out_shape[0], ow = out_shape[1];
  const std::size_t ci = spec.in_channels, co = spec.out_channels, f = spec.filter;
  const auto s = as_signed(spec.stride), p = as_signed(spec.padding);

  BasicTensor<T> out(out_shape);
  const T* in = input.raw();
  const T* wt = params.weights.raw();
  const T* bias = params.bias.raw();
  T* o = out.raw();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      T* opx = o + (oy * ow + ox) * co;
      for (std::size_t k = 0; k < co; ++k) opx[k] = bias[k];
      for (std::size_t ky = 0; ky < f; ++ky) {
        const std::ptrdiff_t iy = as_signed(oy) * s - p + as_signed(ky);
        if (iy < 0 || iy >= as_signed(h)) continue;
        for (std::size_t kx = 0; kx < f; ++kx) {
          const std::ptrdiff_t ix = as_signed(ox) * s - p + as_signed(kx);
          if (ix < 0 || ix >= as_signed(w)) continue;
          const T* ipx = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
          const T* wk = wt + (ky * f + kx) * ci * co;
          for (std::size_t c = 0; c < ci; ++c) {
            const T v = ipx[c];
            const T* wr = wk + c * co;
            for (std::size_t k = 0; k < co; ++k) opx[k] += v * wr[k];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
LayerGrad<T> conv2d_backward(const BasicTensor<T>& input, const LayerSpec& spec,
                             const LayerParams<T>& params, const BasicTensor<T>& grad_output,
                             bool param_grads) {
  require_kind(spec, LayerKind::Conv, "conv2d_backward");
  require_channels(input, spec.in_channels, "conv2d_backward");
  check_params(spec, params);
  const Shape out_shape = spec.output_shape(input.shape());
  require_grad_shape(grad_output, out_shape, "conv2d_backward");
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = out_shape[0], ow = out_shape[1];
  const std::size_t ci = spec.in_channels, co = spec.out_channels, f = spec.filter;
  const auto s = as_signed(spec.stride), p = as_signed(spec.padding);

  LayerGrad<T> g;
  g.grad_input = BasicTensor<T>::zeros(input.shape());
  if (param_grads) {
    g.grad_weights = BasicTensor<T>::zeros(spec.weight_shape());
    g.grad_bias = BasicTensor<T>::zeros(spec.bias_shape());
  }
  const T* in = input.raw();
  const T* wt = params.weights.raw();
  const T* go = grad_output.raw();
  T* gi = g.grad_input.raw();
  T* gw = param_grads ? g.grad_weights.raw() : nullptr;
  T* gb = param_grads ? g.grad_bias.raw() : nullptr;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const T* gpx = go + (oy * ow + ox) * co;
      if (param_grads) {
        for (std::size_t k = 0; k < co; ++k) gb[k] += gpx[k];
      }
      for (std::size_t ky = 0; ky < f; ++ky) {
        const std::ptrdiff_t iy = as_signed(oy) * s - p + as_signed(ky);
        if (iy < 0 || iy >= as_signed(h)) continue;
        for (std::size_t kx = 0; kx < f; ++kx) {
          const std::ptrdiff_t ix = as_signed(ox) * s - p + as_signed(kx);
          if (ix < 0 || ix >= as_signed(w)) continue;
          const std::size_t off = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * ci;
          const T* ipx = in + off;
          T* gipx = gi + off;
          const std::size_t woff = (ky * f + kx) * ci * co;
          for (std::size_t c = 0; c < ci; ++c) {
            const T* wr = wt + woff + c * co;
            T acc = 0;
            for (std::size_t k = 0; k < co; ++k) acc += gpx[k] * wr[k];
            gipx[c] += acc;
            if (param_grads) {
              const T v = ipx[c];
              T* gwr = gw + woff + c * co;
              for (std::size_t k = 0; k < co; ++k) gwr[k] += v * gpx[k];
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>& input, const LayerSpec& spec,
                                         const LayerParams<T>& params) {
  require_kind(spec, LayerKind::TransposedConv, "transposed_conv2d_forward");
  require_channels(input, spec.in_channels, "transposed_conv2d_forward");
  check_params(spec, params);
  const Shape out_shape = spec.output_shape(input.shape());
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = out_shape[0], ow = out_shape[1];
  const std::size_t ci = spec.in_channels, co = spec.out_channels, f = spec.filter;
  const auto s = as_signed(spec.stride), p = as_signed(spec.padding);

  BasicTensor<T> out(out_shape);
  T* o = out.raw();
  const T* bias = params.bias.raw();
  for (std::size_t i = 0; i < oh * ow; ++i) {
    for (std::size_t k = 0; k < co; ++k) o[i * co + k] = bias[k];
  }
  const T* in = input.raw();
  const T* wt = params.weights.raw();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* ipx = in + (y * w + x) * ci;
      for (std::size_t c = 0; c < ci; ++c) {
        const T v = ipx[c];
        if (v == T(0)) continue;
        for (std::size_t ky = 0; ky < f; ++ky) {
          const std::ptrdiff_t oy = as_signed(y) * s - p + as_signed(ky);
          if (oy < 0 || oy >= as_signed(oh)) continue;
          for (std::size_t kx = 0; kx < f; ++kx) {
            const std::ptrdiff_t ox = as_signed(x) * s - p + as_signed(kx);
            if (ox < 0 || ox >= as_signed(ow)) continue;
            T* opx = o + (static_cast<std::size_t>(oy) * ow + static_cast<std::size_t>(ox)) * co;
            const T* wr = wt + ((ky * f + kx) * ci + c) * co;
            for (std::size_t k = 0; k < co; ++k) opx[k] += v * wr[k];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
LayerGrad<T> transposed_conv2d_backward(const BasicTensor<T>& input, const LayerSpec& spec,
                                        const LayerParams<T>& params, const BasicTensor<T>& grad_output,
                                        bool param_grads) {
  require_kind(spec, LayerKind::TransposedConv, "transposed_conv2d_backward");
  require_channels(input, spec.in_channels, "transposed_conv2d_backward");
  check_params(spec, params);
  const Shape out_shape = spec.output_shape(input.shape());
  require_grad_shape(grad_output, out_shape, "transposed_conv2d_backward");
  const std::size_t h = input.height(), w = input.width();
  const std::size_t oh = out_shape[0], ow = out_shape[1];
  const std::size_t ci = spec.in_channels, co = spec.out_channels, f = spec.filter;
  const auto s = as_signed(spec.stride), p = as_signed(spec.padding);

  LayerGrad<T> g;
  g.grad_input = BasicTensor<T>::zeros(input.shape());
  if (param_grads) {
    g.grad_weights = BasicTensor<T>::zeros(spec.weight_shape());
    g.grad_bias = BasicTensor<T>::zeros(spec.bias_shape());
    T* gb = g.grad_bias.raw();
    const T* go = grad_output.raw();
    for (std::size_t i = 0; i < oh * ow; ++i) {
      for (std::size_t k = 0; k < co; ++k) gb[k] += go[i * co + k];
    }
  }
  const T* in = input.raw();
  const T* wt = params.weights.raw();
  const T* go = grad_output.raw();
  T* gi = g.grad_input.raw();
  T* gw = param_grads ? g.grad_weights.raw() : nullptr;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* ipx = in + (y * w + x) * ci;
      T* gipx = gi + (y * w + x) * ci;
      for (std::size_t ky = 0; ky < f; ++ky) {
        const std::ptrdiff_t oy = as_signed(y) * s - p + as_signed(ky);
        if (oy < 0 || oy >= as_signed(oh)) continue;
        for (std::size_t kx = 0; kx < f; ++kx) {
          const std::ptrdiff_t ox = as_signed(x) * s - p + as_signed(kx);
          if (ox < 0 || ox >= as_signed(ow)) continue;
          const T* gpx = go + (static_cast<std::size_t>(oy) * ow + static_cast<std::size_t>(ox)) * co;
          for (std::size_t c = 0; c < ci; ++c) {
            const std::size_t woff = ((ky * f + kx) * ci + c) * co;
            const T* wr = wt + woff;
            T acc = 0;
            for (std::size_t k = 0; k < co; ++k) acc += gpx[k] * wr[k];
            gipx[c] += acc;
            if (param_grads) {
              const T v = ipx[c];
              T* gwr = gw + woff;
              for (std::size_t k = 0; k < co; ++k) gwr[k] += v * gpx[k];
            }
          }
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Pooling, activation, normalisation, upsampling

template <typename T>
BasicTensor<T> maxpool_forward(const BasicTensor<T>& input, std::size_t factor) {
  const Shape out_shape = LayerSpec::max_pool(factor).output_shape(input.shape());
  const std::size_t oh = out_shape[0], ow = out_shape[1], c = input.channels();
  BasicTensor<T> out(out_shape);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t k = 0; k < c; ++k) {
        T best = input.at(oy * factor, ox * factor, k);
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            best = std::max(best, input.at(oy * factor + dy, ox * factor + dx, k));
          }
        }
        out.at(oy, ox, k) = best;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& input, std::size_t factor,
                                const BasicTensor<T>& grad_output) {
  const Shape out_shape = LayerSpec::max_pool(factor).output_shape(input.shape());
  require_grad_shape(grad_output, out_shape, "maxpool_backward");
  const std::size_t oh = out_shape[0], ow = out_shape[1], c = input.channels();
  BasicTensor<T> gi = BasicTensor<T>::zeros(input.shape());
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t k = 0; k < c; ++k) {
        std::size_t by = oy * factor, bx = ox * factor;
        T best = input.at(by, bx, k);
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            const T v = input.at(oy * factor + dy, ox * factor + dx, k);
            if (v > best) {
              best = v;
              by = oy * factor + dy;
              bx = ox * factor + dx;
            }
          }
        }
        gi.at(by, bx, k) += grad_output.at(oy, ox, k);
      }
    }
  }
  return gi;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  require_same_shape(input, grad_output, "relu_backward");
  BasicTensor<T> gi = grad_output;
  for (std::size_t i = 0; i < gi.size(); ++i) {
    if (!(input[i] > T(0))) gi[i] = T(0);
  }
  return gi;
}

namespace {

template <typename T>
void channel_stats(const BasicTensor<T>& input, double eps, std::vector<double>& mu,
                   std::vector<double>& inv_sigma) {
  require_rank3(input.shape(), "instance_norm");
  const std::size_t n = input.height() * input.width(), c = input.channels();
  if (n < 2) throw ShapeError("InstanceNorm: needs at least 2 spatial cells per channel");
  mu.assign(c, 0.0);
  inv_sigma.assign(c, 0.0);
  const T* x = input.raw();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) mu[k] += static_cast<double>(x[i * c + k]);
  }
  for (auto& m : mu) m /= static_cast<double>(n);
  std::vector<double> var(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double d = static_cast<double>(x[i * c + k]) - mu[k];
      var[k] += d * d;
    }
  }
  for (std::size_t k = 0; k < c; ++k) inv_sigma[k] = 1.0 / std::sqrt(var[k] / static_cast<double>(n) + eps);
}

}  // namespace

template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& input, double eps) {
  std::vector<double> mu, inv_sigma;
  channel_stats(input, eps, mu, inv_sigma);
  const std::size_t n = input.height() * input.width(), c = input.channels();
  BasicTensor<T> out(input.shape());
  const T* x = input.raw();
  T* y = out.raw();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      y[i * c + k] = static_cast<T>((static_cast<double>(x[i * c + k]) - mu[k]) * inv_sigma[k]);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> instance_norm_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output,
                                      double eps) {
  require_same_shape(input, grad_output, "instance_norm_backward");
  std::vector<double> mu, inv_sigma;
  channel_stats(input, eps, mu, inv_sigma);
  const std::size_t n = input.height() * input.width(), c = input.channels();
  const T* x = input.raw();
  const T* g = grad_output.raw();
  // dx = (g - mean(g) - y * mean(g * y)) / sigma
  std::vector<double> mean_g(c, 0.0), mean_gy(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double y = (static_cast<double>(x[i * c + k]) - mu[k]) * inv_sigma[k];
      mean_g[k] += static_cast<double>(g[i * c + k]);
      mean_gy[k] += static_cast<double>(g[i * c + k]) * y;
    }
  }
  for (std::size_t k = 0; k < c; ++k) {
    mean_g[k] /= static_cast<double>(n);
    mean_gy[k] /= static_cast<double>(n);
  }
  BasicTensor<T> gi(input.shape());
  T* d = gi.raw();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const double y = (static_cast<double>(x[i * c + k]) - mu[k]) * inv_sigma[k];
      d[i * c + k] = static_cast<T>((static_cast<double>(g[i * c + k]) - mean_g[k] - y * mean_gy[k]) *
                                    inv_sigma[k]);
    }
  }
  return gi;
}

template <typename T>
BasicTensor<T> nn_upsample_forward(const BasicTensor<T>& input, std::size_t factor) {
  const Shape out_shape = LayerSpec::nn_upsample(factor).output_shape(input.shape());
  const std::size_t c = input.channels();
  BasicTensor<T> out(out_shape);
  for (std::size_t y = 0; y < out_shape[0]; ++y) {
    for (std::size_t x = 0; x < out_shape[1]; ++x) {
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = input.at(y / factor, x / factor, k);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> nn_upsample_backward(const BasicTensor<T>& grad_output, std::size_t factor) {
  require_rank3(grad_output.shape(), "nn_upsample_backward");
  if (factor < 1 || grad_output.height() % factor || grad_output.width() % factor) {
    throw ShapeError("nn_upsample_backward: grad extents not divisible by factor");
  }
  const std::size_t c = grad_output.channels();
  BasicTensor<T> gi = BasicTensor<T>::zeros(
      {grad_output.height() / factor, grad_output.width() / factor, c});
  for (std::size_t y = 0; y < grad_output.height(); ++y) {
    for (std::size_t x = 0; x < grad_output.width(); ++x) {
      for (std::size_t k = 0; k < c; ++k) gi.at(y / factor, x / factor, k) += grad_output.at(y, x, k);
    }
  }
  return gi;
}

// ---------------------------------------------------------------------------
// Dispatch

template <typename T>
BasicTensor<T> layer_forward(const Layer<T>& layer, const BasicTensor<T>& input) {
  const LayerSpec& s = layer.spec;
  switch (s.kind) {
    case LayerKind::Conv: return conv2d_forward(input, s, layer.params);
    case LayerKind::TransposedConv: return transposed_conv2d_forward(input, s, layer.params);
    case LayerKind::MaxPool: return maxpool_forward(input, s.factor);
    case LayerKind::ReLU: return relu_forward(input);
    case LayerKind::InstanceNorm: return instance_norm_forward(input);
    case LayerKind::NNUpsample: return nn_upsample_forward(input, s.factor);
  }
  throw ConfigError("unknown layer kind");
}

template <typename T>
LayerGrad<T> layer_backward(const Layer<T>& layer, const BasicTensor<T>& input,
                            const BasicTensor<T>& grad_output, bool param_grads) {
  const LayerSpec& s = layer.spec;
  switch (s.kind) {
    case LayerKind::Conv: return conv2d_backward(input, s, layer.params, grad_output, param_grads);
    case LayerKind::TransposedConv:
      return transposed_conv2d_backward(input, s, layer.params, grad_output, param_grads);
    case LayerKind::MaxPool: return {maxpool_backward(input, s.factor, grad_output), {}, {}};
    case LayerKind::ReLU: return {relu_backward(input, grad_output), {}, {}};
    case LayerKind::InstanceNorm: return {instance_norm_backward(input, grad_output), {}, {}};
    case LayerKind::NNUpsample: {
      require_grad_shape(grad_output, s.output_shape(input.shape()), "nn_upsample_backward");
      return {nn_upsample_backward(grad_output, s.factor), {}, {}};
    }
  }
  throw ConfigError("unknown layer kind");
}

template <typename T>
BasicTensor<T> stack_forward(std::span<const Layer<T>> layers, const BasicTensor<T>& input,
                             StackTrace<T>* trace) {
  if (trace) {
    trace->inputs.clear();
    trace->inputs.reserve(layers.size());
  }
  BasicTensor<T> x = input;
  for (const auto& layer : layers) {
    BasicTensor<T> y = layer_forward(layer, x);
    if (trace) trace->inputs.push_back(std::move(x));
    x = std::move(y);
  }
  if (trace) trace->output_shape = x.shape();
  return x;
}

template <typename T>
StackGrad<T> stack_backward(std::span<const Layer<T>> layers, const StackTrace<T>& trace,
                            const BasicTensor<T>& grad_output, bool param_grads) {
  if (trace.inputs.size() != layers.size()) {
    throw ShapeError("stack_backward: trace has " + std::to_string(trace.inputs.size()) +
                     " entries for " + std::to_string(layers.size()) + " layers");
  }
  require_grad_shape(grad_output, trace.output_shape, "stack_backward");
  StackGrad<T> out;
  out.param_grads.resize(layers.size());
  BasicTensor<T> g = grad_output;
  for (std::size_t i = layers.size(); i-- > 0;) {
    LayerGrad<T> lg = layer_backward(layers[i], trace.inputs[i], g, param_grads);
    if (param_grads) {
      out.param_grads[i].weights = std::move(lg.grad_weights);
      out.param_grads[i].bias = std::move(lg.grad_bias);
    }
    g = std::move(lg.grad_input);
  }
  out.grad_input = std::move(g);
  return out;
}

template <typename T>
Shape stack_output_shape(std::span<const Layer<T>> layers, Shape input) {
  for (const auto& layer : layers) input = layer.spec.output_shape(input);
  return input;
}

#define STYLESWAP_INSTANTIATE_LAYERS(T)                                                                   \
  template void check_params<T>(const LayerSpec&, const LayerParams<T>&);                                \
  template LayerParams<T> init_params<T>(const LayerSpec&, Rng&);                                         \
  template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const LayerSpec&, const LayerParams<T>&); \
  template LayerGrad<T> conv2d_backward<T>(const BasicTensor<T>&, const LayerSpec&, const LayerParams<T>&,  \
                                           const BasicTensor<T>&, bool);                                  \
  template BasicTensor<T> transposed_conv2d_forward<T>(const BasicTensor<T>&, const LayerSpec&,           \
                                                       const LayerParams<T>&);                            \
  template LayerGrad<T> transposed_conv2d_backward<T>(const BasicTensor<T>&, const LayerSpec&,            \
                                                      const LayerParams<T>&, const BasicTensor<T>&, bool); \
  template BasicTensor<T> maxpool_forward<T>(const BasicTensor<T>&, std::size_t);                         \
  template BasicTensor<T> maxpool_backward<T>(const BasicTensor<T>&, std::size_t, const BasicTensor<T>&); \
  template BasicTensor<T> relu_forward<T>(const BasicTensor<T>&);                                         \
  template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> instance_norm_forward<T>(const BasicTensor<T>&, double);                        \
  template BasicTensor<T> instance_norm_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&, double); \
  template BasicTensor<T> nn_upsample_forward<T>(const BasicTensor<T>&, std::size_t);                     \
  template BasicTensor<T> nn_upsample_backward<T>(const BasicTensor<T>&, std::size_t);                    \
  template BasicTensor<T> layer_forward<T>(const Layer<T>&, const BasicTensor<T>&);                       \
  template LayerGrad<T> layer_backward<T>(const Layer<T>&, const BasicTensor<T>&, const BasicTensor<T>&, bool); \
  template BasicTensor<T> stack_forward<T>(std::span<const Layer<T>>, const BasicTensor<T>&, StackTrace<T>*); \
  template StackGrad<T> stack_backward<T>(std::span<const Layer<T>>, const StackTrace<T>&,               \
                                          const BasicTensor<T>&, bool);                                   \
  template Shape stack_output_shape<T>(std::span<const Layer<T>>, Shape);

STYLESWAP_INSTANTIATE_LAYERS(float)
STYLESWAP_INSTANTIATE_LAYERS(double)

}  // namespace styleswap
