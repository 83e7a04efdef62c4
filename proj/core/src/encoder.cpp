#include "styleswap/encoder.hpp"

namespace styleswap {

template <typename T>
std::size_t BasicEncoder<T>::downsample_factor() const {
  std::size_t f = 1;
  for (const auto& l : layers) {
    if (l.spec.kind == LayerKind::MaxPool) f *= l.spec.factor;
  }
  return f;
}

template <typename T>
std::size_t BasicEncoder<T>::output_channels() const {
  std::size_t c = 3;
  for (const auto& l : layers) {
    if (l.spec.has_params()) c = l.spec.out_channels;
  }
  return c;
}

template <typename T>
void BasicEncoder<T>::validate() const {
  std::size_t c = 3;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    l.spec.validate();
    if (l.spec.kind == LayerKind::NNUpsample) {
      throw ConfigError("encoder '" + name + "' layer " + std::to_string(i) + " upsamples");
    }
    if (l.spec.has_params()) {
      if (l.spec.in_channels != c) {
        throw ConfigError("encoder '" + name + "' layer " + std::to_string(i) + " expects " +
                          std::to_string(l.spec.in_channels) + " channels, receives " + std::to_string(c));
      }
      check_params(l.spec, l.params);
      c = l.spec.out_channels;
    }
  }
}

template <typename T>
Shape BasicEncoder<T>::output_shape(const Shape& image_shape) const {
  if (image_shape.size() != 3 || image_shape[2] != 3) {
    throw ShapeError("encoder expects an h x w x 3 image, got " + shape_string(image_shape));
  }
  const std::size_t f = downsample_factor();
  if (image_shape[0] < f || image_shape[1] < f) {
    throw ShapeError("image " + shape_string(image_shape) + " is smaller than one output pixel of '" +
                     name + "' (downsample factor " + std::to_string(f) + ")");
  }
  return stack_output_shape<T>(layers, image_shape);
}

namespace {

template <typename T>
BasicTensor<T> apply_preprocess(const BasicTensor<T>& image, const Preprocess& pre) {
  BasicTensor<T> x = image;
  const std::size_t n = image.height() * image.width();
  T* d = x.raw();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      d[i * 3 + c] = (d[i * 3 + c] - static_cast<T>(pre.mean[c])) * static_cast<T>(pre.scale[c]);
    }
  }
  return x;
}

}  // namespace

template <typename T>
Encoded<T> encode(const BasicTensor<T>& image, const BasicEncoder<T>& encoder) {
  encoder.output_shape(image.shape());
  Encoded<T> out;
  out.trace.encoder_name = encoder.name;
  out.trace.image_shape = image.shape();
  out.activations = stack_forward<T>(encoder.layers, apply_preprocess(image, encoder.preprocess),
                                     &out.trace.stack);
  return out;
}

template <typename T>
BasicTensor<T> encode_activations(const BasicTensor<T>& image, const BasicEncoder<T>& encoder) {
  encoder.output_shape(image.shape());
  return stack_forward<T>(encoder.layers, apply_preprocess(image, encoder.preprocess), nullptr);
}

template <typename T>
BasicTensor<T> encode_backward(const EncoderTrace<T>& trace, const BasicEncoder<T>& encoder,
                               const BasicTensor<T>& grad_activations) {
  if (trace.encoder_name != encoder.name || trace.stack.inputs.size() != encoder.layers.size()) {
    throw ShapeError("encode_backward: trace was recorded by encoder '" + trace.encoder_name +
                     "', not '" + encoder.name + "'");
  }
  for (std::size_t i = 0; i < encoder.layers.size(); ++i) {
    const auto& spec = encoder.layers[i].spec;
    if (spec.has_params() && trace.stack.inputs[i].channels() != spec.in_channels) {
      throw ShapeError("encode_backward: stale trace at layer " + std::to_string(i));
    }
  }
  BasicTensor<T> g = stack_backward<T>(encoder.layers, trace.stack, grad_activations, false).grad_input;
  const std::size_t n = g.height() * g.width();
  T* d = g.raw();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) d[i * 3 + c] *= static_cast<T>(encoder.preprocess.scale[c]);
  }
  return g;
}

namespace {

void push_conv_relu(Encoder& e, std::size_t in, std::size_t out, Rng& rng) {
  const LayerSpec conv = LayerSpec::conv(in, out);
  e.layers.push_back({conv, init_params<float>(conv, rng)});
  e.layers.push_back({LayerSpec::relu(), {}});
}

}  // namespace

Encoder build_truncated_vgg19(std::uint64_t seed) {
  Encoder e;
  e.name = kVgg19Name;
  Rng rng(seed);
  push_conv_relu(e, 3, 64, rng);
  push_conv_relu(e, 64, 64, rng);
  e.layers.push_back({LayerSpec::max_pool(2), {}});
  push_conv_relu(e, 64, 128, rng);
  push_conv_relu(e, 128, 128, rng);
  e.layers.push_back({LayerSpec::max_pool(2), {}});
  push_conv_relu(e, 128, 256, rng);
  return e;
}

Encoder build_identity() {
  Encoder e;
  e.name = kIdentityName;
  return e;
}

Encoder build_tiny(std::size_t channels, std::uint64_t seed) {
  if (channels < 1) throw ConfigError("tiny encoder needs at least one channel");
  Encoder e;
  e.name = "tiny" + std::to_string(channels) + "-seed" + std::to_string(seed);
  Rng rng(seed);
  push_conv_relu(e, 3, channels, rng);
  e.layers.push_back({LayerSpec::max_pool(2), {}});
  return e;
}

template struct BasicEncoder<float>;
template struct BasicEncoder<double>;
template Encoded<float> encode<float>(const Tensor&, const BasicEncoder<float>&);
template Encoded<double> encode<double>(const TensorD&, const BasicEncoder<double>&);
template Tensor encode_activations<float>(const Tensor&, const BasicEncoder<float>&);
template TensorD encode_activations<double>(const TensorD&, const BasicEncoder<double>&);
template Tensor encode_backward<float>(const EncoderTrace<float>&, const BasicEncoder<float>&, const Tensor&);
template TensorD encode_backward<double>(const EncoderTrace<double>&, const BasicEncoder<double>&,
                                         const TensorD&);

}  // namespace styleswap
