#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "styleswap/layers.hpp"

namespace styleswap {

/// Per-channel affine map applied to [0,1] RGB before the first layer:
/// x' = (x - mean[c]) * scale[c].
struct Preprocess {
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> scale{1.0f, 1.0f, 1.0f};

  friend bool operator==(const Preprocess&, const Preprocess&) = default;
};

/// The feature function: a fixed feedforward stack from RGB images to
/// activation space.
template <typename T>
struct BasicEncoder {
  std::string name;
  Preprocess preprocess;
  std::vector<Layer<T>> layers;

  /// Product of the max-pooling factors.
  std::size_t downsample_factor() const;
  std::size_t output_channels() const;
  Shape output_shape(const Shape& image_shape) const;

  /// Throws ConfigError when the layer channels do not chain from 3.
  void validate() const;

  template <typename U>
  BasicEncoder<U> cast() const {
    BasicEncoder<U> out{name, preprocess, {}};
    for (const auto& l : layers) out.layers.push_back(l.template cast<U>());
    return out;
  }
  friend bool operator==(const BasicEncoder&, const BasicEncoder&) = default;
};

using Encoder = BasicEncoder<float>;

/// Forward state retained for encode_backward.
template <typename T>
struct EncoderTrace {
  std::string encoder_name;
  Shape image_shape;
  StackTrace<T> stack;
};

template <typename T>
struct Encoded {
  BasicTensor<T> activations;
  EncoderTrace<T> trace;
};

template <typename T>
Encoded<T> encode(const BasicTensor<T>& image, const BasicEncoder<T>& encoder);

/// Activations only; no trace is kept.
template <typename T>
BasicTensor<T> encode_activations(const BasicTensor<T>& image, const BasicEncoder<T>& encoder);

/// Gradient of <grad_activations, encode(image)> with respect to the image.
template <typename T>
BasicTensor<T> encode_backward(const EncoderTrace<T>& trace, const BasicEncoder<T>& encoder,
                               const BasicTensor<T>& grad_activations);

/// Conv-ReLU(64) x2, MaxPool, Conv-ReLU(128) x2, MaxPool, Conv-ReLU(256);
/// output is relu3_1. Parameters are randomly initialised; load pretrained
/// weights through the weight-file loader.
Encoder build_truncated_vgg19(std::uint64_t seed = 0);

/// Zero layers; encode(I) == I.
Encoder build_identity();

/// Conv-ReLU(channels) then MaxPool: a desk-scale stand-in for VGG.
Encoder build_tiny(std::size_t channels = 8, std::uint64_t seed = 0);

inline constexpr const char* kVgg19Name = "vgg19-relu3_1";
inline constexpr const char* kIdentityName = "identity";

}  // namespace styleswap
