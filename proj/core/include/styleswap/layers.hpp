#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "styleswap/tensor.hpp"

namespace styleswap {

enum class LayerKind : std::uint8_t {
  Conv = 0,
  TransposedConv = 1,
  MaxPool = 2,
  ReLU = 3,
  InstanceNorm = 4,
  NNUpsample = 5,
};

std::string to_string(LayerKind kind);

inline constexpr double kInstanceNormEpsilon = 1e-5;

/// Declarative description of one layer. Conv/TransposedConv use the filter
/// fields; MaxPool/NNUpsample use `factor`; ReLU and InstanceNorm use none.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t filter = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t factor = 0;

  static LayerSpec conv(std::size_t in, std::size_t out, std::size_t filter = 3, std::size_t stride = 1,
                        std::size_t padding = 1);
  static LayerSpec transposed_conv(std::size_t in, std::size_t out, std::size_t filter = 3,
                                   std::size_t stride = 1, std::size_t padding = 1);
  static LayerSpec max_pool(std::size_t factor = 2);
  static LayerSpec relu();
  static LayerSpec instance_norm();
  static LayerSpec nn_upsample(std::size_t factor = 2);

  bool has_params() const noexcept {
    return kind == LayerKind::Conv || kind == LayerKind::TransposedConv;
  }
  Shape weight_shape() const { return {filter, filter, in_channels, out_channels}; }
  Shape bias_shape() const { return {out_channels}; }

  /// Throws ConfigError when fields are outside their domain.
  void validate() const;

  /// Shape inference for a rank-3 input; throws ShapeError when the input
  /// cannot be processed.
  Shape output_shape(const Shape& input) const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Weights are (filter, filter, in_channels, out_channels); bias is
/// (out_channels). Both are empty for parameter-free layers.
template <typename T>
struct LayerParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;

  template <typename U>
  LayerParams<U> cast() const {
    LayerParams<U> out;
    if (!weights.empty()) out.weights = weights.template cast<U>();
    if (!bias.empty()) out.bias = bias.template cast<U>();
    return out;
  }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename T>
struct LayerGrad {
  BasicTensor<T> grad_input;
  BasicTensor<T> grad_weights;
  BasicTensor<T> grad_bias;
};

template <typename T>
struct Layer {
  LayerSpec spec;
  LayerParams<T> params;

  template <typename U>
  Layer<U> cast() const {
    return Layer<U>{spec, params.template cast<U>()};
  }
  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Checks that `params` has the shapes `spec` requires.
template <typename T>
void check_params(const LayerSpec& spec, const LayerParams<T>& params);

/// He-style uniform initialisation: U(-b, b) with b = sqrt(6 / fan_in),
/// zero bias.
template <typename T>
LayerParams<T> init_params(const LayerSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Per-kind passes. Inputs are rank 3 (h, w, c).

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const LayerSpec& spec,
                              const LayerParams<T>& params);

/// Gradients of sum(grad_output * conv2d_forward(input)). Parameter
/// gradients are skipped when `param_grads` is false.
template <typename T>
LayerGrad<T> conv2d_backward(const BasicTensor<T>& input, const LayerSpec& spec,
                             const LayerParams<T>& params, const BasicTensor<T>& grad_output,
                             bool param_grads = true);

/// Scatter form: every input cell adds `value * filter` into the output.
/// Output extent per axis is (in - 1) * stride + filter - 2 * padding.
/// Zero-valued inputs are skipped, which keeps one-hot inputs cheap.
template <typename T>
BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>& input, const LayerSpec& spec,
                                         const LayerParams<T>& params);

template <typename T>
LayerGrad<T> transposed_conv2d_backward(const BasicTensor<T>& input, const LayerSpec& spec,
                                        const LayerParams<T>& params, const BasicTensor<T>& grad_output,
                                        bool param_grads = true);

/// Non-overlapping `factor` x `factor` windows; trailing rows/columns that do
/// not fill a window are dropped.
template <typename T>
BasicTensor<T> maxpool_forward(const BasicTensor<T>& input, std::size_t factor);

/// Routes each window's gradient to the first maximum in scan order.
template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& input, std::size_t factor,
                                const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// Subgradient 0 at exactly 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

/// y = (x - mean) / sqrt(var + eps) per channel, population variance, no
/// affine. Requires h * w >= 2.
template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T>& input, double eps = kInstanceNormEpsilon);

template <typename T>
BasicTensor<T> instance_norm_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output,
                                      double eps = kInstanceNormEpsilon);

template <typename T>
BasicTensor<T> nn_upsample_forward(const BasicTensor<T>& input, std::size_t factor);

template <typename T>
BasicTensor<T> nn_upsample_backward(const BasicTensor<T>& grad_output, std::size_t factor);

// ---------------------------------------------------------------------------
// Dispatch and layer stacks.

template <typename T>
BasicTensor<T> layer_forward(const Layer<T>& layer, const BasicTensor<T>& input);

template <typename T>
LayerGrad<T> layer_backward(const Layer<T>& layer, const BasicTensor<T>& input,
                            const BasicTensor<T>& grad_output, bool param_grads = true);

/// Inputs seen by each layer of a stack during one forward pass.
template <typename T>
struct StackTrace {
  std::vector<BasicTensor<T>> inputs;
  Shape output_shape;
};

template <typename T>
BasicTensor<T> stack_forward(std::span<const Layer<T>> layers, const BasicTensor<T>& input,
                             StackTrace<T>* trace = nullptr);

template <typename T>
struct StackGrad {
  BasicTensor<T> grad_input;
  /// One entry per layer; empty tensors for parameter-free layers or when
  /// parameter gradients were not requested.
  std::vector<LayerParams<T>> param_grads;
};

template <typename T>
StackGrad<T> stack_backward(std::span<const Layer<T>> layers, const StackTrace<T>& trace,
                            const BasicTensor<T>& grad_output, bool param_grads);

/// Shape after running `input` through every layer.
template <typename T>
Shape stack_output_shape(std::span<const Layer<T>> layers, Shape input);

}  // namespace styleswap
