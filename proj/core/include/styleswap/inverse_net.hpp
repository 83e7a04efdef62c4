#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "styleswap/adam.hpp"
#include "styleswap/encoder.hpp"
#include "styleswap/io.hpp"
#include "styleswap/style_swap.hpp"

namespace styleswap {

/// Decoder mapping activations of its paired encoder back to RGB. Fully
/// convolutional; the last layer is linear.
template <typename T>
struct BasicInverseNet {
  std::string name;
  std::string paired_encoder;
  std::vector<Layer<T>> layers;

  /// Product of the upsampling factors.
  std::size_t upsample_factor() const;
  std::size_t input_channels() const;
  Shape output_shape(const Shape& activation_shape) const;
  void validate() const;

  template <typename U>
  BasicInverseNet<U> cast() const {
    BasicInverseNet<U> out{name, paired_encoder, {}};
    for (const auto& l : layers) out.layers.push_back(l.template cast<U>());
    return out;
  }
  friend bool operator==(const BasicInverseNet&, const BasicInverseNet&) = default;
};

using InverseNet = BasicInverseNet<float>;

/// Conv-IN-ReLU(256->128), NN-Up, Conv-IN-ReLU(128->128),
/// Conv-IN-ReLU(128->64), NN-Up, Conv-IN-ReLU(64->64), Conv(64->3).
InverseNet build_inverse_vgg19(std::uint64_t seed = 0);

/// Conv-IN-ReLU(in->hidden), NN-Up, Conv-IN-ReLU(hidden->hidden),
/// Conv(hidden->3); pairs with a tiny encoder.
InverseNet build_inverse_tiny(const Encoder& encoder, std::size_t hidden = 16, std::uint64_t seed = 0);

/// Throws ConfigError naming both networks when `net` was not built for
/// `encoder`.
template <typename T>
void check_pairing(const BasicInverseNet<T>& net, const BasicEncoder<T>& encoder);

template <typename T>
BasicTensor<T> invert(const BasicTensor<T>& activations, const BasicInverseNet<T>& net);

template <typename T>
struct InversionLoss {
  double loss = 0.0;
  /// One entry per net layer; empty when gradients were not requested.
  std::vector<LayerParams<T>> param_grads;
};

/// (1/n) sum_i ||encode(invert(H_i)) - H_i||_F^2 + lambda * tv(invert(H_i)),
/// with gradients for the net parameters only.
template <typename T>
InversionLoss<T> inversion_loss(std::span<const BasicTensor<T>> batch, const BasicInverseNet<T>& net,
                                const BasicEncoder<T>& encoder, double lambda_tv, bool with_grads = true);

struct BatchComposition {
  std::size_t natural = 2;
  std::size_t painting = 2;
  /// Style-swapped (natural, painting) pairs appended, taken in row-major
  /// pair order.
  std::size_t swapped = 4;

  void validate() const;
};

/// Activations for one minibatch: encoded natural images, encoded
/// paintings, then style swaps of the first `swapped` pairs.
std::vector<Tensor> assemble_minibatch(std::span<const Tensor> natural, std::span<const Tensor> paintings,
                                       const Encoder& encoder, std::size_t swapped, const SwapConfig& swap);

/// Draws `composition.natural` / `composition.painting` distinct images at
/// random. Throws InputError when a pool is too small.
std::vector<Tensor> make_minibatch(std::span<const Tensor> natural_pool, std::span<const Tensor> painting_pool,
                                   const Encoder& encoder, const BatchComposition& composition,
                                   const SwapConfig& swap, Rng& rng);

struct ValidationSet {
  std::vector<Tensor> real;
  std::vector<Tensor> swapped;
};

/// Encodes every held-out image and swaps up to `max_swapped` (natural,
/// painting) pairs, cycling pairs in a fixed order.
ValidationSet make_validation_set(std::span<const Tensor> natural, std::span<const Tensor> paintings,
                                  const Encoder& encoder, const SwapConfig& swap, std::size_t max_swapped);

struct TrainConfig {
  double lambda_tv = 1e-6;
  double learning_rate = 1e-3;
  BatchComposition batch;
  std::size_t epochs = 2;
  SwapConfig swap;
  std::uint64_t seed = 0;
  /// Checkpoint every n steps (0: only at the end). Requires checkpoint_path.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;
  /// Validate every n steps (0: only at the end).
  std::size_t validate_every = 0;
  /// Stop after this many global steps (0: run all epochs).
  std::size_t max_steps = 0;

  void validate() const;
};

struct TrainData {
  std::vector<Tensor> natural;
  std::vector<Tensor> paintings;
  ValidationSet validation;
};

struct ValidationPoint {
  std::size_t step = 0;
  double real = 0.0;
  double swapped = 0.0;
};

struct TrainReport {
  std::vector<double> step_loss;
  /// Global step index of step_loss[0] (non-zero after a resume).
  std::size_t first_step = 0;
  std::vector<ValidationPoint> validation;
  std::vector<std::filesystem::path> checkpoints;

  double initial_loss() const;
  /// Mean of the last min(10, n) step losses.
  double final_loss() const;
  /// Columns step,train_loss,val_real,val_swapped (validation columns empty
  /// on steps without validation).
  void write_csv(const std::filesystem::path& path) const;
};

/// Optimizer state saved next to a checkpoint so training can resume with
/// identical subsequent losses.
struct TrainState {
  std::uint64_t step = 0;
  std::vector<Adam<float>::Moments> moments;
};

std::vector<std::uint8_t> encode_train_state(const TrainState& state);
TrainState decode_train_state(std::span<const std::uint8_t> bytes);
std::filesystem::path state_path_for(const std::filesystem::path& checkpoint);

/// Trains `net` in place with Adam on the inversion objective. The encoder
/// is never modified. When `resume` is given, training restarts at
/// resume->step with its optimizer moments.
TrainReport train(const TrainData& data, const Encoder& encoder, InverseNet& net, const TrainConfig& config,
                  const TrainState* resume = nullptr);

/// encode both images, style swap, invert.
Tensor feedforward_stylize(const Tensor& content, const Tensor& style, const Encoder& encoder,
                           const InverseNet& net, const SwapConfig& swap);

WeightFile to_weight_file(const InverseNet& net);
InverseNet inverse_net_from_weights(const WeightFile& file);

}  // namespace styleswap
