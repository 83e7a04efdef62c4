#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "styleswap/adam.hpp"
#include "styleswap/encoder.hpp"
#include "styleswap/style_swap.hpp"

namespace styleswap {

/// Anisotropic squared total variation: the sum of squared differences
/// between vertically and horizontally adjacent pixels, all channels.
template <typename T>
double tv_loss(const BasicTensor<T>& image);

template <typename T>
BasicTensor<T> tv_grad(const BasicTensor<T>& image);

struct LossTerms {
  double total = 0.0;
  double activation = 0.0;
  double tv = 0.0;
};

template <typename T>
struct StylizeLoss {
  LossTerms terms;
  BasicTensor<T> grad;
};

/// ||encode(image) - target||_F^2 + lambda * tv_loss(image), with its image
/// gradient.
template <typename T>
StylizeLoss<T> stylize_loss(const BasicTensor<T>& image, const BasicTensor<T>& target,
                            const BasicEncoder<T>& encoder, double lambda_tv);

enum class InitMode { Content, Random };

struct OptimConfig {
  double lambda_tv = 1e-6;
  std::size_t max_iters = 100;
  /// Adam step size for images in [0,1].
  double step = 0.05;
  InitMode init = InitMode::Content;
  float init_lo = 0.0f;
  float init_hi = 1.0f;
  std::uint64_t seed = 0;
  /// Stop once the relative loss decrease of one iteration falls below this;
  /// 0 disables early stopping.
  double tolerance = 0.0;
  /// Record every n-th iteration (the first and last are always recorded).
  std::size_t log_every = 1;

  void validate() const;
  AdamConfig adam() const { return AdamConfig{step, 0.9, 0.999, 1e-8}; }
};

struct IterationLog {
  std::size_t iter = 0;
  LossTerms loss;
};

template <typename T>
struct OptimReport {
  /// Loss of the image before update `iter`; the final entry is the
  /// returned image.
  std::vector<IterationLog> history;
  double seconds = 0.0;
  BasicTensor<T> final_image;

  /// Columns iter,total,act_term,tv_term.
  void write_csv(const std::filesystem::path& path) const;
};

/// One Adam run on the image. Exposed separately so several runs can be
/// advanced in lockstep.
template <typename T>
class ImageOptimizer {
 public:
  ImageOptimizer(BasicTensor<T> init, BasicTensor<T> target, const BasicEncoder<T>& encoder,
                 const OptimConfig& config);

  /// Evaluates the loss at the current image, then applies one update.
  /// Throws NumericalError if the loss or gradient is not finite.
  LossTerms step();
  /// Loss at the current image without updating it.
  LossTerms evaluate() const;

  const BasicTensor<T>& image() const noexcept { return image_; }

 private:
  BasicTensor<T> image_;
  BasicTensor<T> target_;
  const BasicEncoder<T>* encoder_;
  double lambda_;
  Adam<T> adam_;
};

/// Minimises the objective starting from `init` toward fixed target
/// activations.
template <typename T>
OptimReport<T> optimize_to_target(const BasicTensor<T>& init, const BasicTensor<T>& target,
                                  const BasicEncoder<T>& encoder, const OptimConfig& config);

/// Full optimisation pipeline: encode both images, style swap, then
/// optimise. The returned image is not clamped.
template <typename T>
OptimReport<T> optimize(const BasicTensor<T>& content, const BasicTensor<T>& style,
                        const BasicEncoder<T>& encoder, const SwapConfig& swap, const OptimConfig& config);

template <typename T>
BasicTensor<T> initial_image(const BasicTensor<T>& content, const OptimConfig& config);

template <typename T>
struct ConsistencyReport {
  std::vector<OptimReport<T>> runs;
  /// Mean over pixels of the across-run standard deviation, one entry per
  /// recorded iteration (index 0 is the initialisation).
  std::vector<double> pixel_stddev;
  /// Across-run mean losses aligned with pixel_stddev.
  std::vector<IterationLog> mean_history;

  /// Columns iter,total,act_term,tv_term,stddev.
  void write_csv(const std::filesystem::path& path) const;
};

/// Runs one optimisation per seed from random initialisations, all in
/// lockstep, and records how far apart the images are at each iteration.
template <typename T>
ConsistencyReport<T> consistency_experiment(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                            const BasicEncoder<T>& encoder, const SwapConfig& swap,
                                            const OptimConfig& config, const std::vector<std::uint64_t>& seeds);

/// Seeds derived from config.seed for k runs.
template <typename T>
ConsistencyReport<T> consistency_experiment(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                            const BasicEncoder<T>& encoder, const SwapConfig& swap,
                                            const OptimConfig& config, std::size_t k_runs);

}  // namespace styleswap
