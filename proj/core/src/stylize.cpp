#include "styleswap/stylize.hpp"

#include <chrono>
#include <cmath>
#include <future>

#include "styleswap/csv.hpp"

namespace styleswap {

template <typename T>
double tv_loss(const BasicTensor<T>& image) {
  if (image.rank() != 3) throw ShapeError("tv_loss expects an h x w x d image");
  const std::size_t h = image.height(), w = image.width(), d = image.channels();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(image.at(i + 1, j, k)) - static_cast<double>(image.at(i, j, k));
        acc += diff * diff;
      }
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j + 1 < w; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(image.at(i, j + 1, k)) - static_cast<double>(image.at(i, j, k));
        acc += diff * diff;
      }
    }
  }
  return acc;
}

template <typename T>
BasicTensor<T> tv_grad(const BasicTensor<T>& image) {
  if (image.rank() != 3) throw ShapeError("tv_grad expects an h x w x d image");
  const std::size_t h = image.height(), w = image.width(), d = image.channels();
  BasicTensor<T> g = BasicTensor<T>::zeros(image.shape());
  for (std::size_t i = 0; i + 1 < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        const T diff = image.at(i + 1, j, k) - image.at(i, j, k);
        g.at(i + 1, j, k) += 2 * diff;
        g.at(i, j, k) -= 2 * diff;
      }
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j + 1 < w; ++j) {
      for (std::size_t k = 0; k < d; ++k) {
        const T diff = image.at(i, j + 1, k) - image.at(i, j, k);
        g.at(i, j + 1, k) += 2 * diff;
        g.at(i, j, k) -= 2 * diff;
      }
    }
  }
  return g;
}

namespace {

template <typename T>
void require_target_shape(const BasicTensor<T>& image, const BasicTensor<T>& target,
                          const BasicEncoder<T>& encoder) {
  const Shape expected = encoder.output_shape(image.shape());
  if (expected != target.shape()) {
    throw ShapeError("target activations " + shape_string(target.shape()) + " do not match encoder output " +
                     shape_string(expected));
  }
}

template <typename T>
LossTerms loss_only(const BasicTensor<T>& image, const BasicTensor<T>& target, const BasicEncoder<T>& encoder,
                    double lambda) {
  LossTerms t;
  t.activation = frobenius_norm_sq(sub(encode_activations(image, encoder), target));
  t.tv = tv_loss(image);
  t.total = t.activation + lambda * t.tv;
  return t;
}

}  // namespace

template <typename T>
StylizeLoss<T> stylize_loss(const BasicTensor<T>& image, const BasicTensor<T>& target,
                            const BasicEncoder<T>& encoder, double lambda_tv) {
  if (!(lambda_tv >= 0.0)) throw ConfigError("TV weight must be >= 0");
  require_target_shape(image, target, encoder);
  Encoded<T> enc = encode(image, encoder);
  const BasicTensor<T> residual = sub(enc.activations, target);
  StylizeLoss<T> out;
  out.terms.activation = frobenius_norm_sq(residual);
  out.terms.tv = tv_loss(image);
  out.terms.total = out.terms.activation + lambda_tv * out.terms.tv;
  out.grad = encode_backward(enc.trace, encoder, scale(residual, T(2)));
  if (lambda_tv > 0.0) axpy_inplace(out.grad, static_cast<T>(lambda_tv), tv_grad(image));
  return out;
}

void OptimConfig::validate() const {
  if (!(lambda_tv >= 0.0)) throw ConfigError("TV weight must be >= 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(step > 0.0)) throw ConfigError("step size must be > 0");
  if (!(init_lo < init_hi)) throw ConfigError("random init range must satisfy lo < hi");
  if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
}

template <typename T>
void OptimReport<T>::write_csv(const std::filesystem::path& path) const {
  CsvWriter csv({"iter", "total", "act_term", "tv_term"});
  for (const auto& h : history) csv.add(h.iter, h.loss.total, h.loss.activation, h.loss.tv);
  csv.save(path);
}

template <typename T>
ImageOptimizer<T>::ImageOptimizer(BasicTensor<T> init, BasicTensor<T> target, const BasicEncoder<T>& encoder,
                                  const OptimConfig& config)
    : image_(std::move(init)),
      target_(std::move(target)),
      encoder_(&encoder),
      lambda_(config.lambda_tv),
      adam_(config.adam()) {
  config.validate();
  require_target_shape(image_, target_, encoder);
}

template <typename T>
LossTerms ImageOptimizer<T>::step() {
  StylizeLoss<T> l = stylize_loss(image_, target_, *encoder_, lambda_);
  if (!std::isfinite(l.terms.total) || !all_finite(l.grad)) {
    throw NumericalError("optimisation diverged: loss is " + std::to_string(l.terms.total));
  }
  adam_.begin_step();
  adam_.update(0, image_.data(), l.grad.data());
  return l.terms;
}

template <typename T>
LossTerms ImageOptimizer<T>::evaluate() const {
  LossTerms t = loss_only(image_, target_, *encoder_, lambda_);
  if (!std::isfinite(t.total)) throw NumericalError("optimisation diverged: final loss is not finite");
  return t;
}

template <typename T>
OptimReport<T> optimize_to_target(const BasicTensor<T>& init, const BasicTensor<T>& target,
                                  const BasicEncoder<T>& encoder, const OptimConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ImageOptimizer<T> opt(init, target, encoder, config);
  OptimReport<T> report;
  double previous = 0.0;
  std::size_t iter = 0;
  for (; iter < config.max_iters; ++iter) {
    const LossTerms l = opt.step();
    if (iter % config.log_every == 0) report.history.push_back({iter, l});
    if (config.tolerance > 0.0 && iter > 0 && previous > 0.0 &&
        (previous - l.total) / previous < config.tolerance) {
      ++iter;
      break;
    }
    previous = l.total;
  }
  report.history.push_back({iter, opt.evaluate()});
  report.final_image = opt.image();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

template <typename T>
BasicTensor<T> initial_image(const BasicTensor<T>& content, const OptimConfig& config) {
  if (config.init == InitMode::Content) return content;
  Rng rng(config.seed);
  return random_uniform<T>(content.shape(), static_cast<T>(config.init_lo), static_cast<T>(config.init_hi), rng);
}

template <typename T>
OptimReport<T> optimize(const BasicTensor<T>& content, const BasicTensor<T>& style, const BasicEncoder<T>& encoder,
                        const SwapConfig& swap, const OptimConfig& config) {
  config.validate();
  const BasicTensor<T> target =
      style_swap(encode_activations(content, encoder), encode_activations(style, encoder), swap);
  return optimize_to_target(initial_image(content, config), target, encoder, config);
}

template <typename T>
void ConsistencyReport<T>::write_csv(const std::filesystem::path& path) const {
  CsvWriter csv({"iter", "total", "act_term", "tv_term", "stddev"});
  for (std::size_t i = 0; i < mean_history.size(); ++i) {
    const auto& h = mean_history[i];
    csv.add(h.iter, h.loss.total, h.loss.activation, h.loss.tv, pixel_stddev[i]);
  }
  csv.save(path);
}

namespace {

template <typename T>
double mean_pixel_stddev(const std::vector<const BasicTensor<T>*>& images) {
  const std::size_t k = images.size(), n = images.front()->size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (const auto* img : images) m += static_cast<double>((*img)[i]);
    m /= static_cast<double>(k);
    double var = 0.0;
    for (const auto* img : images) {
      const double d = static_cast<double>((*img)[i]) - m;
      var += d * d;
    }
    total += std::sqrt(var / static_cast<double>(k));
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <typename T>
ConsistencyReport<T> consistency_experiment(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                            const BasicEncoder<T>& encoder, const SwapConfig& swap,
                                            const OptimConfig& config, const std::vector<std::uint64_t>& seeds) {
  config.validate();
  if (seeds.size() < 2) throw ConfigError("consistency experiment needs at least 2 runs");
  const auto t0 = std::chrono::steady_clock::now();
  const BasicTensor<T> target =
      style_swap(encode_activations(content, encoder), encode_activations(style, encoder), swap);

  std::vector<ImageOptimizer<T>> runs;
  runs.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    OptimConfig c = config;
    c.init = InitMode::Random;
    c.seed = seed;
    runs.emplace_back(initial_image(content, c), target, encoder, c);
  }

  ConsistencyReport<T> report;
  report.runs.resize(runs.size());
  const double k = static_cast<double>(runs.size());
  auto record = [&](std::size_t iter, double stddev, const std::vector<LossTerms>& losses) {
    LossTerms mean_loss;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      report.runs[r].history.push_back({iter, losses[r]});
      mean_loss.total += losses[r].total / k;
      mean_loss.activation += losses[r].activation / k;
      mean_loss.tv += losses[r].tv / k;
    }
    report.pixel_stddev.push_back(stddev);
    report.mean_history.push_back({iter, mean_loss});
  };
  auto current_stddev = [&] {
    std::vector<const BasicTensor<T>*> images;
    for (const auto& r : runs) images.push_back(&r.image());
    return mean_pixel_stddev(images);
  };

  std::vector<LossTerms> losses(runs.size());
  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    const bool log = iter % config.log_every == 0;
    // Measured on the images before this iteration's update.
    const double stddev = log ? current_stddev() : 0.0;
    std::vector<std::future<LossTerms>> pending;
    for (auto& r : runs) pending.push_back(std::async(std::launch::async, [&r] { return r.step(); }));
    for (std::size_t r = 0; r < runs.size(); ++r) losses[r] = pending[r].get();
    if (log) record(iter, stddev, losses);
  }
  for (std::size_t r = 0; r < runs.size(); ++r) losses[r] = runs[r].evaluate();
  record(config.max_iters, current_stddev(), losses);

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    report.runs[r].final_image = runs[r].image();
    report.runs[r].seconds = seconds;
  }
  return report;
}

template <typename T>
ConsistencyReport<T> consistency_experiment(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                            const BasicEncoder<T>& encoder, const SwapConfig& swap,
                                            const OptimConfig& config, std::size_t k_runs) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < k_runs; ++r) seeds.push_back(derive_seed(config.seed, r));
  return consistency_experiment(content, style, encoder, swap, config, seeds);
}

#define STYLESWAP_INSTANTIATE_STYLIZE(T)                                                                  \
  template double tv_loss<T>(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> tv_grad<T>(const BasicTensor<T>&);                                              \
  template StylizeLoss<T> stylize_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                          const BasicEncoder<T>&, double);                                \
  template struct OptimReport<T>;                                                                         \
  template class ImageOptimizer<T>;                                                                       \
  template OptimReport<T> optimize_to_target<T>(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                                const BasicEncoder<T>&, const OptimConfig&);              \
  template BasicTensor<T> initial_image<T>(const BasicTensor<T>&, const OptimConfig&);                    \
  template OptimReport<T> optimize<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicEncoder<T>&, \
                                      const SwapConfig&, const OptimConfig&);                             \
  template struct ConsistencyReport<T>;                                                                   \
  template ConsistencyReport<T> consistency_experiment<T>(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                          const BasicEncoder<T>&, const SwapConfig&,      \
                                                          const OptimConfig&, const std::vector<std::uint64_t>&); \
  template ConsistencyReport<T> consistency_experiment<T>(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                          const BasicEncoder<T>&, const SwapConfig&,      \
                                                          const OptimConfig&, std::size_t);

STYLESWAP_INSTANTIATE_STYLIZE(float)
STYLESWAP_INSTANTIATE_STYLIZE(double)

}  // namespace styleswap
