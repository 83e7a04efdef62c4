#include "styleswap/synthetic.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace styleswap {

namespace {

using Rgb = std::array<double, 3>;

Rgb random_colour(Rng& rng) { return {rng.uniform01(), rng.uniform01(), rng.uniform01()}; }

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

Tensor synthetic_natural(std::size_t height, std::size_t width, Rng& rng) {
  Tensor img({height, width, 3});
  const Rgb top = random_colour(rng), bottom = random_colour(rng);
  const double angle = rng.uniform01() * std::numbers::pi;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double u = static_cast<double>(y) / static_cast<double>(height);
      const double v = static_cast<double>(x) / static_cast<double>(width);
      const double t = clamp01(0.5 + 0.7 * ((u - 0.5) * ca + (v - 0.5) * sa));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>((1 - t) * top[c] + t * bottom[c]);
    }
  }
  const std::size_t shapes = 2 + rng.below(3);
  for (std::size_t s = 0; s < shapes; ++s) {
    const Rgb colour = random_colour(rng);
    const double cy = rng.uniform01() * height, cx = rng.uniform01() * width;
    const double r = (0.1 + 0.25 * rng.uniform01()) * static_cast<double>(std::min(height, width));
    const bool disc = rng.below(2) == 0;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (static_cast<double>(y) - cy) / r, dx = (static_cast<double>(x) - cx) / r;
        const double d = disc ? std::sqrt(dx * dx + dy * dy) : std::max(std::abs(dx), std::abs(dy));
        const double a = clamp01((1.0 - d) * 4.0);
        for (int c = 0; c < 3; ++c) {
          img.at(y, x, c) = static_cast<float>((1 - a) * img.at(y, x, c) + a * colour[c]);
        }
      }
    }
  }
  return img;
}

Tensor synthetic_painting(std::size_t height, std::size_t width, Rng& rng) {
  Tensor img({height, width, 3});
  const Rgb a = random_colour(rng), b = random_colour(rng), c2 = random_colour(rng);
  const double angle = rng.uniform01() * std::numbers::pi;
  const double freq = 0.4 + 1.2 * rng.uniform01();
  const double angle2 = rng.uniform01() * std::numbers::pi;
  const double freq2 = 0.2 + 0.6 * rng.uniform01();
  const double phase = rng.uniform01() * 2 * std::numbers::pi;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      const double s1 = 0.5 + 0.5 * std::sin(freq * (fx * std::cos(angle) + fy * std::sin(angle)) + phase);
      const double s2 = 0.5 + 0.5 * std::sin(freq2 * (fx * std::cos(angle2) + fy * std::sin(angle2)));
      const double noise = 0.15 * (rng.uniform01() - 0.5);
      for (int k = 0; k < 3; ++k) {
        const double v = (1 - s1) * a[k] + s1 * b[k];
        img.at(y, x, k) = static_cast<float>(clamp01((1 - 0.5 * s2) * v + 0.5 * s2 * c2[k] + noise));
      }
    }
  }
  return img;
}

std::vector<Tensor> synthetic_pool(bool painting, std::size_t count, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    pool.push_back(painting ? synthetic_painting(size, size, rng) : synthetic_natural(size, size, rng));
  }
  return pool;
}

}  // namespace styleswap
