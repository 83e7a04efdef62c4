#include "styleswap/style_swap.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "styleswap/layers.hpp"

namespace styleswap {

void SwapConfig::validate() const {
  if (patch_size < 1) throw ConfigError("patch size must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
}

void SwapConfig::validate_for(const Shape& activations) const {
  validate();
  if (activations.size() != 3) {
    throw ShapeError("style swap expects rank-3 activations, got " + shape_string(activations));
  }
  if (patch_size > activations[0] || patch_size > activations[1]) {
    throw ShapeError("patch size " + std::to_string(patch_size) + " exceeds activation extent " +
                     shape_string(activations));
  }
}

std::size_t patch_grid_extent(std::size_t extent, std::size_t patch_size, std::size_t stride) {
  if (patch_size > extent) throw ShapeError("patch larger than extent");
  return (extent - patch_size) / stride + 1;
}

template <typename T>
PatchSet<T> extract_patches(const BasicTensor<T>& activations, const SwapConfig& config) {
  config.validate_for(activations.shape());
  const std::size_t s = config.patch_size, d = activations.channels();
  PatchSet<T> set;
  set.grid_h = patch_grid_extent(activations.height(), s, config.stride);
  set.grid_w = patch_grid_extent(activations.width(), s, config.stride);
  const std::size_t n = set.grid_h * set.grid_w;
  set.patches = BasicTensor<T>({n, s, s, d});
  set.origins.reserve(n);
  set.zero_norm.assign(n, false);
  T* out = set.patches.raw();
  for (std::size_t a = 0; a < set.grid_h; ++a) {
    for (std::size_t b = 0; b < set.grid_w; ++b) {
      const std::size_t y0 = a * config.stride, x0 = b * config.stride;
      set.origins.push_back({y0, x0});
      for (std::size_t dy = 0; dy < s; ++dy) {
        const T* row = &activations.at(y0 + dy, x0, 0);
        out = std::copy(row, row + s * d, out);
      }
    }
  }
  return set;
}

template <typename T>
PatchSet<T> normalize_patches(const PatchSet<T>& patches, double epsilon) {
  PatchSet<T> out = patches;
  out.zero_norm.assign(patches.count(), false);
  const std::size_t n = patches.count();
  const std::size_t len = n ? patches.patches.size() / n : 0;
  T* p = out.patches.raw();
  for (std::size_t j = 0; j < n; ++j) {
    T* patch = p + j * len;
    double sq = 0.0;
    for (std::size_t i = 0; i < len; ++i) sq += static_cast<double>(patch[i]) * static_cast<double>(patch[i]);
    const double norm = std::sqrt(sq);
    if (norm < epsilon || norm == 0.0) {
      std::fill(patch, patch + len, T(0));
      out.zero_norm[j] = true;
    } else {
      for (std::size_t i = 0; i < len; ++i) patch[i] = static_cast<T>(static_cast<double>(patch[i]) / norm);
    }
  }
  return out;
}

namespace {

// Filters for the correlation convolution: W[ky][kx][c][j] = patch j.
template <typename T>
LayerParams<T> patches_as_conv_filters(const PatchSet<T>& set) {
  const std::size_t n = set.count(), s = set.patch_size(), d = set.channels();
  LayerParams<T> p;
  p.weights = BasicTensor<T>({s, s, d, n});
  p.bias = BasicTensor<T>::zeros({n});
  const T* src = set.patches.raw();
  T* w = p.weights.raw();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t q = 0; q < s * s * d; ++q) w[q * n + j] = src[j * s * s * d + q];
  }
  return p;
}

// Filters for the reconstruction transposed convolution: W[ky][kx][j][c].
template <typename T>
LayerParams<T> patches_as_transposed_filters(const PatchSet<T>& set) {
  const std::size_t n = set.count(), s = set.patch_size(), d = set.channels();
  LayerParams<T> p;
  p.weights = BasicTensor<T>({s, s, n, d});
  p.bias = BasicTensor<T>::zeros({d});
  const T* src = set.patches.raw();
  T* w = p.weights.raw();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < s * s; ++k) {
      std::copy_n(src + (j * s * s + k) * d, d, w + (k * n + j) * d);
    }
  }
  return p;
}

std::size_t first_eligible(const std::vector<bool>& excluded, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    if (excluded.empty() || !excluded[j]) return j;
  }
  return 0;
}

}  // namespace

template <typename T>
BasicTensor<T> correlation_map(const BasicTensor<T>& content, const PatchSet<T>& normalized_style,
                               const SwapConfig& config) {
  config.validate_for(content.shape());
  if (normalized_style.count() == 0) throw ShapeError("correlation_map: empty style patch set");
  if (content.channels() != normalized_style.channels()) {
    throw ShapeError("correlation_map: content has " + std::to_string(content.channels()) +
                     " channels, style patches have " + std::to_string(normalized_style.channels()));
  }
  if (normalized_style.patch_size() != config.patch_size) {
    throw ShapeError("correlation_map: style patches are not of the configured size");
  }
  const LayerSpec spec =
      LayerSpec::conv(content.channels(), normalized_style.count(), config.patch_size, config.stride, 0);
  return conv2d_forward(content, spec, patches_as_conv_filters(normalized_style));
}

template <typename T>
BasicTensor<T> argmax_one_hot(const BasicTensor<T>& correlation, const std::vector<bool>& excluded,
                              bool average_ties) {
  if (correlation.rank() != 3) throw ShapeError("argmax_one_hot expects rank-3 input");
  const std::size_t n = correlation.channels();
  if (!excluded.empty() && excluded.size() != n) {
    throw ShapeError("argmax_one_hot: exclusion mask length does not match channel count");
  }
  const std::size_t start = first_eligible(excluded, n);
  BasicTensor<T> out = BasicTensor<T>::zeros(correlation.shape());
  const std::size_t cells = correlation.height() * correlation.width();
  const T* k = correlation.raw();
  T* o = out.raw();
  for (std::size_t i = 0; i < cells; ++i) {
    const T* row = k + i * n;
    std::size_t best = start;
    for (std::size_t j = start + 1; j < n; ++j) {
      if (!excluded.empty() && excluded[j]) continue;
      if (row[j] > row[best]) best = j;
    }
    if (average_ties) {
      for (std::size_t j = best; j < n; ++j) {
        if ((excluded.empty() || !excluded[j]) && row[j] == row[best]) o[i * n + j] = T(1);
      }
    } else {
      o[i * n + best] = T(1);
    }
  }
  return out;
}

std::vector<std::uint32_t> overlap_counts(std::size_t h, std::size_t w, const SwapConfig& config) {
  config.validate_for({h, w, 1});
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;
  static std::mutex mutex;
  static std::map<Key, std::vector<std::uint32_t>> cache;
  const Key key{h, w, config.patch_size, config.stride};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const std::size_t s = config.patch_size;
  const std::size_t gh = patch_grid_extent(h, s, config.stride), gw = patch_grid_extent(w, s, config.stride);
  std::vector<std::uint32_t> counts(h * w, 0);
  for (std::size_t a = 0; a < gh; ++a) {
    for (std::size_t b = 0; b < gw; ++b) {
      for (std::size_t dy = 0; dy < s; ++dy) {
        for (std::size_t dx = 0; dx < s; ++dx) {
          ++counts[(a * config.stride + dy) * w + b * config.stride + dx];
        }
      }
    }
  }
  std::lock_guard lock(mutex);
  if (cache.size() > 256) cache.clear();
  cache.emplace(key, counts);
  return counts;
}

template <typename T>
BasicTensor<T> reconstruct(const BasicTensor<T>& match_map, const PatchSet<T>& style_patches,
                           const SwapConfig& config, const Shape& out_shape) {
  config.validate_for(out_shape);
  const std::size_t s = config.patch_size, d = style_patches.channels(), n = style_patches.count();
  if (match_map.rank() != 3 || match_map.channels() != n) {
    throw ShapeError("reconstruct: match map " + shape_string(match_map.shape()) + " does not index " +
                     std::to_string(n) + " style patches");
  }
  if (style_patches.patch_size() != s) throw ShapeError("reconstruct: style patch size mismatch");
  if (out_shape[2] != d) throw ShapeError("reconstruct: output channels differ from style patch channels");
  const std::size_t h = out_shape[0], w = out_shape[1];
  if (match_map.height() != patch_grid_extent(h, s, config.stride) ||
      match_map.width() != patch_grid_extent(w, s, config.stride)) {
    throw ShapeError("reconstruct: match grid " + shape_string(match_map.shape()) +
                     " inconsistent with output " + shape_string(out_shape));
  }

  const LayerSpec spec = LayerSpec::transposed_conv(n, d, s, config.stride, 0);
  const BasicTensor<T> summed =
      transposed_conv2d_forward(match_map, spec, patches_as_transposed_filters(style_patches));

  // Per-cell number of contributing patches.
  std::vector<double> counts(h * w, 0.0);
  if (config.average_ties) {
    for (std::size_t a = 0; a < match_map.height(); ++a) {
      for (std::size_t b = 0; b < match_map.width(); ++b) {
        double t = 0.0;
        for (std::size_t j = 0; j < n; ++j) t += static_cast<double>(match_map.at(a, b, j));
        for (std::size_t dy = 0; dy < s; ++dy) {
          for (std::size_t dx = 0; dx < s; ++dx) counts[(a * config.stride + dy) * w + b * config.stride + dx] += t;
        }
      }
    }
  } else {
    const auto geometric = overlap_counts(h, w, config);
    std::copy(geometric.begin(), geometric.end(), counts.begin());
  }

  BasicTensor<T> out = BasicTensor<T>::zeros(out_shape);
  const std::size_t sh = summed.height(), sw = summed.width();
  for (std::size_t y = 0; y < sh; ++y) {
    for (std::size_t x = 0; x < sw; ++x) {
      const double c = counts[y * w + x];
      if (c == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) out.at(y, x, k) = static_cast<T>(summed.at(y, x, k) / c);
    }
  }
  return out;
}

namespace {

template <typename T>
void check_swap_inputs(const BasicTensor<T>& content, const BasicTensor<T>& style, const SwapConfig& config) {
  config.validate_for(content.shape());
  config.validate_for(style.shape());
  if (content.channels() != style.channels()) {
    throw ShapeError("style swap: content has " + std::to_string(content.channels()) +
                     " channels, style has " + std::to_string(style.channels()));
  }
}

}  // namespace

template <typename T>
SwapResult<T> style_swap_detailed(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                  const SwapConfig& config) {
  check_swap_inputs(content, style, config);
  const PatchSet<T> style_patches = extract_patches(style, config);
  const PatchSet<T> normalized = normalize_patches(style_patches, config.epsilon);
  const BasicTensor<T> k = correlation_map(content, normalized, config);
  const BasicTensor<T> match = argmax_one_hot(k, normalized.zero_norm, config.average_ties);

  SwapResult<T> result;
  result.output = reconstruct(match, style_patches, config, content.shape());

  const std::size_t n = style_patches.count(), cells = k.height() * k.width();
  const std::size_t s = config.patch_size, d = content.channels();
  std::vector<bool> used(n, false);
  double corr_sum = 0.0;
  result.matches.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const T* row = match.raw() + i * n;
    const std::size_t j = static_cast<std::size_t>(std::find(row, row + n, T(1)) - row);
    result.matches[i] = j;
    used[j] = true;
    const std::size_t y0 = (i / k.width()) * config.stride, x0 = (i % k.width()) * config.stride;
    double sq = 0.0;
    for (std::size_t dy = 0; dy < s; ++dy) {
      const T* row = &content.at(y0 + dy, x0, 0);
      for (std::size_t q = 0; q < s * d; ++q) sq += static_cast<double>(row[q]) * static_cast<double>(row[q]);
    }
    if (sq > 0.0) corr_sum += static_cast<double>(k.raw()[i * n + j]) / std::sqrt(sq);
  }
  result.stats.content_patches = cells;
  result.stats.style_patches = n;
  result.stats.distinct_used = static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
  result.stats.mean_correlation = corr_sum / static_cast<double>(cells);
  return result;
}

template <typename T>
BasicTensor<T> style_swap(const BasicTensor<T>& content, const BasicTensor<T>& style, const SwapConfig& config) {
  check_swap_inputs(content, style, config);
  const PatchSet<T> style_patches = extract_patches(style, config);
  const PatchSet<T> normalized = normalize_patches(style_patches, config.epsilon);
  const BasicTensor<T> k = correlation_map(content, normalized, config);
  const BasicTensor<T> match = argmax_one_hot(k, normalized.zero_norm, config.average_ties);
  return reconstruct(match, style_patches, config, content.shape());
}

template <typename T>
BasicTensor<T> brute_force_style_swap(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                      const SwapConfig& config) {
  check_swap_inputs(content, style, config);
  const std::size_t s = config.patch_size, d = content.channels(), stride = config.stride;
  const std::size_t h = content.height(), w = content.width();
  const std::size_t gh = patch_grid_extent(h, s, stride), gw = patch_grid_extent(w, s, stride);
  const std::size_t sgh = patch_grid_extent(style.height(), s, stride);
  const std::size_t sgw = patch_grid_extent(style.width(), s, stride);
  const std::size_t ns = sgh * sgw;

  auto patch_dot = [&](std::size_t cy, std::size_t cx, std::size_t sy, std::size_t sx) {
    double acc = 0.0;
    for (std::size_t dy = 0; dy < s; ++dy) {
      for (std::size_t dx = 0; dx < s; ++dx) {
        for (std::size_t k = 0; k < d; ++k) {
          acc += static_cast<double>(content.at(cy + dy, cx + dx, k)) *
                 static_cast<double>(style.at(sy + dy, sx + dx, k));
        }
      }
    }
    return acc;
  };
  auto style_norm = [&](std::size_t sy, std::size_t sx) {
    double acc = 0.0;
    for (std::size_t dy = 0; dy < s; ++dy) {
      for (std::size_t dx = 0; dx < s; ++dx) {
        for (std::size_t k = 0; k < d; ++k) {
          const double v = style.at(sy + dy, sx + dx, k);
          acc += v * v;
        }
      }
    }
    return std::sqrt(acc);
  };
  auto content_norm = [&](std::size_t cy, std::size_t cx) {
    double acc = 0.0;
    for (std::size_t dy = 0; dy < s; ++dy) {
      for (std::size_t dx = 0; dx < s; ++dx) {
        for (std::size_t k = 0; k < d; ++k) {
          const double v = content.at(cy + dy, cx + dx, k);
          acc += v * v;
        }
      }
    }
    return std::sqrt(acc);
  };

  std::vector<double> snorm(ns);
  std::vector<bool> excluded(ns);
  for (std::size_t j = 0; j < ns; ++j) {
    snorm[j] = style_norm((j / sgw) * stride, (j % sgw) * stride);
    excluded[j] = snorm[j] < config.epsilon || snorm[j] == 0.0;
  }
  const std::size_t start = first_eligible(excluded, ns);

  BasicTensor<T> sum = BasicTensor<T>::zeros(content.shape());
  std::vector<double> counts(h * w, 0.0);
  for (std::size_t a = 0; a < gh; ++a) {
    for (std::size_t b = 0; b < gw; ++b) {
      const std::size_t cy = a * stride, cx = b * stride;
      const double cnorm = content_norm(cy, cx);
      const double denom_c = cnorm > 0.0 ? cnorm : 1.0;
      std::vector<double> score(ns, 0.0);
      for (std::size_t j = 0; j < ns; ++j) {
        if (excluded[j]) continue;
        score[j] = patch_dot(cy, cx, (j / sgw) * stride, (j % sgw) * stride) / (denom_c * snorm[j]);
      }
      std::size_t best = start;
      for (std::size_t j = start + 1; j < ns; ++j) {
        if (!excluded[j] && score[j] > score[best]) best = j;
      }
      std::vector<std::size_t> winners{best};
      if (config.average_ties) {
        for (std::size_t j = best + 1; j < ns; ++j) {
          if (!excluded[j] && score[j] == score[best]) winners.push_back(j);
        }
      }
      for (std::size_t j : winners) {
        const std::size_t sy = (j / sgw) * stride, sx = (j % sgw) * stride;
        for (std::size_t dy = 0; dy < s; ++dy) {
          for (std::size_t dx = 0; dx < s; ++dx) {
            counts[(cy + dy) * w + cx + dx] += 1.0;
            for (std::size_t k = 0; k < d; ++k) sum.at(cy + dy, cx + dx, k) += style.at(sy + dy, sx + dx, k);
          }
        }
      }
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double c = counts[y * w + x];
      for (std::size_t k = 0; k < d; ++k) {
        sum.at(y, x, k) = c == 0.0 ? T(0) : static_cast<T>(sum.at(y, x, k) / c);
      }
    }
  }
  return sum;
}

#define STYLESWAP_INSTANTIATE_SWAP(T)                                                                      \
  template PatchSet<T> extract_patches<T>(const BasicTensor<T>&, const SwapConfig&);                       \
  template PatchSet<T> normalize_patches<T>(const PatchSet<T>&, double);                                   \
  template BasicTensor<T> correlation_map<T>(const BasicTensor<T>&, const PatchSet<T>&, const SwapConfig&); \
  template BasicTensor<T> argmax_one_hot<T>(const BasicTensor<T>&, const std::vector<bool>&, bool);        \
  template BasicTensor<T> reconstruct<T>(const BasicTensor<T>&, const PatchSet<T>&, const SwapConfig&,     \
                                         const Shape&);                                                    \
  template SwapResult<T> style_swap_detailed<T>(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                                const SwapConfig&);                                        \
  template BasicTensor<T> style_swap<T>(const BasicTensor<T>&, const BasicTensor<T>&, const SwapConfig&);  \
  template BasicTensor<T> brute_force_style_swap<T>(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                                    const SwapConfig&);

STYLESWAP_INSTANTIATE_SWAP(float)
STYLESWAP_INSTANTIATE_SWAP(double)

}  // namespace styleswap
