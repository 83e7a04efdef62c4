#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "styleswap/tensor.hpp"

namespace styleswap {

struct SwapConfig {
  std::size_t patch_size = 3;
  std::size_t stride = 1;
  /// Style patches with norm below this are excluded from matching.
  double epsilon = 1e-12;
  /// Exact ties in the argmax all contribute and are averaged, instead of
  /// the lowest style-patch index winning.
  bool average_ties = false;

  void validate() const;
  /// Also checks that `patch_size` fits inside an activation map.
  void validate_for(const Shape& activations) const;
};

/// Overlapping s x s x d patches cut from an activation map, in raster
/// order of their origin.
template <typename T>
struct PatchSet {
  BasicTensor<T> patches;  // n x s x s x d
  std::vector<std::array<std::size_t, 2>> origins;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  /// Set by normalize_patches for patches whose norm fell below epsilon.
  std::vector<bool> zero_norm;

  std::size_t count() const noexcept { return origins.size(); }
  std::size_t patch_size() const { return patches.dim(1); }
  std::size_t channels() const { return patches.dim(3); }
};

/// Per-axis patch-grid extent: (extent - s) / stride + 1.
std::size_t patch_grid_extent(std::size_t extent, std::size_t patch_size, std::size_t stride);

template <typename T>
PatchSet<T> extract_patches(const BasicTensor<T>& activations, const SwapConfig& config);

/// Scales every patch to unit Frobenius norm. Patches with norm < epsilon
/// become zero and are flagged in `zero_norm`.
template <typename T>
PatchSet<T> normalize_patches(const PatchSet<T>& patches, double epsilon);

/// K[a, b, j] = <content patch at grid cell (a, b), normalized style patch j>,
/// evaluated as one convolution with the style patches as filters.
template <typename T>
BasicTensor<T> correlation_map(const BasicTensor<T>& content, const PatchSet<T>& normalized_style,
                               const SwapConfig& config);

/// One-hot over the last axis of K. Ties go to the lowest index unless
/// `average_ties`, in which case every tied maximum is set. Channels flagged
/// in `excluded` never win unless all channels are excluded, in which case
/// channel 0 wins.
template <typename T>
BasicTensor<T> argmax_one_hot(const BasicTensor<T>& correlation, const std::vector<bool>& excluded = {},
                              bool average_ties = false);

/// Number of patches on a grid of `config` covering each cell of an
/// h x w map. Cells beyond the last full patch have count 0. Results are
/// cached per (h, w, patch_size, stride).
std::vector<std::uint32_t> overlap_counts(std::size_t h, std::size_t w, const SwapConfig& config);

/// Transposed convolution of the match map with the unnormalized style
/// patches, divided per cell by the number of contributing patches.
/// Cells no patch covers are zero.
template <typename T>
BasicTensor<T> reconstruct(const BasicTensor<T>& match_map, const PatchSet<T>& style_patches,
                           const SwapConfig& config, const Shape& out_shape);

struct SwapStats {
  std::size_t content_patches = 0;
  std::size_t style_patches = 0;
  std::size_t distinct_used = 0;
  /// Mean over content patches of the normalized cross-correlation with the
  /// chosen style patch (zero-norm content patches count as 0).
  double mean_correlation = 0.0;
};

template <typename T>
struct SwapResult {
  BasicTensor<T> output;
  /// Winning style patch per content grid cell (lowest index among ties).
  std::vector<std::size_t> matches;
  SwapStats stats;
};

template <typename T>
SwapResult<T> style_swap_detailed(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                  const SwapConfig& config);

/// Convolutional style swap; output has the content's shape.
template <typename T>
BasicTensor<T> style_swap(const BasicTensor<T>& content, const BasicTensor<T>& style,
                          const SwapConfig& config);

/// Reference path: literal per-patch maximisation of normalized
/// cross-correlation followed by overlap-averaged pasting. Content patches
/// with zero norm fall back to the unnormalized inner product.
template <typename T>
BasicTensor<T> brute_force_style_swap(const BasicTensor<T>& content, const BasicTensor<T>& style,
                                      const SwapConfig& config);

}  // namespace styleswap
