#pragma once

#include <cstdint>
#include <vector>

#include "styleswap/tensor.hpp"

namespace styleswap {

/// Smooth, photo-like test image: a two-colour gradient with a few soft
/// discs and boxes.
Tensor synthetic_natural(std::size_t height, std::size_t width, Rng& rng);

/// Texture-heavy test image: oriented colour stripes mixed with blotches.
Tensor synthetic_painting(std::size_t height, std::size_t width, Rng& rng);

std::vector<Tensor> synthetic_pool(bool painting, std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace styleswap
