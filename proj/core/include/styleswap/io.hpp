#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "styleswap/encoder.hpp"
#include "styleswap/tensor.hpp"

namespace styleswap {

// ---------------------------------------------------------------------------
// Images: h x w x 3 tensors in [0,1]. PPM (binary P6, maxval <= 255) and
// 8-bit RGB PNG. Saving clamps to [0,1] and rounds to the nearest level.

Tensor decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
Tensor decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Tensor& image);

/// Format chosen from the file signature.
Tensor load_image(const std::filesystem::path& path);
/// Format chosen from the extension (.ppm or .png).
void save_image(const std::filesystem::path& path, const Tensor& image);

/// Corner-aligned bilinear resampling. Target index i samples source
/// coordinate i * (src - 1) / (dst - 1); a target extent of 1 samples the
/// source centre (src - 1) / 2.
Tensor resize_bilinear(const Tensor& image, std::size_t target_h, std::size_t target_w);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Weight files.
//
// Little-endian layout:
//   "SSWP"                      magic
//   u32 version                 (kWeightFileVersion)
//   u8  role                    0 = encoder, 1 = inverse network
//   u32 n, n bytes              network name
//   u32 n, n bytes              paired encoder name (empty for encoders)
//   f32 x3 mean, f32 x3 scale   input preprocessing
//   u32 layer count
//   per layer:
//     u8 kind tag               LayerKind value
//     u32 filter, stride, padding, in_channels, out_channels
//                               (MaxPool/NNUpsample store the factor in
//                               filter and stride)
//     u64 weight byte length, f32 weights (filter, filter, in, out)
//     u64 bias byte length,   f32 bias (out)
// Trailing bytes are rejected.

inline constexpr std::uint32_t kWeightFileVersion = 1;

enum class NetworkRole : std::uint8_t { Encoder = 0, InverseNet = 1 };

struct WeightFile {
  NetworkRole role = NetworkRole::Encoder;
  std::string name;
  std::string paired_encoder;
  Preprocess preprocess;
  std::vector<Layer<float>> layers;

  friend bool operator==(const WeightFile&, const WeightFile&) = default;
};

std::vector<std::uint8_t> encode_weight_file(const WeightFile& file);
/// Throws FormatError naming the offending field or layer index.
WeightFile decode_weight_file(std::span<const std::uint8_t> bytes);

void save_weights(const std::filesystem::path& path, const WeightFile& file);
WeightFile load_weights(const std::filesystem::path& path);

WeightFile to_weight_file(const Encoder& encoder);
Encoder encoder_from_weights(const WeightFile& file);

// ---------------------------------------------------------------------------
// Dataset folders.

enum class DatasetRole { Natural, Painting };

struct DatasetListing {
  std::vector<std::filesystem::path> images;  // lexicographic by file name
  std::size_t skipped = 0;                    // files that failed to decode
};

/// Regular files in `root` (non-recursive) that decode as images.
DatasetListing enumerate_dataset(const std::filesystem::path& root);

/// Decodes and resizes every listed image to size x size.
std::vector<Tensor> load_dataset(const DatasetListing& listing, std::size_t size);

// ---------------------------------------------------------------------------
// Raw activation tensors ("SSTN", u32 rank, u64 extents, f32 data), used
// by `swap` when the activations are not RGB.

std::vector<std::uint8_t> encode_tensor_file(const Tensor& t);
Tensor decode_tensor_file(std::span<const std::uint8_t> bytes);

}  // namespace styleswap
