#include "styleswap/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>

namespace styleswap {

namespace {

constexpr std::size_t kMaxPixels = std::size_t{1} << 28;
constexpr std::size_t kMaxNameLength = 4096;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const std::string& field) const {
    if (remaining() < n) throw FormatError(what_ + " truncated while reading " + field);
  }
  std::uint8_t u8(const std::string& field) {
    need(1, field);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const std::string& field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }
  std::string str(const std::string& field) {
    const std::uint32_t n = u32(field + " length");
    if (n > kMaxNameLength) throw FormatError(what_ + ": " + field + " length " + std::to_string(n) + " too large");
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::uint8_t quantize(float v) {
  if (!(v > 0.0f)) return 0;
  if (v >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0f));
}

void require_rgb(const Tensor& image) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("expected an h x w x 3 image, got " + shape_string(image.shape()));
  }
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// PPM

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* field) {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw FormatError(std::string("PPM ") + field + " too large");
    }
    if (digits == 0) throw FormatError(std::string("PPM header: missing ") + field);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("not a binary PPM (P6) file");
  pos = 2;
  const std::size_t w = number("width"), h = number("height"), maxval = number("maxval");
  if (w == 0 || h == 0) throw FormatError("PPM has a zero dimension");
  if (w * h > kMaxPixels) throw FormatError("PPM dimensions too large");
  if (maxval == 0 || maxval > 255) throw FormatError("PPM maxval must be in 1..255 (8-bit only)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PPM header not terminated");
  ++pos;
  const std::size_t n = w * h * 3;
  if (bytes.size() - pos < n) throw FormatError("PPM pixel data truncated");
  Tensor t({h, w, 3});
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
  }
  return t;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  require_rgb(image);
  const std::string header =
      "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (float v : image.data()) out.push_back(quantize(v));
  return out;
}

// ---------------------------------------------------------------------------
// PNG

Tensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError(std::string("PNG decode failed: ") + img.message);
  }
  if (img.width == 0 || img.height == 0 ||
      static_cast<std::size_t>(img.width) * img.height > kMaxPixels) {
    png_image_free(&img);
    throw FormatError("PNG dimensions out of range");
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw FormatError("PNG decode failed: " + msg);
  }
  Tensor t({img.height, img.width, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(buf[i]) / 255.0f;
  return t;
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  require_rgb(image);
  std::vector<std::uint8_t> pixels(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) pixels[i] = quantize(image[i]);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

Tensor load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  try {
    if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes);
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    write_file(path, encode_png(image));
  } else if (ext == ".ppm") {
    write_file(path, encode_ppm(image));
  } else {
    throw FormatError("unsupported image extension '" + ext + "' (use .ppm or .png)");
  }
}

Tensor resize_bilinear(const Tensor& image, std::size_t target_h, std::size_t target_w) {
  if (image.rank() != 3) throw ShapeError("resize_bilinear expects an h x w x c image");
  if (target_h < 1 || target_w < 1) throw ConfigError("resize target must be >= 1");
  const std::size_t h = image.height(), w = image.width(), c = image.channels();
  if (target_h == h && target_w == w) return image;
  auto coord = [](std::size_t i, std::size_t src, std::size_t dst) {
    if (dst == 1) return (static_cast<double>(src) - 1.0) / 2.0;
    return static_cast<double>(i) * (static_cast<double>(src) - 1.0) / (static_cast<double>(dst) - 1.0);
  };
  Tensor out({target_h, target_w, c});
  for (std::size_t y = 0; y < target_h; ++y) {
    const double sy = coord(y, h, target_h);
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1), y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_w; ++x) {
      const double sx = coord(x, w, target_w);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1), x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1.0 - fx) * image.at(y0, x0, k) + fx * image.at(y0, x1, k);
        const double bottom = (1.0 - fx) * image.at(y1, x0, k) + fx * image.at(y1, x1, k);
        out.at(y, x, k) = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

bool checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return false;
  out = a * b;
  return true;
}

void write_payload(ByteWriter& w, const Tensor& t) {
  w.u64(static_cast<std::uint64_t>(t.size()) * 4);
  for (float v : t.data()) w.f32(v);
}

}  // namespace

std::vector<std::uint8_t> encode_weight_file(const WeightFile& file) {
  ByteWriter w;
  w.bytes("SSWP");
  w.u32(kWeightFileVersion);
  w.u8(static_cast<std::uint8_t>(file.role));
  w.str(file.name);
  w.str(file.paired_encoder);
  for (float m : file.preprocess.mean) w.f32(m);
  for (float s : file.preprocess.scale) w.f32(s);
  w.u32(static_cast<std::uint32_t>(file.layers.size()));
  for (const auto& layer : file.layers) {
    const LayerSpec& s = layer.spec;
    check_params(s, layer.params);
    w.u8(static_cast<std::uint8_t>(s.kind));
    const bool factor_layer = s.kind == LayerKind::MaxPool || s.kind == LayerKind::NNUpsample;
    w.u32(static_cast<std::uint32_t>(factor_layer ? s.factor : s.filter));
    w.u32(static_cast<std::uint32_t>(factor_layer ? s.factor : (s.has_params() ? s.stride : 0)));
    w.u32(static_cast<std::uint32_t>(s.padding));
    w.u32(static_cast<std::uint32_t>(s.in_channels));
    w.u32(static_cast<std::uint32_t>(s.out_channels));
    if (s.has_params()) {
      write_payload(w, layer.params.weights);
      write_payload(w, layer.params.bias);
    } else {
      w.u64(0);
      w.u64(0);
    }
  }
  return w.take();
}

WeightFile decode_weight_file(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "weight file");
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "SSWP", 4) != 0) throw FormatError("weight file: bad magic (expected SSWP)");
  r.u32("magic");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightFileVersion) {
    throw FormatError("weight file: unsupported version " + std::to_string(version));
  }
  WeightFile file;
  const std::uint8_t role = r.u8("role");
  if (role > 1) throw FormatError("weight file: unknown role " + std::to_string(role));
  file.role = static_cast<NetworkRole>(role);
  file.name = r.str("name");
  file.paired_encoder = r.str("paired encoder name");
  for (auto& m : file.preprocess.mean) m = r.f32("preprocess mean");
  for (auto& s : file.preprocess.scale) s = r.f32("preprocess scale");
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(file.preprocess.mean[c]) || !std::isfinite(file.preprocess.scale[c])) {
      throw FormatError("weight file: non-finite preprocessing value");
    }
  }
  const std::uint32_t count = r.u32("layer count");
  constexpr std::size_t kMinLayerBytes = 1 + 5 * 4 + 2 * 8;
  if (count > r.remaining() / kMinLayerBytes) {
    throw FormatError("weight file: layer count " + std::to_string(count) + " exceeds file size");
  }
  file.layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "layer " + std::to_string(i);
    const std::uint8_t tag = r.u8(where + " kind");
    if (tag > static_cast<std::uint8_t>(LayerKind::NNUpsample)) {
      throw FormatError("weight file: " + where + " has unknown kind tag " + std::to_string(tag));
    }
    LayerSpec s;
    s.kind = static_cast<LayerKind>(tag);
    const std::uint32_t filter = r.u32(where + " filter"), stride = r.u32(where + " stride");
    const std::uint32_t padding = r.u32(where + " padding");
    const std::uint32_t in = r.u32(where + " in_channels"), out = r.u32(where + " out_channels");
    switch (s.kind) {
      case LayerKind::Conv:
      case LayerKind::TransposedConv:
        if (filter < 1 || stride < 1 || in < 1 || out < 1) {
          throw FormatError("weight file: " + where + " has a zero filter, stride or channel count");
        }
        s.filter = filter;
        s.stride = stride;
        s.padding = padding;
        s.in_channels = in;
        s.out_channels = out;
        break;
      case LayerKind::MaxPool:
      case LayerKind::NNUpsample:
        if (filter < 1 || stride != filter || padding || in || out) {
          throw FormatError("weight file: " + where + " has an invalid factor record");
        }
        s.factor = filter;
        break;
      default:
        if (filter || stride || padding || in || out) {
          throw FormatError("weight file: " + where + " has spec fields for a parameter-free layer");
        }
        break;
    }
    std::uint64_t weight_elems = 0, bias_elems = 0;
    if (s.has_params()) {
      std::uint64_t ff = 0, ffi = 0;
      if (!checked_mul(filter, filter, ff) || !checked_mul(ff, in, ffi) || !checked_mul(ffi, out, weight_elems) ||
          weight_elems > std::numeric_limits<std::uint64_t>::max() / 4) {
        throw FormatError("weight file: " + where + " spec overflows");
      }
      bias_elems = out;
    }
    Layer<float> layer{s, {}};
    const std::uint64_t weight_len = r.u64(where + " weight length");
    if (weight_len != weight_elems * 4) {
      throw FormatError("weight file: " + where + " weight length " + std::to_string(weight_len) +
                        " does not match spec (" + std::to_string(weight_elems * 4) + " bytes)");
    }
    r.need(weight_len, where + " weights");
    std::vector<float> weights(weight_elems);
    for (auto& v : weights) v = r.f32(where + " weights");
    const std::uint64_t bias_len = r.u64(where + " bias length");
    if (bias_len != bias_elems * 4) {
      throw FormatError("weight file: " + where + " bias length " + std::to_string(bias_len) +
                        " does not match spec (" + std::to_string(bias_elems * 4) + " bytes)");
    }
    r.need(bias_len, where + " bias");
    std::vector<float> bias(bias_elems);
    for (auto& v : bias) v = r.f32(where + " bias");
    const auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(weights.begin(), weights.end(), finite) || !std::all_of(bias.begin(), bias.end(), finite)) {
      throw FormatError("weight file: " + where + " contains non-finite parameters");
    }
    if (s.has_params()) {
      layer.params.weights = Tensor(s.weight_shape(), std::move(weights));
      layer.params.bias = Tensor(s.bias_shape(), std::move(bias));
    }
    file.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0) {
    throw FormatError("weight file: " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return file;
}

void save_weights(const std::filesystem::path& path, const WeightFile& file) {
  write_file(path, encode_weight_file(file));
}

WeightFile load_weights(const std::filesystem::path& path) {
  try {
    return decode_weight_file(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

WeightFile to_weight_file(const Encoder& encoder) {
  return WeightFile{NetworkRole::Encoder, encoder.name, "", encoder.preprocess, encoder.layers};
}

Encoder encoder_from_weights(const WeightFile& file) {
  if (file.role != NetworkRole::Encoder) {
    throw FormatError("weight file '" + file.name + "' holds an inverse network, not an encoder");
  }
  Encoder e{file.name, file.preprocess, file.layers};
  try {
    e.validate();
  } catch (const ConfigError& err) {
    throw FormatError(err.what());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Datasets

DatasetListing enumerate_dataset(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw InputError("dataset folder '" + root.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  DatasetListing listing;
  for (const auto& f : files) {
    try {
      load_image(f);
      listing.images.push_back(f);
    } catch (const Error&) {
      ++listing.skipped;
    }
  }
  if (listing.skipped) {
    std::cerr << "warning: skipped " << listing.skipped << " undecodable file(s) in '" << root.string() << "'\n";
  }
  return listing;
}

std::vector<Tensor> load_dataset(const DatasetListing& listing, std::size_t size) {
  std::vector<Tensor> images;
  images.reserve(listing.images.size());
  for (const auto& p : listing.images) images.push_back(resize_bilinear(load_image(p), size, size));
  return images;
}

// ---------------------------------------------------------------------------
// Tensor files

std::vector<std::uint8_t> encode_tensor_file(const Tensor& t) {
  ByteWriter w;
  w.bytes("SSTN");
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.u64(e);
  for (float v : t.data()) w.f32(v);
  return w.take();
}

Tensor decode_tensor_file(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "tensor file");
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "SSTN", 4) != 0) throw FormatError("tensor file: bad magic");
  r.u32("magic");
  const std::uint32_t rank = r.u32("rank");
  if (rank < 1 || rank > 4) throw FormatError("tensor file: rank out of range");
  Shape shape(rank);
  std::uint64_t n = 1;
  for (auto& e : shape) {
    const std::uint64_t v = r.u64("extent");
    if (v == 0 || !checked_mul(n, v, n) || n > r.remaining()) throw FormatError("tensor file: bad extent");
    e = static_cast<std::size_t>(v);
  }
  r.need(n * 4, "data");
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32("data");
  if (r.remaining()) throw FormatError("tensor file: trailing bytes");
  return Tensor(shape, std::move(data));
}

}  // namespace styleswap
