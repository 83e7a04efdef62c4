#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "styleswap/inverse_net.hpp"
#include "styleswap/io.hpp"
#include "styleswap/synthetic.hpp"
#include "test_support.hpp"

using namespace styleswap;
using styleswap::testing::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

/// Offset of layer 0's weight-length field in an encoded file.
std::size_t first_weight_length_offset(const WeightFile& f) {
  return 4 + 4 + 1 + 4 + f.name.size() + 4 + f.paired_encoder.size() + 24 + 4 + 1 + 20;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Ppm, DecodesTwoPixels) {
  auto bytes = bytes_of("P6\n2 1\n255\n");
  for (std::uint8_t b : {255, 0, 0, 0, 0, 255}) bytes.push_back(b);
  const auto img = decode_ppm(bytes);
  EXPECT_EQ(img, Tensor({1, 2, 3}, std::vector<float>{1, 0, 0, 0, 0, 1}));
}

TEST(Ppm, HeaderCommentsAndSmallMaxval) {
  auto bytes = bytes_of("P6 # comment\n1 1 # another\n15\n");
  for (std::uint8_t b : {15, 5, 0}) bytes.push_back(b);
  const auto img = decode_ppm(bytes);
  EXPECT_FLOAT_EQ(img[0], 1.0f);
  EXPECT_FLOAT_EQ(img[1], 5.0f / 15.0f);
}

TEST(Ppm, RejectsBadInput) {
  EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n0 0 0\n")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 2\n255\nabc")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 2\n65535\n")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n0 2\n255\n")), FormatError);
  EXPECT_THROW(decode_ppm(bytes_of("")), FormatError);
}

TEST(Images, RoundTripWithinQuantization) {
  TempDir dir("img");
  Rng rng(1);
  const auto img = random_uniform<float>({13, 17, 3}, 0.f, 1.f, rng);
  for (const char* name : {"a.ppm", "a.png", "b.PNG"}) {
    save_image(dir / name, img);
    const auto back = load_image(dir / name);
    ASSERT_EQ(back.shape(), img.shape());
    EXPECT_LE(rmse(back, img), 1.0 / 255);
    EXPECT_LE(max_abs_diff(back, img), 0.5 / 255 + 1e-6);
    // Second trip is exact.
    save_image(dir / name, back);
    EXPECT_EQ(load_image(dir / name), back);
  }
}

TEST(Images, SaveClamps) {
  const Tensor img({1, 2, 3}, std::vector<float>{-0.5f, 2.f, 0.5f, 1.f, 0.f, 0.25f});
  const auto back = decode_ppm(encode_ppm(img));
  EXPECT_EQ(back[0], 0.0f);
  EXPECT_EQ(back[1], 1.0f);
  EXPECT_FLOAT_EQ(back[2], 128.0f / 255);
}

TEST(Images, NonImageRejected) {
  TempDir dir("bad");
  const auto p = dir / "x.png";
  std::ofstream(p) << "definitely not an image";
  EXPECT_THROW(load_image(p), FormatError);
  EXPECT_THROW(load_image(dir / "missing.png"), InputError);
  EXPECT_THROW(save_image(dir / "x.jpg", Tensor::zeros({2, 2, 3})), FormatError);
}

TEST(Images, TruncatedPng) {
  auto png = encode_png(Tensor::full({8, 8, 3}, 0.5f));
  png.resize(png.size() / 2);
  EXPECT_THROW(decode_png(png), FormatError);
}

TEST(Resize, IdentityWhenSameSize) {
  Rng rng(2);
  const auto img = random_uniform<float>({7, 5, 3}, 0.f, 1.f, rng);
  EXPECT_EQ(resize_bilinear(img, 7, 5), img);
}

TEST(Resize, CheckerboardToOnePixel) {
  // 2x2 checkerboard, single output samples the centre (0.5, 0.5): the mean
  // of the four corners.
  const Tensor img({2, 2, 3}, std::vector<float>{1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1});
  const auto out = resize_bilinear(img, 1, 1);
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Resize, ConstantStaysConstant) {
  const auto out = resize_bilinear(Tensor::full({9, 4, 3}, 0.3f), 17, 23);
  for (float v : out.data()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Resize, CornersAlign) {
  Rng rng(3);
  const auto img = random_uniform<float>({6, 9, 3}, 0.f, 1.f, rng);
  const auto out = resize_bilinear(img, 11, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_FLOAT_EQ(out.at(0, 0, c), img.at(0, 0, c));
    EXPECT_FLOAT_EQ(out.at(10, 3, c), img.at(5, 8, c));
  }
  // Linear ramps are reproduced exactly.
  Tensor ramp({1, 5, 3});
  for (std::size_t x = 0; x < 5; ++x)
    for (std::size_t c = 0; c < 3; ++c) ramp.at(0, x, c) = static_cast<float>(x);
  const auto r = resize_bilinear(ramp, 1, 9);
  for (std::size_t x = 0; x < 9; ++x) EXPECT_FLOAT_EQ(r.at(0, x, 0), 0.5f * x);
  EXPECT_THROW(resize_bilinear(img, 0, 3), ConfigError);
}

TEST(WeightFile, RoundTripIsByteIdentical) {
  for (const auto& file : {to_weight_file(build_tiny(8, 1)), to_weight_file(build_identity()),
                           to_weight_file(build_inverse_tiny(build_tiny(8, 1), 6, 2)),
                           to_weight_file(build_truncated_vgg19(3))}) {
    const auto bytes = encode_weight_file(file);
    const auto back = decode_weight_file(bytes);
    EXPECT_EQ(back, file);
    EXPECT_EQ(encode_weight_file(back), bytes);
  }
}

TEST(WeightFile, SaveLoadSaveOnDisk) {
  TempDir dir("wf");
  auto e = build_tiny(4, 5);
  e.preprocess.mean = {0.485f, 0.456f, 0.406f};
  e.preprocess.scale = {4.3668f, 4.4643f, 4.4444f};
  save_weights(dir / "a.sswp", to_weight_file(e));
  const auto loaded = load_weights(dir / "a.sswp");
  save_weights(dir / "b.sswp", loaded);
  EXPECT_EQ(read_file(dir / "a.sswp"), read_file(dir / "b.sswp"));
  EXPECT_EQ(encoder_from_weights(loaded), e);
}

TEST(WeightFile, HeaderLayout) {
  WeightFile f;
  f.name = "ab";
  f.layers.push_back({LayerSpec::max_pool(2), {}});
  const auto b = encode_weight_file(f);
  ASSERT_GE(b.size(), 12u);
  EXPECT_EQ(std::memcmp(b.data(), "SSWP", 4), 0);
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[8], 0);  // role
  EXPECT_EQ(b[9], 2);  // name length, little-endian
  EXPECT_EQ(b[13], 'a');
  // magic, version, role, name, paired name, 6 floats, count, one record.
  EXPECT_EQ(b.size(), 4 + 4 + 1 + 4 + 2 + 4 + 24 + 4 + (1 + 20 + 8 + 8));
}

TEST(WeightFile, UnsupportedVersion) {
  auto b = encode_weight_file(to_weight_file(build_tiny(2, 1)));
  b[4] = kWeightFileVersion + 1;
  EXPECT_NE(error_of([&] { decode_weight_file(b); }).find("unsupported version"), std::string::npos);
}

TEST(WeightFile, CorruptedLengthNamesLayer) {
  const auto f = to_weight_file(build_tiny(2, 1));
  auto b = encode_weight_file(f);
  b[first_weight_length_offset(f)] ^= 0x04;
  const auto msg = error_of([&] { decode_weight_file(b); });
  EXPECT_NE(msg.find("layer 0"), std::string::npos) << msg;
}

TEST(WeightFile, TruncationAndTrailingBytes) {
  const auto b = encode_weight_file(to_weight_file(build_tiny(2, 1)));
  for (std::size_t n : {0ul, 3ul, 10ul, b.size() / 2, b.size() - 1}) {
    EXPECT_THROW(decode_weight_file(std::span(b).first(n)), FormatError) << n;
  }
  auto extra = b;
  extra.push_back(0);
  EXPECT_THROW(decode_weight_file(extra), FormatError);
  auto magic = b;
  magic[0] = 'X';
  EXPECT_THROW(decode_weight_file(magic), FormatError);
}

TEST(WeightFile, NonFiniteRejected) {
  auto e = build_tiny(2, 1);
  e.layers[0].params.weights[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(decode_weight_file(encode_weight_file(to_weight_file(e))), FormatError);
}

TEST(WeightFile, FuzzedBytesOnlyRaiseFormatErrors) {
  const auto base = encode_weight_file(to_weight_file(build_inverse_tiny(build_tiny(3, 1), 4, 2)));
  Rng rng(2024);
  std::size_t decoded = 0;
  for (int i = 0; i < 1000; ++i) {
    auto b = base;
    switch (rng.below(4)) {
      case 0:
        for (std::size_t k = 0, n = 1 + rng.below(8); k < n; ++k) b[rng.below(b.size())] = rng.next_u64() & 0xff;
        break;
      case 1: b.resize(rng.below(b.size())); break;
      case 2:
        for (std::size_t k = 0, n = 1 + rng.below(16); k < n; ++k) b.insert(b.begin() + rng.below(b.size()), 0xff);
        break;
      default: {
        const std::size_t at = rng.below(b.size() - 8);
        for (std::size_t k = 0; k < 8; ++k) b[at + k] = static_cast<std::uint8_t>(rng.next_u64());
      }
    }
    try {
      decode_weight_file(b);
      ++decoded;
    } catch (const FormatError&) {
    }
  }
  EXPECT_LT(decoded, 1000u);
}

TEST(WeightFile, RoleChecked) {
  EXPECT_THROW(encoder_from_weights(to_weight_file(build_inverse_tiny(build_tiny(3, 1)))), FormatError);
}

TEST(TensorFile, RoundTrip) {
  Rng rng(4);
  const auto t = random_uniform<float>({3, 5, 7}, -1.f, 1.f, rng);
  EXPECT_EQ(decode_tensor_file(encode_tensor_file(t)), t);
  auto b = encode_tensor_file(t);
  b.pop_back();
  EXPECT_THROW(decode_tensor_file(b), FormatError);
}

TEST(Dataset, LexicographicAndStable) {
  TempDir dir("ds");
  Rng rng(5);
  for (const char* n : {"b.png", "a.ppm", "c.png", "B.ppm"}) save_image(dir / n, synthetic_natural(8, 8, rng));
  const auto l1 = enumerate_dataset(dir.path());
  const auto l2 = enumerate_dataset(dir.path());
  EXPECT_EQ(l1.images, l2.images);
  ASSERT_EQ(l1.images.size(), 4u);
  std::vector<std::string> names;
  for (const auto& p : l1.images) names.push_back(p.filename().string());
  EXPECT_EQ(names, (std::vector<std::string>{"B.ppm", "a.ppm", "b.png", "c.png"}));
  EXPECT_EQ(l1.skipped, 0u);
}

TEST(Dataset, InvalidFilesSkippedWithCount) {
  TempDir dir("mixed");
  Rng rng(6);
  save_image(dir / "good.png", synthetic_painting(8, 8, rng));
  std::ofstream(dir / "notes.txt") << "hello";
  std::ofstream(dir / "broken.png") << "\x89PNG garbage";
  std::filesystem::create_directory(dir / "subdir");
  const auto l = enumerate_dataset(dir.path());
  EXPECT_EQ(l.images.size(), 1u);
  EXPECT_EQ(l.skipped, 2u);
  const auto imgs = load_dataset(l, 16);
  ASSERT_EQ(imgs.size(), 1u);
  EXPECT_EQ(imgs[0].shape(), (Shape{16, 16, 3}));
}

TEST(Dataset, EmptyAndMissing) {
  TempDir dir("empty");
  EXPECT_TRUE(enumerate_dataset(dir.path()).images.empty());
  EXPECT_THROW(enumerate_dataset(dir / "nope"), InputError);
}
