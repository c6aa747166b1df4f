// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "foldpc/image_codec.hpp"
#include "foldpc/metrics.hpp"

using namespace foldpc;

namespace {

AttributeImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AttributeImage img;
  img.width = w;
  img.height = h;
  for (std::size_t i = 0; i < w * h; ++i)
    img.pixels.push_back({static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())});
  return img;
}

/// Smooth gradient with mild texture: what a mapped attribute image looks like.
AttributeImage smooth_image(std::size_t w, std::size_t h) {
  AttributeImage img;
  img.width = w;
  img.height = h;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      img.pixels.push_back({static_cast<std::uint8_t>(128 + 100 * std::sin(0.2 * c)),
                            static_cast<std::uint8_t>(128 + 90 * std::cos(0.15 * r)),
                            static_cast<std::uint8_t>((r * 4 + c * 3) % 256)});
  return img;
}

}  // namespace

TEST(Lossless, RoundTripIsBitExact) {
  for (auto [w, h] : {std::pair{32, 32}, std::pair{1, 1}, std::pair{17, 5}}) {
    const AttributeImage img = random_image(w, h, w * h);
    const CompressedImage blob = compress(img, CodecChoice::lossless());
    EXPECT_EQ(blob.width, static_cast<std::uint32_t>(w));
    EXPECT_EQ(blob.payload_length(), blob.payload.size());
    const AttributeImage back = decompress(blob);
    EXPECT_EQ(back.pixels, img.pixels);
    EXPECT_EQ(back.width, img.width);
    EXPECT_EQ(back.height, img.height);
  }
}

TEST(Lossless, ConstantImageCompressesBetterThanNoise) {
  AttributeImage flat = random_image(64, 64, 1);
  std::fill(flat.pixels.begin(), flat.pixels.end(), Rgb{10, 200, 30});
  EXPECT_LT(compress(flat, CodecChoice::lossless()).payload.size(),
            compress(random_image(64, 64, 1), CodecChoice::lossless()).payload.size());
}

TEST(Lossless, TruncatedOrCorruptPayloadIsAnError) {
  const CompressedImage blob = compress(random_image(32, 32, 2), CodecChoice::lossless());
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, std::size_t{16}, blob.payload.size() / 2,
                           blob.payload.size() - 1}) {
    CompressedImage cut = blob;
    cut.payload.resize(keep);
    try {
      decompress(cut);
      FAIL() << "kept " << keep << " bytes";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::parse);
    }
  }
  CompressedImage wrong_dims = blob;
  wrong_dims.width = 16;
  EXPECT_THROW(decompress(wrong_dims), Error);
}

TEST(Codec, DefaultSweepAndQpValidation) {
  EXPECT_EQ(default_qp_sweep(), (std::vector<int>{20, 25, 30, 35, 40, 45, 50}));
  EXPECT_THROW(CodecChoice::bpg(52), Error);
  EXPECT_THROW(CodecChoice::bpg(-1), Error);
  EXPECT_EQ(CodecChoice::bpg(51).qp, 51);
}

TEST(ExternalCodec, MissingBinaryIsAnExternalCodecError) {
  ExternalCodec tools;
  tools.encoder = "/nonexistent/bpgenc";
  tools.decoder = "/nonexistent/bpgdec";
  EXPECT_FALSE(tools.available());
  try {
    compress(random_image(8, 8, 1), CodecChoice::bpg(30), tools);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::external_codec);
    EXPECT_NE(std::string(e.what()).find("not found"), std::string::npos);
  }
}

TEST(ExternalCodec, FailingBinaryIsReported) {
  ExternalCodec tools;
  tools.encoder = "false";
  tools.decoder = "false";
  try {
    compress(random_image(8, 8, 1), CodecChoice::bpg(30), tools);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::external_codec);
  }
}

TEST(ExternalCodec, RateDistortionOrderingWhenAvailable) {
  const ExternalCodec tools = fixtures::test_codec();
  if (!tools.available()) GTEST_SKIP() << "external codec not installed (set FOLDPC_BPGENC/FOLDPC_BPGDEC)";
  const AttributeImage img = smooth_image(48, 40);
  const CompressedImage hi = compress(img, CodecChoice::bpg(20), tools);
  const CompressedImage lo = compress(img, CodecChoice::bpg(50), tools);
  const AttributeImage hi_back = decompress(hi, tools);
  const AttributeImage lo_back = decompress(lo, tools);
  EXPECT_EQ(hi_back.width, 48u);
  EXPECT_EQ(hi_back.height, 40u);
  EXPECT_GE(y_psnr(img.pixels, hi_back.pixels), y_psnr(img.pixels, lo_back.pixels));
  EXPECT_GT(hi.payload.size(), lo.payload.size());

  CompressedImage cut = hi;
  cut.payload.resize(cut.payload.size() / 3);
  EXPECT_THROW(decompress(cut, tools), Error);
}

TEST(Metrics, PsnrClosedForms) {
  const std::vector<Rgb> a(100, Rgb{50, 60, 70});
  EXPECT_TRUE(std::isinf(y_psnr(a, a)));
  // +1 on every channel moves luma by exactly 1
  const std::vector<Rgb> b(100, Rgb{51, 61, 71});
  EXPECT_NEAR(y_psnr(a, b), 20.0 * std::log10(255.0), 1e-9);
  EXPECT_NEAR(20.0 * std::log10(255.0), 48.13, 0.01);
  EXPECT_THROW(y_psnr(a, std::vector<Rgb>(99)), Error);
  EXPECT_NEAR(luma(Rgb{255, 255, 255}), 255.0, 1e-9);
}

TEST(Metrics, BitsPerPoint) {
  EXPECT_EQ(bits_per_point(1000, 8000), 1.0);
  EXPECT_EQ(bits_per_point(1000, 16000), 0.5);
  EXPECT_THROW(bits_per_point(10, 0), Error);
}
