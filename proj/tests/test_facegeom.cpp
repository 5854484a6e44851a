#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "occage/facegeom/facegeom.hpp"

using namespace occage;
using namespace occage::fg;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("occage_fg_" + name);
}

Image gradient_image(std::size_t h, std::size_t w) {
  Image img(h, w, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>((x * 7 + y) % 256);
      img.at(y, x, 1) = static_cast<std::uint8_t>((y * 5) % 256);
      img.at(y, x, 2) = static_cast<std::uint8_t>((x * y) % 256);
    }
  return img;
}

LandmarkSet eyes_at(Point2 l, Point2 r) {
  LandmarkSet lm;
  for (auto& p : lm.points) p = {(l.x + r.x) / 2, (l.y + r.y) / 2 + 30};
  lm[kLeftEyeOuter] = l;
  lm[kRightEyeOuter] = r;
  lm[kMouthLeft] = {l.x + 10, l.y + 60};
  lm[kMouthRight] = {r.x - 10, r.y + 60};
  return lm;
}

}  // namespace

TEST(RotationAngle, Examples) {
  EXPECT_DOUBLE_EQ(rotation_angle({100, 100}, {200, 100}).degrees, 0.0);
  EXPECT_NEAR(rotation_angle({100, 100}, {200, 200}).degrees, 45.0, 1e-12);
  EXPECT_NEAR(rotation_angle({100, 100}, {100, 200}).degrees, 90.0, 1e-12);
}

TEST(RotationAngle, CoincidentEyesFlagged) {
  const auto a = rotation_angle({5, 5}, {5, 5});
  EXPECT_EQ(a.degrees, 0.0);
  EXPECT_TRUE(a.degenerate);
  EXPECT_FALSE(rotation_angle({0, 0}, {1, 0}).degenerate);
  EXPECT_THROW(rotation_angle({NAN, 0}, {1, 0}), ValidationError);
}

TEST(RotationAngle, AntisymmetricUnderMirroredSwap) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Point2 a{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Point2 b{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    // Mirroring the face swaps which eye is "left".
    const Point2 ma{-b.x, b.y}, mb{-a.x, a.y};
    EXPECT_NEAR(std::remainder(rotation_angle(a, b).degrees + rotation_angle(ma, mb).degrees, 360.0), 0.0, 1e-9);
    // A bare swap reverses the eye vector.
    EXPECT_NEAR(std::abs(std::remainder(rotation_angle(b, a).degrees - rotation_angle(a, b).degrees, 360.0)), 180.0,
                1e-9);
  }
}

TEST(Affine, InverseAndComposition) {
  const auto r = Affine2::rotation_about({10, 20}, 33.0);
  const auto t = Affine2::translation(3, -4).after(Affine2::scaling(2, 0.5)).after(r);
  const auto inv = t.inverse();
  const Point2 p{7.5, -2.25};
  const Point2 q = inv.apply(t.apply(p));
  EXPECT_NEAR(q.x, p.x, 1e-12);
  EXPECT_NEAR(q.y, p.y, 1e-12);
  const Point2 c = r.apply({10, 20});
  EXPECT_NEAR(c.x, 10, 1e-12);
  EXPECT_NEAR(c.y, 20, 1e-12);
}

TEST(Align, LevelEyesUseIdentityRotation) {
  const auto face = synthetic_face(11, 96);
  const auto& lm = face.landmarks;
  ASSERT_EQ(lm[kLeftEyeOuter].y, lm[kRightEyeOuter].y);
  const auto out = align_and_crop(face.image, lm, 64);
  EXPECT_EQ(out.angle.degrees, 0.0);
  EXPECT_EQ(out.transform.b, 0.0);
  EXPECT_EQ(out.transform.d, 0.0);
  EXPECT_EQ(out.image.height, 64u);
  EXPECT_EQ(out.image.width, 64u);
}

TEST(Align, RotatedFaceIsLevelledAfterAlignment) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto face = synthetic_face(seed, 128);
    const Point2 center{64, 64};
    const auto rot = Affine2::rotation_about(center, 30.0);
    const Image tilted = warp_affine(face.image, rot, 128, 128);
    const LandmarkSet tilted_lm = transform_landmarks(face.landmarks, rot);
    EXPECT_NEAR(rotation_angle(tilted_lm[36], tilted_lm[45]).degrees, 30.0, 1e-9);

    const auto out = align_and_crop(tilted, tilted_lm, 64);
    EXPECT_NEAR(out.angle.degrees, 30.0, 1e-9);
    EXPECT_LE(std::abs(out.landmarks[kRightEyeOuter].y - out.landmarks[kLeftEyeOuter].y), 0.5);
    EXPECT_GT(out.landmarks[kRightEyeOuter].x, out.landmarks[kLeftEyeOuter].x);
  }
}

TEST(Align, LandmarkRoundTripThroughInverse) {
  const auto face = synthetic_face(5, 128);
  const auto rot = Affine2::rotation_about({60, 70}, -17.0);
  const auto lm = transform_landmarks(face.landmarks, rot);
  const auto out = align_and_crop(warp_affine(face.image, rot, 128, 128), lm, 80);
  const auto back = transform_landmarks(out.landmarks, out.transform.inverse());
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_NEAR(back[i].x, lm[i].x, 0.5);
    EXPECT_NEAR(back[i].y, lm[i].y, 0.5);
  }
}

TEST(Align, LandmarksStayInsideOutputWhenNotClamped) {
  const auto face = synthetic_face(9, 128);
  const auto out = align_and_crop(face.image, face.landmarks, 64);
  for (const auto& p : out.landmarks.points) {
    EXPECT_GE(p.x, -0.5);
    EXPECT_LE(p.x, 63.5);
    EXPECT_GE(p.y, -0.5);
    EXPECT_LE(p.y, 63.5);
  }
}

TEST(Align, Errors) {
  const Image img = gradient_image(32, 32);
  LandmarkSet flat;
  for (auto& p : flat.points) p = {10, 10};
  EXPECT_THROW(align_and_crop(img, flat, 32), ValidationError);
  EXPECT_THROW(align_and_crop(img, eyes_at({5, 5}, {20, 5}), 8), ValidationError);
  LandmarkSet bad = eyes_at({5, 5}, {20, 5});
  bad[3].x = NAN;
  EXPECT_THROW(align_and_crop(img, bad, 32), ValidationError);
}

TEST(OcclusionRect, EyeExample) {
  const auto lm = eyes_at({80, 100}, {170, 104});
  EXPECT_EQ(occlusion_rect(lm, OcclusionSpec::eyes(), 256, 256), (Rect{55, 80, 195, 124}));
}

TEST(OcclusionRect, ZeroPadsGiveTightBox) {
  const auto lm = eyes_at({80, 100}, {170, 104});
  EXPECT_EQ(occlusion_rect(lm, {Region::kEyes, 0, 0}, 256, 256), (Rect{80, 100, 170, 104}));
  EXPECT_EQ(occlusion_rect(lm, {Region::kMouth, 0, 0}, 256, 256), (Rect{90, 160, 160, 164}));
}

TEST(OcclusionRect, ClampsAtBorders) {
  const auto lm = eyes_at({10, 5}, {240, 9});
  EXPECT_EQ(occlusion_rect(lm, OcclusionSpec::eyes(), 256, 256), (Rect{0, 0, 255, 29}));
}

TEST(OcclusionRect, Errors) {
  const auto lm = eyes_at({400, 400}, {450, 410});
  EXPECT_THROW(occlusion_rect(lm, OcclusionSpec::eyes(), 256, 256), ValidationError);
  EXPECT_THROW(occlusion_rect(eyes_at({1, 1}, {9, 1}), {Region::kEyes, -1, 0}, 32, 32), ValidationError);
}

TEST(OcclusionRect, TranslationEquivariantUnclamped) {
  Rng rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto lm = eyes_at({rng.uniform(0, 200), rng.uniform(0, 200)}, {rng.uniform(0, 200), rng.uniform(0, 200)});
    const long dx = static_cast<long>(rng.below(101)) - 50, dy = static_cast<long>(rng.below(101)) - 50;
    LandmarkSet shifted = lm;
    for (auto& p : shifted.points) p = {p.x + static_cast<double>(dx), p.y + static_cast<double>(dy)};
    const OcclusionSpec spec = rng.bernoulli(0.5) ? OcclusionSpec::eyes() : OcclusionSpec::mouth();
    const Rect a = occlusion_rect_unclamped(lm, spec), b = occlusion_rect_unclamped(shifted, spec);
    EXPECT_EQ(b, (Rect{a.x0 + dx, a.y0 + dy, a.x1 + dx, a.y1 + dy}));
  }
}

TEST(OcclusionSpec, ScalingAndParsing) {
  const auto s = OcclusionSpec::mouth().scaled_to(64);
  EXPECT_DOUBLE_EQ(s.pad_x, 10.0);
  EXPECT_DOUBLE_EQ(s.pad_y, 13.75);
  EXPECT_EQ(parse_region("eyes"), Region::kEyes);
  EXPECT_EQ(parse_region("mouth"), Region::kMouth);
  EXPECT_THROW(parse_region("nose"), ValidationError);
  EXPECT_DOUBLE_EQ(OcclusionSpec::mouth_utk().pad_x, 45.0);
}

TEST(ApplyOcclusion, FullImage) {
  const Image img = gradient_image(8, 6);
  const auto o = apply_occlusion(img, {0, 0, 5, 7});
  for (auto v : o.image.data) EXPECT_EQ(v, 255);
  for (auto v : o.mask.data) EXPECT_EQ(v, 255);
}

TEST(ApplyOcclusion, SinglePixel) {
  Image img(5, 5, 3, 10);
  const auto o = apply_occlusion(img, {2, 3, 2, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t white = 0;
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) white += o.image.at(y, x, c) == 255;
    EXPECT_EQ(white, 1u);
  }
  EXPECT_EQ(o.image.at(3, 2, 0), 255);
  EXPECT_EQ(o.mask.occluded_count(), 1u);
}

TEST(ApplyOcclusion, MaskedRegionAndBookkeeping) {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    const Image img = gradient_image(40, 50);
    const Image before = img;
    const long x0 = static_cast<long>(rng.below(50)), y0 = static_cast<long>(rng.below(40));
    const Rect r{x0, y0, x0 + static_cast<long>(rng.below(50 - x0)), y0 + static_cast<long>(rng.below(40 - y0))};
    const auto o = apply_occlusion(img, r);
    EXPECT_EQ(img, before);
    EXPECT_TRUE(o.mask.is_binary());
    EXPECT_EQ(o.mask.height, img.height);
    EXPECT_EQ(o.mask.width, img.width);
    std::size_t sum = 0;
    for (auto v : o.mask.data) sum += v;
    EXPECT_EQ(sum / 255, static_cast<std::size_t>(r.area()));
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 50; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          if (o.mask.at(y, x) == 255)
            EXPECT_EQ(o.image.at(y, x, c), 255);
          else
            EXPECT_EQ(o.image.at(y, x, c), img.at(y, x, c));
        }
  }
  EXPECT_THROW(apply_occlusion(gradient_image(4, 4), {0, 0, 4, 3}), ValidationError);
  EXPECT_THROW(apply_occlusion(gradient_image(4, 4), {2, 0, 1, 3}), ValidationError);
}

TEST(Synthetic, Deterministic) {
  const auto a = synthetic_face(77, 64), b = synthetic_face(77, 64);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.landmarks, b.landmarks);
  EXPECT_EQ(a.age, b.age);
  EXPECT_NE(synthetic_face(78, 64).image, a.image);
  EXPECT_THROW(synthetic_face(1, 63), ValidationError);
}

TEST(Synthetic, AgeInRangeAndLandmarksFinite) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto f = synthetic_face(s, 64);
    EXPECT_GE(f.age, 0.0);
    EXPECT_LE(f.age, 69.0);
    EXPECT_TRUE(f.landmarks.finite());
    EXPECT_EQ(f.wrinkles, wrinkle_count(f.age));
  }
}

TEST(Synthetic, EyeCornersLieOnSclera) {
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::size_t size : {128u, 256u}) {
      const auto f = synthetic_face(s, size);
      for (auto idx : {kLeftEyeOuter, kRightEyeOuter}) {
        const auto x = static_cast<std::size_t>(std::lround(f.landmarks[idx].x));
        const auto y = static_cast<std::size_t>(std::lround(f.landmarks[idx].y));
        for (std::size_t c = 0; c < 3; ++c) EXPECT_GE(f.image.at(y, x, c), 225) << "seed " << s << " idx " << idx;
      }
    }
}

TEST(Synthetic, WrinkleCountMonotoneInAge) {
  std::size_t prev = 0;
  for (int a = 0; a <= 69; ++a) {
    const auto n = wrinkle_count(a);
    EXPECT_GE(n, prev);
    prev = n;
  }
  EXPECT_EQ(wrinkle_count(0), 1u);
  EXPECT_EQ(wrinkle_count(69), 12u);
  EXPECT_LT(wrinkle_count(10), wrinkle_count(40));
  const auto young = synthetic_face(4, 64, 5.0), old = synthetic_face(4, 64, 65.0);
  EXPECT_EQ(young.landmarks, old.landmarks);
  EXPECT_LT(young.wrinkles, old.wrinkles);
}

TEST(Resize, HalvingAveragesBlocks) {
  Image img(4, 4, 1);
  for (std::size_t i = 0; i < 16; ++i) img.data[i] = static_cast<std::uint8_t>(i * 10);
  const Image half = resize(img, 2, 2);
  EXPECT_EQ(half.at(0, 0), 25);   // (0+10+40+50)/4
  EXPECT_EQ(half.at(1, 1), 125);  // (100+110+140+150)/4
  EXPECT_EQ(resize(img, 4, 4), img);
}

TEST(Resize, MaskAnyOccludedWins) {
  Mask m(4, 4);
  m.at(3, 0) = 255;
  const Mask r = resize_mask(m, 2, 2);
  EXPECT_EQ(r.at(1, 0), 255);
  EXPECT_EQ(r.occluded_count(), 1u);
}

TEST(ImageIo, PngRoundTrip) {
  const Image img = gradient_image(13, 17);
  const auto p = temp_path("rgb.png");
  write_png(p.string(), img);
  EXPECT_EQ(read_image(p.string()), img);

  Mask m(9, 7);
  m.at(2, 3) = 255;
  const auto pm = temp_path("mask.png");
  write_png(pm.string(), m);
  EXPECT_EQ(read_mask(pm.string()), m);
  std::filesystem::remove(p);
  std::filesystem::remove(pm);
}

TEST(ImageIo, JpegDecodes) {
  const auto p = temp_path("flat.jpg");
  {
    std::FILE* f = std::fopen(p.string().c_str(), "wb");
    ASSERT_NE(f, nullptr);
    jpeg_compress_struct cinfo{};
    jpeg_error_mgr err{};
    cinfo.err = jpeg_std_error(&err);
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, f);
    cinfo.image_width = 16;
    cinfo.image_height = 8;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, 95, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    std::vector<std::uint8_t> row(16 * 3, 128);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW r = row.data();
      jpeg_write_scanlines(&cinfo, &r, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    std::fclose(f);
  }
  const Image img = read_image(p.string());
  EXPECT_EQ(img.height, 8u);
  EXPECT_EQ(img.width, 16u);
  EXPECT_EQ(img.channels, 3u);
  for (auto v : img.data) EXPECT_NEAR(v, 128, 2);
  std::filesystem::remove(p);
}

TEST(ImageIo, Errors) {
  EXPECT_THROW(read_png("/nonexistent/dir/x.png"), IoError);
  const auto p = temp_path("garbage.png");
  std::ofstream(p) << "definitely not a png";
  EXPECT_THROW(read_png(p.string()), IoError);
  const auto j = temp_path("garbage.jpg");
  std::ofstream(j) << "definitely not a jpeg";
  EXPECT_THROW(read_image(j.string()), IoError);
  std::filesystem::remove(p);
  std::filesystem::remove(j);
}
