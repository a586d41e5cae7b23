#include <gtest/gtest.h>

#include <fstream>

#include "domainbridge/error.hpp"
#include "domainbridge/image.hpp"
#include "domainbridge/manifest.hpp"
#include "test_support.hpp"

using namespace domainbridge;
using testsupport::TempDir;

TEST(Normalize, DividesByFullScaleOfBitDepth) {
  const std::vector<std::uint16_t> v{0, 2048, 4095};
  const auto img = normalize(v, 3, 1, 12);
  EXPECT_FLOAT_EQ(img.pixels[0], 0.0f);
  EXPECT_FLOAT_EQ(img.pixels[1], 2048.0f / 4095.0f);
  EXPECT_FLOAT_EQ(img.pixels[2], 1.0f);
}

TEST(Normalize, RejectsValuesAboveDeclaredDepth) {
  const std::vector<std::uint16_t> v{0, 256};
  EXPECT_THROW(normalize(v, 2, 1, 8), RangeError);
}

TEST(Normalize, RejectsUnsupportedDepth) {
  const std::vector<std::uint16_t> v{0};
  EXPECT_THROW(normalize(v, 1, 1, 0), SpecError);
  EXPECT_THROW(normalize(v, 1, 1, 17), SpecError);
}

TEST(Normalize, RealImagesInUnitRangePassThrough) {
  GrayImage g(2, 1);
  g.pixels = {0.25f, 1.0f};
  EXPECT_EQ(normalize(g), g);
  g.pixels[0] = 1.5f;
  EXPECT_THROW(normalize(g), RangeError);
  g.pixels[0] = std::nanf("");
  EXPECT_THROW(normalize(g), RangeError);
}

TEST(ImageFiles, SixteenBitRoundTripIsExactAtStoragePrecision) {
  TempDir dir;
  auto img = testsupport::random_frame(9, 7, 3);
  for (auto& p : img.pixels) p = std::round(p * 65535.0f) / 65535.0f;
  save_image(dir / "a.png", img, 16);
  const auto raw = read_raw_image(dir / "a.png");
  EXPECT_EQ(raw.bit_depth, 16);
  const auto back = load_image(dir / "a.png");
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-7);
}

TEST(ImageFiles, DeclaredDepthOverridesStorageDepth) {
  TempDir dir;
  GrayImage img(2, 1);
  img.pixels = {0.0f, 4095.0f / 65535.0f};
  save_image(dir / "a.png", img, 16);
  const auto ten_bit_in_16 = load_image(dir / "a.png", 12);
  EXPECT_FLOAT_EQ(ten_bit_in_16.pixels[1], 1.0f);
}

TEST(ImageFiles, MissingFileIsIoError) {
  EXPECT_THROW(load_image("/nonexistent/x.png"), IoError);
}

TEST(Resize, IdentityWhenSizeMatchesAndConstantPreserved) {
  GrayImage img(5, 4, 0.3f);
  EXPECT_EQ(resize_bilinear(img, 5, 4), img);
  const auto big = resize_bilinear(img, 10, 8);
  EXPECT_EQ(big.width, 10);
  EXPECT_EQ(big.height, 8);
  for (float p : big.pixels) EXPECT_NEAR(p, 0.3f, 1e-6);
}

TEST(Manifest, CsvRoundTripPreservesEverything) {
  TempDir dir;
  std::vector<GrayImage> imgs{GrayImage(4, 4, 0.1f), GrayImage(4, 4, 0.9f), GrayImage(4, 4, 0.5f)};
  auto m = testsupport::write_dataset(dir.path(), "D,1", imgs, {Regime::CHF, Regime::PRE_CHF, Regime::CHF});
  m.samples[0].split = Split::TRAIN;
  m.samples[1].split = Split::VAL;
  m.samples[2].split = Split::TEST;
  save_manifest(m, dir / "manifest.csv");
  const auto back = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.domain_id, "D,1");
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.samples[i].path, m.samples[i].path);
    EXPECT_EQ(back.samples[i].frame_index, m.samples[i].frame_index);
    EXPECT_EQ(back.samples[i].split, m.samples[i].split);
    EXPECT_EQ(back.samples[i].label(), m.samples[i].label());
  }
  EXPECT_EQ(back.bit_depth(), 16);
}

TEST(Manifest, SavingElsewhereRebasesPathsAndCarriesSidecar) {
  TempDir dir;
  std::vector<GrayImage> imgs{GrayImage(4, 4, 0.2f)};
  auto m = testsupport::write_dataset(dir / "data", "D", imgs);
  save_manifest(m, dir / "other" / "m.csv");
  const auto back = load_manifest(dir / "other" / "m.csv");
  EXPECT_EQ(back.bit_depth(), 16);
  EXPECT_NEAR(load_images(back)[0].pixels[0], 0.2f, 1e-4);
}

TEST(Manifest, RejectsBadHeaderAndMixedDomains) {
  TempDir dir;
  {
    std::ofstream(dir / "bad.csv") << "file,label\n";
  }
  EXPECT_THROW(load_manifest(dir / "bad.csv"), IoError);
  {
    std::ofstream(dir / "mixed.csv") << "path,domain_id,label,frame_index,split\na.png,A,,0,\nb.png,B,,1,\n";
  }
  EXPECT_THROW(load_manifest(dir / "mixed.csv"), SpecError);
  {
    std::ofstream(dir / "partial.csv") << "path,domain_id,label,frame_index,split\na.png,A,,0,TRAIN\nb.png,A,,1,\n";
  }
  EXPECT_THROW(load_manifest(dir / "partial.csv"), SpecError);
}

TEST(Manifest, SubsetKeepsOrder) {
  DatasetManifest m{"D", ".", {}};
  for (int i = 0; i < 6; ++i) {
    ImageSample s("f" + std::to_string(i), "D", i);
    s.split = i % 2 ? Split::TRAIN : Split::TEST;
    m.samples.push_back(s);
  }
  const auto train = m.subset(Split::TRAIN);
  ASSERT_EQ(train.size(), 3u);
  EXPECT_EQ(train.samples[0].frame_index, 1);
  EXPECT_EQ(train.samples[2].frame_index, 5);
  const std::vector<std::size_t> idx{4, 0};
  EXPECT_EQ(m.subset(idx).samples[0].frame_index, 4);
}

TEST(LabelAudit, AccessorReadsAreCountedCopiesAndSavesAreNot) {
  TempDir dir;
  ImageSample s("a.png", "D", 0, Regime::CHF);
  audit::LabelReadScope scope;
  ImageSample copy = s;
  DatasetManifest m{"D", dir.path(), {copy}};
  save_manifest(m, dir / "m.csv");
  EXPECT_EQ(scope.reads(), 0u);
  (void)copy.label();
  (void)s.has_label();
  EXPECT_EQ(scope.reads(), 2u);
}

TEST(LabelAudit, ManifestLoadsAreTaggedWithTheActiveStage) {
  TempDir dir;
  DatasetManifest m{"D", dir.path(), {ImageSample("a.png", "D", 0)}};
  save_manifest(m, dir / "m.csv");
  audit::clear_manifest_loads();
  {
    audit::StageScope stage("alpha");
    (void)load_manifest(dir / "m.csv");
  }
  (void)load_manifest(dir / "m.csv");
  const auto loads = audit::manifest_loads();
  ASSERT_EQ(loads.size(), 2u);
  EXPECT_EQ(loads[0].stage, "alpha");
  EXPECT_EQ(loads[1].stage, "");
  EXPECT_EQ(loads[0].path, std::filesystem::weakly_canonical(dir / "m.csv"));
}

TEST(Manifest, ClassCountsRequireLabels) {
  DatasetManifest m{"D", ".", {ImageSample("a", "D", 0, Regime::CHF), ImageSample("b", "D", 1, Regime::PRE_CHF),
                               ImageSample("c", "D", 2, Regime::PRE_CHF)}};
  const auto counts = m.class_counts();
  EXPECT_EQ(counts[0], 1u);
  EXPECT_EQ(counts[1], 2u);
  m.samples.push_back(ImageSample("d", "D", 3));
  EXPECT_THROW(m.class_counts(), LabelingError);
}
