#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "domainbridge/error.hpp"
#include "domainbridge/ui2i.hpp"
#include "test_support.hpp"

using namespace domainbridge;
using testsupport::TempDir;

namespace {

UI2IConfig tiny_config(std::int64_t total, std::int64_t every) {
  UI2IConfig c;
  c.total_iterations = total;
  c.checkpoint_every = every;
  c.batch_size = 4;
  c.input_size = 16;
  c.generator_channels = 4;
  c.residual_blocks = 1;
  c.critic_channels = 4;
  c.critic_layers = 2;
  c.seed = 3;
  return c;
}

struct Domains {
  DatasetManifest source, target;
};

// Labeled 16x16 data in two photometric styles.
Domains make_domains(const std::filesystem::path& dir, std::size_t n = 8) {
  std::vector<GrayImage> a, b;
  std::vector<Regime> labels;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(testsupport::random_frame(16, 16, i));
    auto t = testsupport::random_frame(16, 16, 100 + i);
    for (auto& p : t.pixels) p = 0.5f + 0.5f * p;
    b.push_back(t);
    labels.push_back(i % 2 ? Regime::CHF : Regime::PRE_CHF);
  }
  return {testsupport::write_dataset(dir / "a", "A", a, labels), testsupport::write_dataset(dir / "b", "B", b, labels)};
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<GrayImage> probe_images() {
  return {testsupport::random_frame(16, 16, 900), testsupport::random_frame(16, 16, 901)};
}

}  // namespace

TEST(Ui2iConfig, PlanMatchesPublishedCheckpointCount) {
  UI2IConfig c;
  c.total_iterations = 300000;
  c.checkpoint_every = 10000;
  const auto plan = plan_checkpoints(c);
  ASSERT_EQ(plan.size(), 30u);
  EXPECT_EQ(plan.front(), 10000);
  EXPECT_EQ(plan.back(), 300000);
  for (std::size_t i = 1; i < plan.size(); ++i) EXPECT_EQ(plan[i] - plan[i - 1], 10000);
}

TEST(Ui2iConfig, PlanPropertyOverDivisorPairs) {
  for (std::int64_t every = 1; every <= 40; ++every) {
    for (std::int64_t k = 1; k <= 12; ++k) {
      auto c = tiny_config(every * k, every);
      const auto plan = plan_checkpoints(c);
      ASSERT_EQ(plan.size(), static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < plan.size(); ++i) EXPECT_EQ(plan[i], every * static_cast<std::int64_t>(i + 1));
    }
  }
}

TEST(Ui2iConfig, InvalidSchedulesAndWeightsAreConfigErrors) {
  EXPECT_THROW(tiny_config(250, 100).validate(), ConfigError);
  EXPECT_THROW(tiny_config(50, 100).validate(), ConfigError);
  auto c = tiny_config(300, 100);
  c.weights.cycle = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(300, 100);
  c.weights.adversarial = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config(300, 100);
  c.backend_id = "pix2pix";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(checkpoint_file_name(1000), "ckpt_0001000.bin");
  EXPECT_EQ(domain_code_from_string("target"), DomainCode::TARGET);
  EXPECT_THROW(domain_code_from_string("sideways"), ConfigError);
}

TEST(TrainUi2i, DeskScheduleWritesThreeCheckpointsAndReadsNoLabels) {
  TempDir dir;
  const auto d = make_domains(dir.path());
  audit::LabelReadScope reads;
  const auto ckpts = train_ui2i(d.source, d.target, tiny_config(300, 100), dir / "run");
  EXPECT_EQ(reads.reads(), 0u);
  ASSERT_EQ(ckpts.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ckpts[i].iteration, static_cast<std::int64_t>(100 * (i + 1)));
    EXPECT_EQ(ckpts[i].creation_index, i);
    EXPECT_TRUE(std::filesystem::exists(ckpts[i].path));
    EXPECT_EQ(ckpts[i].path.filename(), checkpoint_file_name(ckpts[i].iteration));
  }
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "run")) {
    files += e.path().filename().string().rfind("ckpt_0", 0) == 0;
  }
  EXPECT_EQ(files, 3u);
  const auto listed = list_checkpoints(dir / "run");
  ASSERT_EQ(listed.size(), 3u);
  EXPECT_EQ(listed[2].path, ckpts[2].path);
  EXPECT_EQ(listed[0].backend_id, "fpgan");
}

TEST(TrainUi2i, UsesOnlyTrainSplitOfTarget) {
  TempDir dir;
  auto d = make_domains(dir.path());
  // Non-TRAIN target files are deleted, so touching them would fail.
  for (std::size_t i = 0; i < d.target.size(); ++i) {
    d.target.samples[i].split = i < 5 ? Split::TRAIN : (i < 7 ? Split::VAL : Split::TEST);
    if (i >= 5) std::filesystem::remove(d.target.resolve(i));
  }
  EXPECT_NO_THROW(train_ui2i(d.source, d.target, tiny_config(10, 10), dir / "run"));
}

TEST(TrainUi2i, EmptyDomainsAreDataErrors) {
  TempDir dir;
  const auto d = make_domains(dir.path());
  const DatasetManifest empty{"E", dir.path(), {}};
  EXPECT_THROW(train_ui2i(empty, d.target, tiny_config(10, 10), dir / "r1"), DataError);
  EXPECT_THROW(train_ui2i(d.source, empty, tiny_config(10, 10), dir / "r2"), DataError);
}

TEST(TrainUi2i, InterruptedRunResumesToSameWeights) {
  TempDir dir;
  const auto d = make_domains(dir.path());
  const auto cfg = tiny_config(60, 20);
  const auto straight = train_ui2i(d.source, d.target, cfg, dir / "straight");

  Ui2iTrainOptions stop;
  stop.max_iterations_this_call = 30;  // dies between checkpoints 20 and 40
  const auto partial = train_ui2i(d.source, d.target, cfg, dir / "resumed", stop);
  ASSERT_EQ(partial.size(), 1u);
  const auto resumed = train_ui2i(d.source, d.target, cfg, dir / "resumed");
  ASSERT_EQ(resumed.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto a = load_translation_model(straight[i])->translate(probe_images(), DomainCode::SOURCE);
    const auto b = load_translation_model(resumed[i])->translate(probe_images(), DomainCode::SOURCE);
    EXPECT_EQ(a, b) << "checkpoint " << straight[i].iteration;
  }
  auto other = cfg;
  other.seed = 99;
  EXPECT_THROW(train_ui2i(d.source, d.target, other, dir / "resumed"), ConfigError);
}

TEST(TrainUi2i, CycleGanBackendPlugsIntoTheSameContract) {
  TempDir dir;
  const auto d = make_domains(dir.path());
  auto cfg = tiny_config(20, 10);
  cfg.backend_id = "cyclegan";
  audit::LabelReadScope reads;
  const auto ckpts = train_ui2i(d.source, d.target, cfg, dir / "run");
  EXPECT_EQ(reads.reads(), 0u);
  ASSERT_EQ(ckpts.size(), 2u);
  const auto model = load_translation_model(ckpts.back());
  EXPECT_EQ(model->backend_id(), "cyclegan");
  const auto out = model->translate(probe_images(), DomainCode::TARGET);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].width, 16);
}

TEST(Translate, PreservesOrderCountLabelsAndIsDeterministic) {
  TempDir dir;
  const auto d = make_domains(dir.path());
  const auto ckpts = train_ui2i(d.source, d.target, tiny_config(10, 10), dir / "run");
  audit::LabelReadScope reads;
  const auto a = translate(ckpts[0], d.target, DomainCode::SOURCE, dir / "t1");
  const auto b = translate(ckpts[0], d.target, DomainCode::SOURCE, dir / "t2");
  EXPECT_EQ(reads.reads(), 0u);
  ASSERT_EQ(a.size(), d.target.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].frame_index, d.target.samples[i].frame_index);
    EXPECT_EQ(file_bytes(a.resolve(i)), file_bytes(b.resolve(i)));
  }
  EXPECT_EQ(a.samples[3].label(), d.target.samples[3].label());
  for (const auto& img : load_images(a)) {
    for (float p : img.pixels) {
      EXPECT_GE(p, 0.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
  const DatasetManifest empty{"B", dir.path(), {}};
  EXPECT_TRUE(translate(ckpts[0], empty, DomainCode::SOURCE, dir / "t3").empty());
}

TEST(Translate, MissingCheckpointIsIoErrorAndWrongSizeIsShapeError) {
  TempDir dir;
  const auto d = make_domains(dir.path());
  CheckpointRecord ghost{100, dir / "nope" / "ckpt_0000100.bin", 0, "fpgan"};
  EXPECT_THROW(translate(ghost, d.target, DomainCode::SOURCE, dir / "t"), IoError);
  const auto ckpts = train_ui2i(d.source, d.target, tiny_config(10, 10), dir / "run");
  const auto model = load_translation_model(ckpts[0]);
  EXPECT_THROW(model->translate(std::vector<GrayImage>{GrayImage(8, 8)}, DomainCode::SOURCE), ShapeError);
}
