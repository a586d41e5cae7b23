#include <gtest/gtest.h>

#include <map>
#include <numeric>

#include "domainbridge/classifier.hpp"
#include "domainbridge/error.hpp"
#include "test_support.hpp"

using namespace domainbridge;
using testsupport::TempDir;

namespace {

// CHF frames carry a bright bottom band; PRE_CHF frames do not.
GrayImage toy_frame(Regime r, std::uint64_t seed) {
  auto img = testsupport::random_frame(16, 16, seed);
  for (auto& p : img.pixels) p *= 0.4f;
  if (r == Regime::CHF) {
    for (int y = 12; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) img.at(x, y) = 0.95f;
    }
  }
  return img;
}

struct ToySet {
  std::vector<GrayImage> images;
  std::vector<Regime> labels;
};

ToySet toy_set(std::size_t per_class, std::uint64_t seed) {
  ToySet s;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (Regime r : kClassOrder) {
      s.images.push_back(toy_frame(r, seed * 10000 + s.images.size()));
      s.labels.push_back(r);
    }
  }
  return s;
}

ClassifierConfig toy_config() {
  ClassifierConfig c;
  c.architecture_id = "compact_cnn";
  c.epochs = 6;
  c.batch_size = 8;
  c.input_size = 16;
  c.seed = 5;
  c.optimizer.learning_rate = 3e-3;
  return c;
}

}  // namespace

TEST(SelectBestEpoch, LowestLossWinsEarliestOnTies) {
  const std::vector<double> losses{0.9, 0.4, 0.6, 0.4, 0.5};
  EXPECT_EQ(select_best_epoch(losses), 2);
  const std::vector<double> one{1.0};
  EXPECT_EQ(select_best_epoch(one), 1);
  EXPECT_THROW(select_best_epoch(std::vector<double>{}), DataError);
}

TEST(SelectBestEpoch, ArgminOnRandomSequences) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng() % 30);
    for (auto& x : v) x = static_cast<double>(rng() % 10);
    const int best = select_best_epoch(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (static_cast<int>(i) + 1 < best) {
        EXPECT_GT(v[i], v[best - 1]);
      } else {
        EXPECT_GE(v[i], v[best - 1]);
      }
    }
  }
}

TEST(ClassifierConfig, Validation) {
  auto c = toy_config();
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.optimizer.name = "sgd";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NE(toy_config().hash(), c.hash());
}

TEST(TrainClassifier, ReturnsSnapshotOfLowestValidationLossEpoch) {
  const auto train = toy_set(12, 1), val = toy_set(4, 2);
  std::map<int, std::string> hashes;
  ClassifierHooks hooks;
  hooks.val_loss_override = [](int epoch, double) { return epoch == 3 ? 0.1 : 1.0 + epoch; };
  hooks.on_epoch_end = [&](int epoch, const std::string& h) { hashes[epoch] = h; };
  const auto [model, log] = train_classifier(train.images, train.labels, val.images, val.labels, toy_config(), hooks);
  EXPECT_EQ(log.best_epoch, 3);
  ASSERT_EQ(log.epochs.size(), 6u);
  EXPECT_EQ(model.weights_hash(), hashes.at(3));
  EXPECT_NE(model.weights_hash(), hashes.at(6));
}

TEST(TrainClassifier, InducedValidationSeriesPicksSecondEpoch) {
  const auto train = toy_set(6, 12), val = toy_set(2, 13);
  auto cfg = toy_config();
  cfg.epochs = 3;
  std::map<int, std::string> hashes;
  ClassifierHooks hooks;
  const std::vector<double> series{0.7, 0.4, 0.5};
  hooks.val_loss_override = [&](int epoch, double) { return series[epoch - 1]; };
  hooks.on_epoch_end = [&](int epoch, const std::string& h) { hashes[epoch] = h; };
  const auto [model, log] = train_classifier(train.images, train.labels, val.images, val.labels, cfg, hooks);
  EXPECT_EQ(log.best_epoch, 2);
  EXPECT_EQ(model.weights_hash(), hashes.at(2));
  // Replaying the log: no epoch beats the returned one.
  for (const auto& rec : log.epochs) EXPECT_GE(rec.val_loss, log.epochs[log.best_epoch - 1].val_loss);
}

TEST(TrainClassifier, LearnsSeparableToyTaskAndIsDeterministic) {
  const auto train = toy_set(20, 3), val = toy_set(6, 4), test = toy_set(10, 5);
  auto cfg = toy_config();
  cfg.architecture_id = "custom_cnn";
  cfg.epochs = 10;
  cfg.optimizer.learning_rate = 1e-3;
  const auto [a, log_a] = train_classifier(train.images, train.labels, val.images, val.labels, cfg);
  const auto [b, log_b] = train_classifier(train.images, train.labels, val.images, val.labels, cfg);
  EXPECT_EQ(a.weights_hash(), b.weights_hash());
  EXPECT_EQ(log_a.best_epoch, log_b.best_epoch);
  EXPECT_GE(evaluate(a, test.images, test.labels).balanced_accuracy, 0.9);
}

TEST(TrainClassifier, RejectsSingleClassOrEmptyValidation) {
  auto train = toy_set(4, 6);
  const auto val = toy_set(2, 7);
  EXPECT_THROW(train_classifier(train.images, train.labels, {}, {}, toy_config()), DataError);
  for (auto& l : train.labels) l = Regime::CHF;
  EXPECT_THROW(train_classifier(train.images, train.labels, val.images, val.labels, toy_config()), DataError);
}

TEST(TrainedClassifier, SaveLoadPreservesWeightsAndPredictions) {
  TempDir dir;
  const auto train = toy_set(6, 8), val = toy_set(2, 9);
  auto cfg = toy_config();
  cfg.epochs = 2;
  const auto [model, log] = train_classifier(train.images, train.labels, val.images, val.labels, cfg);
  model.save(dir / "model");
  const auto back = TrainedClassifier::load(dir / "model");
  EXPECT_EQ(back.weights_hash(), model.weights_hash());
  EXPECT_EQ(back.architecture_id(), "compact_cnn");
  EXPECT_EQ(back.class_order(), kClassOrder);
  const auto p1 = model.predict(val.images), p2 = back.predict(val.images);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_DOUBLE_EQ(p1[i][0], p2[i][0]);
    EXPECT_NEAR(p1[i][0] + p1[i][1], 1.0, 1e-6);
  }
  EXPECT_THROW(TrainedClassifier::load(dir / "nothing"), IoError);
  EXPECT_THROW(model.predict(std::vector<GrayImage>{GrayImage(8, 8)}), ShapeError);
}

TEST(TrainedClassifier, EmbeddingsFeedFeatureExtractorAtAnySize) {
  const auto train = toy_set(4, 10), val = toy_set(2, 11);
  auto cfg = toy_config();
  cfg.epochs = 1;
  const auto [model, log] = train_classifier(train.images, train.labels, val.images, val.labels, cfg);
  const ClassifierFeatureExtractor extractor(model);
  const std::vector<GrayImage> big{testsupport::random_frame(32, 32, 1), testsupport::random_frame(32, 32, 2)};
  const auto e = extractor.embed(big);
  EXPECT_EQ(e.rows(), 2);
  EXPECT_EQ(static_cast<std::size_t>(e.cols()), extractor.embedding_dim());
  EXPECT_FALSE(extractor.extractor_id().empty());
}

TEST(Labels, UnlabeledManifestIsLabelingError) {
  DatasetManifest m{"D", ".", {ImageSample("a", "D", 0, Regime::CHF), ImageSample("b", "D", 1)}};
  EXPECT_THROW(labels_of(m), LabelingError);
}

TEST(TrainedClassifier, PredictIsOrderEquivariantAndEvaluateShuffleInvariant) {
  const auto train = toy_set(8, 14), val = toy_set(2, 15), test = toy_set(9, 16);
  auto cfg = toy_config();
  cfg.epochs = 2;
  const auto [model, log] = train_classifier(train.images, train.labels, val.images, val.labels, cfg);
  const auto forward = model.predict(test.images);
  EXPECT_EQ(forward, model.predict(test.images));
  std::vector<std::size_t> perm(test.images.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(4));
  std::vector<GrayImage> imgs;
  std::vector<Regime> labels;
  for (std::size_t i : perm) {
    imgs.push_back(test.images[i]);
    labels.push_back(test.labels[i]);
  }
  const auto permuted = model.predict(imgs);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    EXPECT_NEAR(permuted[k][0], forward[perm[k]][0], 1e-6);
  }
  const auto r1 = evaluate(model, test.images, test.labels), r2 = evaluate(model, imgs, labels);
  EXPECT_EQ(r1.confusion, r2.confusion);
  EXPECT_NEAR(*r1.roc_auc, *r2.roc_auc, 1e-9);
  EXPECT_THROW(model.predict(std::vector<GrayImage>{}), DataError);
}
