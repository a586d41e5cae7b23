#include <gtest/gtest.h>

#include "domainbridge/error.hpp"
#include "domainbridge/nn/networks.hpp"
#include "domainbridge/nn/tensor_image.hpp"
#include "test_support.hpp"

using namespace domainbridge;
using namespace domainbridge::nn;

TEST(Classifiers, OutputAndEmbeddingShapes) {
  torch::manual_seed(0);
  for (const auto& id : classifier_architectures()) {
    auto net = make_classifier(id, 32);
    net->eval();
    const auto x = torch::rand({3, 1, 32, 32});
    EXPECT_EQ(net->forward(x).sizes(), (std::vector<int64_t>{3, 2})) << id;
    EXPECT_EQ(net->features(x).sizes(), (std::vector<int64_t>{3, net->embedding_dim()})) << id;
  }
  EXPECT_EQ(make_classifier("custom_cnn", 64)->embedding_dim(), 128);
}

TEST(Classifiers, UnknownIdAndBadSizeAreConfigErrors) {
  EXPECT_THROW(make_classifier("resnet9000", 32), ConfigError);
  EXPECT_THROW(make_classifier("custom_cnn", 30), ConfigError);
  EXPECT_THROW(make_classifier("compact_cnn", 30), ConfigError);
}

TEST(Classifiers, RegistryAcceptsNewArchitectures) {
  register_classifier("test_compact_alias", [](int size) { return make_classifier("compact_cnn", size); });
  const auto ids = classifier_architectures();
  EXPECT_NE(std::find(ids.begin(), ids.end(), "test_compact_alias"), ids.end());
  EXPECT_EQ(make_classifier("test_compact_alias", 16)->embedding_dim(), 32);
}

TEST(TranslationGenerator, PreservesShapeAndStaysInWorkingRange) {
  torch::manual_seed(1);
  TranslationGenerator plain(GeneratorShape{1, 0, 8, 2});
  const auto x = torch::rand({2, 1, 16, 16}) * 2 - 1;
  const auto y = plain->forward(x);
  EXPECT_EQ(y.sizes(), x.sizes());
  EXPECT_LE(y.abs().max().item<float>(), 1.0f);

  TranslationGenerator conditional(GeneratorShape{1, 2, 8, 2});
  const auto c0 = conditional->forward(x, torch::tensor({{1.0f, 0.0f}, {1.0f, 0.0f}}));
  const auto c1 = conditional->forward(x, torch::tensor({{0.0f, 1.0f}, {0.0f, 1.0f}}));
  EXPECT_EQ(c0.sizes(), x.sizes());
  EXPECT_FALSE(torch::allclose(c0, c1));
}

TEST(TranslationGenerator, InvalidShapeIsConfigError) {
  EXPECT_THROW(TranslationGenerator(GeneratorShape{1, 0, 0, 2}), ConfigError);
}

TEST(PatchCritic, PatchScoresAndDomainLogits) {
  torch::manual_seed(2);
  PatchCritic critic(CriticShape{1, 32, 8, 3, 2});
  const auto out = critic->forward(torch::rand({4, 1, 32, 32}));
  EXPECT_EQ(out.source.size(0), 4);
  EXPECT_EQ(out.source.size(1), 1);
  EXPECT_EQ(out.domains.sizes(), (std::vector<int64_t>{4, 2}));
  PatchCritic headless(CriticShape{1, 32, 8, 3, 0});
  EXPECT_FALSE(headless->forward(torch::rand({1, 1, 32, 32})).domains.defined());
  EXPECT_THROW(PatchCritic(CriticShape{1, 16, 8, 6, 0}), ConfigError);
}

TEST(TensorImage, RoundTripAndWeightsHash) {
  const std::vector<GrayImage> imgs{testsupport::random_frame(5, 4, 1), testsupport::random_frame(5, 4, 2)};
  const auto t = to_tensor(imgs);
  EXPECT_EQ(t.sizes(), (std::vector<int64_t>{2, 1, 4, 5}));
  EXPECT_EQ(from_tensor(t), imgs);
  EXPECT_THROW(to_tensor(std::vector<GrayImage>{GrayImage(2, 2), GrayImage(3, 2)}), ShapeError);

  torch::manual_seed(3);
  auto a = make_classifier("compact_cnn", 16);
  const auto h = weights_hash(*a);
  EXPECT_EQ(h, weights_hash(*a));
  {
    torch::NoGradGuard no_grad;
    a->parameters()[0].add_(1e-3);
  }
  EXPECT_NE(h, weights_hash(*a));
}
