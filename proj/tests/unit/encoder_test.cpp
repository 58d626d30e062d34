#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "reference.hpp"
#include "xeml/encoder.hpp"
#include "xeml/errors.hpp"

using namespace xeml;
using xeml::testing::random_tensor;

TEST(EncoderConfig, EmbeddingDimensionUsesCeilHalving) {
  EXPECT_EQ((EncoderConfig{4, 64, 84, 3}).embedding_dim(), 64u * 6 * 6);
  EXPECT_EQ((EncoderConfig{4, 64, 64, 3}).embedding_dim(), 64u * 4 * 4);
  EXPECT_EQ((EncoderConfig{6, 8, 64, 3}).output_size(), 1u);
  EXPECT_EQ((EncoderConfig{3, 8, 10, 3}).output_size(), 2u);  // 10 -> 5 -> 3 -> 2
  EXPECT_EQ(EncoderConfig::wide_profile().embedding_dim(), 512u * 2 * 2);
}

TEST(EncoderConfig, ValidateRejectsOutOfRangeFields) {
  EXPECT_NO_THROW((EncoderConfig{1, 1, 1, 1}).validate());
  EXPECT_NO_THROW((EncoderConfig{kMaxEncoderDepth, 4, 8, 3}).validate());
  EXPECT_THROW((EncoderConfig{0, 64, 64, 3}).validate(), ConfigError);
  EXPECT_THROW((EncoderConfig{kMaxEncoderDepth + 1, 64, 64, 3}).validate(), ConfigError);
  EXPECT_THROW((EncoderConfig{4, 0, 64, 3}).validate(), ConfigError);
  EXPECT_THROW((EncoderConfig{4, 64, 0, 3}).validate(), ConfigError);
  EXPECT_THROW((EncoderConfig{4, 64, 64, 0}).validate(), ConfigError);
}

TEST(BuildEncoder, LayoutAndInitialization) {
  const EncoderConfig cfg{3, 8, 16, 3};
  ParamStore p = build_encoder(cfg, 5);
  ASSERT_EQ(p.params().size(), 12u);
  ASSERT_EQ(p.buffers().size(), 6u);
  EXPECT_EQ(p.params()[0].path, "block0.conv.weight");
  EXPECT_EQ(p.param("block0.conv.weight").shape(), (Shape{8, 3, 3, 3}));
  EXPECT_EQ(p.param("block2.conv.weight").shape(), (Shape{8, 8, 3, 3}));
  EXPECT_EQ(p.parameter_count(), (8u * 27 + 8 * 3) + 2 * (8u * 72 + 8 * 3));
  for (int b = 0; b < 3; ++b) {
    const double bound = std::sqrt(6.0 / (9.0 * (b == 0 ? 3 : 8)));
    for (float v : p.param(block_path(b, "conv.weight")).data()) {
      EXPECT_LE(std::fabs(v), bound);
    }
    for (float v : p.param(block_path(b, "conv.bias")).data()) EXPECT_EQ(v, 0.0f);
    for (float v : p.param(block_path(b, "bn.gamma")).data()) EXPECT_EQ(v, 1.0f);
    for (float v : p.param(block_path(b, "bn.beta")).data()) EXPECT_EQ(v, 0.0f);
    for (float v : p.buffer(block_path(b, "bn.running_mean")).data()) EXPECT_EQ(v, 0.0f);
    for (float v : p.buffer(block_path(b, "bn.running_var")).data()) EXPECT_EQ(v, 1.0f);
  }
  for (const auto& e : p.params()) EXPECT_TRUE(e.tensor.requires_grad()) << e.path;
  EXPECT_THROW(p.param("block9.conv.weight"), ContractError);
}

TEST(BuildEncoder, SeedDeterminesWeights) {
  const EncoderConfig cfg{2, 4, 8, 3};
  EXPECT_TRUE(build_encoder(cfg, 1).identical_to(build_encoder(cfg, 1)));
  EXPECT_FALSE(build_encoder(cfg, 1).identical_to(build_encoder(cfg, 2)));
}

TEST(BuildEncoder, KaimingBoundIsUsedNotJustRespected) {
  // With 64*27 draws from U(-b, b) the sample extremes sit close to b.
  const EncoderConfig cfg{1, 64, 8, 3};
  ParamStore p = build_encoder(cfg, 9);
  float mx = 0.0f;
  for (float v : p.param("block0.conv.weight").data()) mx = std::max(mx, std::fabs(v));
  EXPECT_GT(mx, 0.95 * std::sqrt(6.0 / 27.0));
}

TEST(ParamStore, CloneIsDeepAndCopiesShare) {
  ParamStore p = build_encoder({1, 2, 4, 1}, 3);
  ParamStore shallow = p;
  ParamStore deep = p.clone();
  p.param("block0.conv.weight").mutable_data()[0] += 1.0f;
  EXPECT_TRUE(shallow.identical_to(p));
  EXPECT_FALSE(deep.identical_to(p));
}

TEST(Embed, EvalModeMatchesDoublePrecisionOracle) {
  const EncoderConfig cfg{3, 5, 11, 3};
  ParamStore p = build_encoder(cfg, 17);
  std::mt19937_64 rng(3);
  // non-trivial affine parameters so gamma/beta/bias paths are exercised
  for (auto& e : p.params()) {
    if (e.path.find("conv.weight") != std::string::npos) continue;
    auto v = e.tensor.mutable_data();
    std::uniform_real_distribution<float> u(0.5f, 1.5f);
    for (float& x : v) x = u(rng);
  }
  Tensor images = random_tensor({4, 3, 11, 11}, rng, 0.0f, 1.0f);
  Tensor emb = embed(p, cfg, images);
  ASSERT_EQ(emb.shape(), (Shape{4, cfg.embedding_dim()}));
  const auto ref = xeml::testing::reference_embed(xeml::testing::reference_net(p, cfg),
                                                  xeml::testing::to_double(images), 4, 3, 11);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t i = 0; i < cfg.embedding_dim(); ++i)
      ASSERT_NEAR(emb[n * cfg.embedding_dim() + i], ref[n][i], 1e-4 * (1.0 + std::fabs(ref[n][i])));
}

TEST(Embed, TrainModeMatchesEvalBatchStatsAndUpdatesRunningStats) {
  const EncoderConfig cfg{2, 4, 8, 3};
  ParamStore p = build_encoder(cfg, 2);
  ParamStore before = p.clone();
  std::mt19937_64 rng(4);
  Tensor images = random_tensor({3, 3, 8, 8}, rng, 0.0f, 1.0f);
  Tensor eval_emb = embed(static_cast<const ParamStore&>(p), cfg, images);
  EXPECT_TRUE(p.identical_to(before));
  Tape tape;
  Tensor train_emb = embed(p, cfg, images, tape);
  EXPECT_GT(tape.size(), 0u);
  for (std::size_t i = 0; i < eval_emb.numel(); ++i) EXPECT_EQ(train_emb[i], eval_emb[i]);
  EXPECT_FALSE(p.identical_to(before));
  for (std::size_t i = 0; i < p.params().size(); ++i) {
    const auto a = p.params()[i].tensor.data(), b = before.params()[i].tensor.data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << "parameter changed: " << p.params()[i].path;
  }
}

TEST(Embed, RunningStatsModeIgnoresTheBatch) {
  const EncoderConfig cfg{1, 3, 4, 1};
  ParamStore p = build_encoder(cfg, 6);
  std::mt19937_64 rng(5);
  Tensor a = random_tensor({2, 1, 4, 4}, rng);
  Tensor b = random_tensor({3, 1, 4, 4}, rng);
  // Row 0 of b replaced by row 0 of a: its embedding under running stats must not
  // depend on the rest of the batch.
  std::copy(a.data().begin(), a.data().begin() + 16, b.mutable_data().begin());
  Tensor ea = embed(p, cfg, a, ops::NormStats::running);
  Tensor eb = embed(p, cfg, b, ops::NormStats::running);
  for (std::size_t i = 0; i < cfg.embedding_dim(); ++i) EXPECT_EQ(ea[i], eb[i]);
  Tensor ba = embed(p, cfg, a, ops::NormStats::batch);
  Tensor bb = embed(p, cfg, b, ops::NormStats::batch);
  bool differs = false;
  for (std::size_t i = 0; i < cfg.embedding_dim(); ++i) differs |= ba[i] != bb[i];
  EXPECT_TRUE(differs);
}

TEST(Embed, RejectsWrongImageShape) {
  const EncoderConfig cfg{2, 4, 8, 3};
  ParamStore p = build_encoder(cfg, 1);
  std::mt19937_64 rng(6);
  EXPECT_THROW(embed(p, cfg, random_tensor({2, 3, 9, 9}, rng)), DimensionError);
  EXPECT_THROW(embed(p, cfg, random_tensor({2, 1, 8, 8}, rng)), DimensionError);
  EXPECT_THROW(embed(p, cfg, Tensor::zeros({0, 3, 8, 8})), DimensionError);
}
