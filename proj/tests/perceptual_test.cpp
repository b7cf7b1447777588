#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "support.hpp"
#include "t2v/digest.hpp"
#include "t2v/errors.hpp"
#include "t2v/fs.hpp"
#include "t2v/perceptual.hpp"

namespace t2v {
namespace {

using testing::TempDir;

const std::vector<std::string> kLayers{"conv3_2", "conv4_2"};

PerceptualNet<float> formula_net() { return PerceptualNet<float>(testing::formula_vgg_parameters(), ""); }

TEST(Perceptual, LayerTableMatchesVgg19) {
  const auto layout = vgg19_parameter_layout();
  EXPECT_EQ(layout.size(), 32u);
  EXPECT_EQ(layout.front().first, "conv1_1.weight");
  EXPECT_EQ(layout.back().first, "conv5_4.bias");
  std::size_t total = 0;
  for (const auto& [name, shape] : layout) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    total += n;
  }
  EXPECT_EQ(total, 20024384u);  // torchvision vgg19().features parameter count
}

TEST(Perceptual, FeatureShapesAt128) {
  const auto net = formula_net();
  const auto stack = net.extract(testing::probe_image('s'), kLayers);
  const auto& c32 = stack.at("conv3_2");
  const auto& c42 = stack.at("conv4_2");
  EXPECT_EQ(c32.channels(), 256);
  EXPECT_EQ(c32.height(), 32);
  EXPECT_EQ(c32.width(), 32);
  EXPECT_EQ(c42.channels(), 512);
  EXPECT_EQ(c42.height(), 16);
  EXPECT_EQ(c42.width(), 16);
  for (float v : c42.values()) EXPECT_GE(v, 0.0f);
}

TEST(Perceptual, ExtractIsDeterministic) {
  const auto net = formula_net();
  const Image img = testing::probe_image('n');
  EXPECT_EQ(net.extract(img, kLayers), net.extract(img, kLayers));
}

TEST(Perceptual, UnknownLayerIsLookupError) {
  const auto net = formula_net();
  EXPECT_THROW(net.extract(testing::probe_image('s'), {"conv5_1"}), LookupError);
  EXPECT_THROW(net.extract(testing::probe_image('s'), {"fc7"}), LookupError);
}

TEST(Perceptual, NormalizeMeansAndZeros) {
  Image means(3, 4, 4);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i) means.plane(c)[i] = static_cast<float>(kImagenetMean[c]);
  const Image centred = PerceptualNet<float>::normalize(means);
  for (float v : centred.values()) EXPECT_NEAR(v, 0.0f, 1e-6f);

  const Image zeros(3, 4, 4, 0.0f);
  const Image n = PerceptualNet<float>::normalize(zeros);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i)
      EXPECT_NEAR(n.plane(c)[i], -kImagenetMean[c] / kImagenetStd[c], 1e-6);
}

TEST(Perceptual, NormalizeRejectsOutOfRange) {
  Image img(3, 2, 2, 0.5f);
  img(1, 0, 1) = 1.5f;
  EXPECT_THROW(PerceptualNet<float>::normalize(img), ContractError);
  EXPECT_THROW(PerceptualNet<float>::normalize(Image(1, 2, 2, 0.5f)), ContractError);
}

TEST(Perceptual, WeightsMustReachRequiredLayers) {
  EXPECT_THROW(PerceptualNet<float>(testing::formula_vgg_parameters("conv3_2"), ""), LoadError);
  EXPECT_NO_THROW(PerceptualNet<float>(testing::formula_vgg_parameters("conv4_2"), ""));
}

TEST(LoadPretrained, RoundTripAndDigest) {
  TempDir dir;
  const auto file = dir / "vgg.t2vw";
  save_weights(file, testing::formula_vgg_parameters());
  const std::string digest = sha256_file(file);
  const auto a = load_pretrained(file, digest);
  const auto b = load_pretrained(file);
  EXPECT_EQ(a.source_digest(), digest);
  EXPECT_EQ(a.weight_digest(), formula_net().weight_digest());
  const Image probe = testing::probe_image('g');
  EXPECT_EQ(a.extract(probe, kLayers), b.extract(probe, kLayers));
}

TEST(LoadPretrained, DigestMismatchIsLoadError) {
  TempDir dir;
  const auto file = dir / "vgg.t2vw";
  save_weights(file, testing::formula_vgg_parameters());
  EXPECT_THROW(load_pretrained(file, std::string(64, '0')), LoadError);
}

TEST(LoadPretrained, TruncatedFileNamesTheParameter) {
  TempDir dir;
  const auto file = dir / "vgg.t2vw";
  save_weights(file, testing::formula_vgg_parameters());
  const std::string bytes = read_file(file);
  // Cut inside the data of the third tensor (conv1_2.weight).
  const std::size_t header = 4 + 4 + 4;
  const std::size_t t0 = 4 + 14 + 4 + 16 + 64 * 3 * 9 * 4;
  const std::size_t t1 = 4 + 12 + 4 + 4 + 64 * 4;
  std::ofstream(file, std::ios::binary | std::ios::trunc) << bytes.substr(0, header + t0 + t1 + 100);
  try {
    load_pretrained(file);
    FAIL() << "expected a load error";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("conv1_2.weight"), std::string::npos) << e.what();
  }
}

TEST(LoadPretrained, GarbageAndMissingFiles) {
  TempDir dir;
  std::ofstream(dir / "bad.t2vw") << "nope";
  EXPECT_THROW(load_pretrained(dir / "bad.t2vw"), LoadError);
  EXPECT_THROW(load_pretrained(dir / "absent.t2vw"), LoadError);
}

TEST(LoadPretrained, TrailingBytesRejected) {
  TempDir dir;
  const auto file = dir / "vgg.t2vw";
  save_weights(file, testing::formula_vgg_parameters());
  std::ofstream(file, std::ios::binary | std::ios::app) << 'x';
  EXPECT_THROW(load_pretrained(file), LoadError);
}

TEST(RandomWeights, SeededAndPrefixOnly) {
  const auto a = random_vgg19_parameters(3);
  const auto b = random_vgg19_parameters(3);
  ASSERT_EQ(a.size(), 20u);
  EXPECT_EQ(a.back().name, "conv4_2.bias");
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value);
  EXPECT_NE(random_vgg19_parameters(4)[0].value, a[0].value);
  EXPECT_THROW(random_vgg19_parameters(0, "conv9_9"), LookupError);
}

// d/dimage of sum_l <G_l, F_l(image)> against central differences.
TEST(PerceptualBackward, MatchesFiniteDifferences) {
  const auto net = formula_net().cast<double>();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor<double> image(3, 16, 16);
  for (double& v : image.values()) v = u(rng);

  PerceptualNet<double>::Trace trace;
  const auto feats = net.extract(image, kLayers, &trace);
  FeatureStack<double> upstream;
  std::normal_distribution<double> n(0.0, 1.0);
  for (const auto& [name, f] : feats) {
    Tensor<double> g(f.channels(), f.height(), f.width());
    for (double& v : g.values()) v = n(rng);
    upstream[name] = g;
  }
  auto objective = [&](const Tensor<double>& img) {
    const auto fs = net.extract(img, kLayers);
    double s = 0.0;
    for (const auto& [name, f] : fs) {
      const auto fv = f.values();
      const auto gv = upstream.at(name).values();
      for (std::size_t i = 0; i < fv.size(); ++i) s += fv[i] * gv[i];
    }
    return s;
  };
  const Tensor<double> grad = net.backward(trace, upstream);
  ASSERT_EQ(grad.channels(), 3);
  const double step = 1e-6;
  std::uniform_int_distribution<std::size_t> pick(0, image.size() - 1);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t i = pick(rng);
    Tensor<double> plus = image, minus = image;
    plus.data()[i] += step;
    minus.data()[i] -= step;
    const double numeric = (objective(plus) - objective(minus)) / (2 * step);
    const double analytic = grad.data()[i];
    EXPECT_NEAR(analytic, numeric, 1e-5 * std::max(1.0, std::abs(numeric))) << "index " << i;
  }
}

}  // namespace
}  // namespace t2v
