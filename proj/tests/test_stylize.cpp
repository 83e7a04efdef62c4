#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "styleswap/stylize.hpp"
#include "styleswap/synthetic.hpp"
#include "test_support.hpp"

using namespace styleswap;
using styleswap::testing::kink_free;
using styleswap::testing::numeric_grad;
using styleswap::testing::random_tensor;
using styleswap::testing::relative_error;
using styleswap::testing::TempDir;

namespace {

/// Squared-difference TV written as an independent double loop over both axes.
double tv_oracle(const TensorD& x) {
  double acc = 0;
  for (std::size_t i = 0; i < x.height(); ++i)
    for (std::size_t j = 0; j < x.width(); ++j)
      for (std::size_t k = 0; k < x.channels(); ++k) {
        if (j + 1 < x.width()) acc += std::pow(x.at(i, j + 1, k) - x.at(i, j, k), 2);
        if (i + 1 < x.height()) acc += std::pow(x.at(i + 1, j, k) - x.at(i, j, k), 2);
      }
  return acc;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

}  // namespace

TEST(TotalVariation, HandValue) {
  const TensorD x({2, 2, 1}, std::vector<double>{0, 1, 2, 3});
  EXPECT_EQ(tv_loss(x), 10.0);
  EXPECT_EQ(tv_loss(Tensor({2, 2, 1}, std::vector<float>{0, 1, 2, 3})), 10.0);
}

TEST(TotalVariation, ConstantImageIsZero) {
  EXPECT_EQ(tv_loss(TensorD::full({4, 5, 3}, 0.3)), 0.0);
  EXPECT_EQ(frobenius_norm_sq(tv_grad(TensorD::full({4, 5, 3}, 0.3))), 0.0);
}

TEST(TotalVariation, MatchesOracle) {
  for (unsigned t = 0; t < 5; ++t) {
    const auto x = random_tensor({5u + t, 7, 3}, 40 + t);
    EXPECT_NEAR(tv_loss(x), tv_oracle(x), 1e-12 * tv_oracle(x));
  }
}

TEST(TotalVariation, DegenerateShapesUseDefinedSums) {
  const TensorD row({1, 3, 1}, std::vector<double>{0, 2, 3});
  EXPECT_EQ(tv_loss(row), 5.0);
  const TensorD col({3, 1, 1}, std::vector<double>{0, 2, 3});
  EXPECT_EQ(tv_loss(col), 5.0);
  EXPECT_EQ(tv_loss(TensorD::ones({1, 1, 3})), 0.0);
}

TEST(TotalVariation, GradFiniteDifferences) {
  for (unsigned t = 0; t < 5; ++t) {
    const auto x = random_tensor({4, 3u + t, 2}, 50 + t);
    EXPECT_LT(relative_error(tv_grad(x), numeric_grad([](const TensorD& y) { return tv_loss(y); }, x)), 1e-4);
  }
  const auto row = random_tensor({1, 5, 2}, 60);
  EXPECT_LT(relative_error(tv_grad(row), numeric_grad([](const TensorD& y) { return tv_loss(y); }, row)), 1e-4);
}

TEST(StylizeLoss, IdentityAtOptimum) {
  const auto e = build_identity().cast<double>();
  const auto x = random_tensor({4, 4, 3}, 1, 0.0, 1.0);
  const auto l = stylize_loss(x, x, e, 0.0);
  EXPECT_EQ(l.terms.total, 0.0);
  EXPECT_EQ(frobenius_norm_sq(l.grad), 0.0);
}

TEST(StylizeLoss, IdentityGradientIsTwiceResidual) {
  const auto e = build_identity().cast<double>();
  const auto x = random_tensor({4, 5, 3}, 2), t = random_tensor({4, 5, 3}, 3);
  const auto l = stylize_loss(x, t, e, 0.0);
  EXPECT_LT(max_abs_diff(l.grad, scale(sub(x, t), 2.0)), 1e-15);
  EXPECT_NEAR(l.terms.activation, frobenius_norm_sq(sub(x, t)), 1e-12);
}

TEST(StylizeLoss, TermsAddUp) {
  const auto e = build_tiny(4, 3).cast<double>();
  const auto x = random_tensor({8, 8, 3}, 4, 0.0, 1.0);
  const auto t = encode_activations(random_tensor({8, 8, 3}, 5, 0.0, 1.0), e);
  const auto l = stylize_loss(x, t, e, 0.25);
  EXPECT_DOUBLE_EQ(l.terms.total, l.terms.activation + 0.25 * l.terms.tv);
  EXPECT_DOUBLE_EQ(l.terms.tv, tv_loss(x));
  EXPECT_DOUBLE_EQ(l.terms.activation, frobenius_norm_sq(sub(encode_activations(x, e), t)));
}

TEST(StylizeLoss, TinyFiniteDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 5 && seed < 100; ++seed) {
    const auto e = build_tiny(4, seed).cast<double>();
    const auto x = random_tensor({6, 6, 3}, 70 + seed, 0.0, 1.0);
    if (!kink_free<double>(e.layers, encode(x, e).trace.stack)) continue;
    const auto t = encode_activations(random_tensor({6, 6, 3}, 90 + seed, 0.0, 1.0), e);
    for (double lambda : {1e-6, 0.5}) {
      const auto l = stylize_loss(x, t, e, lambda);
      const auto num = numeric_grad([&](const TensorD& y) { return stylize_loss(y, t, e, lambda).terms.total; }, x);
      EXPECT_LT(relative_error(l.grad, num), 1e-4);
    }
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

TEST(StylizeLoss, ShapeMismatchAndBadLambda) {
  const auto e = build_tiny(4, 0).cast<double>();
  EXPECT_THROW(stylize_loss(random_tensor({8, 8, 3}, 1), TensorD::zeros({3, 4, 4}), e, 0.0), ShapeError);
  EXPECT_THROW(stylize_loss(random_tensor({8, 8, 3}, 1), TensorD::zeros({4, 4, 4}), e, -1.0), ConfigError);
}

TEST(OptimConfig, DefaultsAndValidation) {
  const OptimConfig c;
  EXPECT_EQ(c.lambda_tv, 1e-6);
  EXPECT_EQ(c.max_iters, 100u);
  EXPECT_EQ(c.step, 0.05);
  EXPECT_EQ(c.init, InitMode::Content);
  EXPECT_EQ(c.adam().beta1, 0.9);
  EXPECT_EQ(c.adam().beta2, 0.999);
  EXPECT_EQ(c.adam().epsilon, 1e-8);
  OptimConfig bad = c;
  bad.max_iters = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.step = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.lambda_tv = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam<double> adam({0.1, 0.9, 0.999, 1e-8});
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{3.0, -0.5};
  adam.begin_step();
  adam.update(0, p, g);
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_NEAR(p[1], -1.9, 1e-8);
}

TEST(Adam, MatchesReferenceRecurrence) {
  const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  Adam<double> adam(cfg);
  double p = 0.5, m = 0, v = 0, ref = 0.5;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2 * (p - 3.0);
    adam.begin_step();
    std::span<double> ps(&p, 1);
    adam.update(0, ps, std::span<const double>(&g, 1));
    const double gr = 2 * (ref - 3.0);
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    ref -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p, ref, 1e-14);
  }
}

TEST(Adam, RejectsMisuse) {
  EXPECT_THROW(Adam<float>({0.0}), ConfigError);
  Adam<float> adam({0.1});
  std::vector<float> p(3), g(3);
  EXPECT_THROW(adam.update(0, p, g), ConfigError);
  adam.begin_step();
  std::vector<float> g2(2);
  EXPECT_THROW(adam.update(0, p, g2), ShapeError);
}

TEST(Optimize, IdentityLeastSquaresConverges) {
  Rng rng(3);
  const auto content = synthetic_natural(16, 16, rng);
  const auto style = synthetic_painting(16, 16, rng);
  const auto e = build_identity();
  OptimConfig c;
  c.lambda_tv = 0.0;
  c.max_iters = 500;
  const auto target = style_swap(content, style, SwapConfig{});
  const auto r = optimize(content, style, e, SwapConfig{}, c);
  ASSERT_EQ(r.history.size(), 501u);
  EXPECT_LT(r.history.back().loss.total, 1e-6 * r.history.front().loss.total);
  EXPECT_LT(rmse(r.final_image, target), 1e-3);
}

TEST(Optimize, HistoryBookkeeping) {
  Rng rng(4);
  const auto content = synthetic_natural(16, 16, rng);
  const auto style = synthetic_painting(16, 16, rng);
  const auto e = build_tiny(4, 1);
  OptimConfig c;
  c.max_iters = 20;
  c.lambda_tv = 0.01;
  const auto r = optimize(content, style, e, SwapConfig{}, c);
  ASSERT_EQ(r.history.size(), 21u);
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const auto& h = r.history[i];
    EXPECT_EQ(h.iter, i);
    EXPECT_DOUBLE_EQ(h.loss.total, h.loss.activation + 0.01 * h.loss.tv);
    EXPECT_TRUE(std::isfinite(h.loss.total));
  }
  EXPECT_LE(r.history.back().loss.total, r.history.front().loss.total);
  // The first entry is the loss at the initial (content) image.
  const auto target = style_swap(encode_activations(content, e), encode_activations(style, e), SwapConfig{});
  EXPECT_NEAR(r.history.front().loss.total, stylize_loss(content, target, e, 0.01).terms.total, 1e-9);
  // The last entry is the loss at the returned image.
  EXPECT_NEAR(r.history.back().loss.total, stylize_loss(r.final_image, target, e, 0.01).terms.total, 1e-9);
}

TEST(Optimize, LogCadence) {
  Rng rng(5);
  const auto img = synthetic_natural(8, 8, rng);
  OptimConfig c;
  c.max_iters = 10;
  c.log_every = 4;
  const auto r = optimize_to_target(img, img, build_identity(), c);
  std::vector<std::size_t> iters;
  for (const auto& h : r.history) iters.push_back(h.iter);
  EXPECT_EQ(iters, (std::vector<std::size_t>{0, 4, 8, 10}));
}

TEST(Optimize, ToleranceStopsEarly) {
  Rng rng(6);
  const auto img = synthetic_natural(8, 8, rng);
  OptimConfig c;
  c.max_iters = 1000;
  c.tolerance = 0.5;
  const auto r = optimize_to_target(img, Tensor::zeros(img.shape()), build_identity(), c);
  EXPECT_LT(r.history.back().iter, 1000u);
}

TEST(Optimize, RandomInitIsSeedDeterministic) {
  Rng rng(7);
  const auto content = synthetic_natural(16, 16, rng);
  const auto style = synthetic_painting(16, 16, rng);
  OptimConfig c;
  c.init = InitMode::Random;
  c.seed = 99;
  c.max_iters = 5;
  const auto e = build_tiny(4, 2);
  EXPECT_EQ(optimize(content, style, e, SwapConfig{}, c).final_image,
            optimize(content, style, e, SwapConfig{}, c).final_image);
  const auto init = initial_image(content, c);
  EXPECT_GE(*std::min_element(init.data().begin(), init.data().end()), 0.0f);
  EXPECT_LT(max(init), 1.0f);
}

TEST(Optimize, DivergenceRaisesNumericalError) {
  auto img = Tensor::full({4, 4, 3}, 0.5f);
  img[5] = std::numeric_limits<float>::infinity();
  OptimConfig c;
  c.max_iters = 3;
  EXPECT_THROW(optimize_to_target(img, Tensor::zeros({4, 4, 3}), build_identity(), c), NumericalError);
}

TEST(Optimize, CsvExport) {
  TempDir dir("optcsv");
  Rng rng(8);
  const auto img = synthetic_natural(8, 8, rng);
  OptimConfig c;
  c.max_iters = 3;
  const auto r = optimize_to_target(img, Tensor::zeros(img.shape()), build_identity(), c);
  r.write_csv(dir / "r.csv");
  const auto lines = read_lines(dir / "r.csv");
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "iter,total,act_term,tv_term");
  EXPECT_EQ(lines[1].substr(0, 2), "0,");
}

TEST(Consistency, IdenticalSeedsGiveZeroSpread) {
  Rng rng(9);
  const auto content = synthetic_natural(12, 12, rng);
  const auto style = synthetic_painting(12, 12, rng);
  OptimConfig c;
  c.max_iters = 10;
  const auto r = consistency_experiment(content, style, build_tiny(4, 1), SwapConfig{}, c,
                                        std::vector<std::uint64_t>{5, 5});
  ASSERT_EQ(r.pixel_stddev.size(), 11u);
  for (double s : r.pixel_stddev) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(r.runs[0].final_image, r.runs[1].final_image);
}

TEST(Consistency, IdentityRunsConverge) {
  Rng rng(10);
  const auto content = synthetic_natural(12, 12, rng);
  const auto style = synthetic_painting(12, 12, rng);
  OptimConfig c;
  c.max_iters = 400;
  c.lambda_tv = 0.0;
  const auto r = consistency_experiment(content, style, build_identity(), SwapConfig{}, c, 5);
  EXPECT_GT(r.pixel_stddev.front(), 0.1);
  EXPECT_LT(r.pixel_stddev.back(), 1e-3);
}

TEST(Consistency, MatchesIndependentRuns) {
  Rng rng(11);
  const auto content = synthetic_natural(12, 12, rng);
  const auto style = synthetic_painting(12, 12, rng);
  const auto e = build_tiny(4, 3);
  OptimConfig c;
  c.max_iters = 6;
  const auto r = consistency_experiment(content, style, e, SwapConfig{}, c, std::vector<std::uint64_t>{1, 2});
  OptimConfig solo = c;
  solo.init = InitMode::Random;
  solo.seed = 2;
  EXPECT_EQ(r.runs[1].final_image, optimize(content, style, e, SwapConfig{}, solo).final_image);
}

TEST(Consistency, RequiresTwoRuns) {
  const auto img = Tensor::full({8, 8, 3}, 0.5f);
  EXPECT_THROW(consistency_experiment(img, img, build_identity(), SwapConfig{}, OptimConfig{}, 1), ConfigError);
}

TEST(Consistency, CsvHasStddevColumn) {
  TempDir dir("conscsv");
  const auto img = Tensor::full({8, 8, 3}, 0.5f);
  OptimConfig c;
  c.max_iters = 2;
  const auto r = consistency_experiment(img, img, build_identity(), SwapConfig{}, c, 2);
  r.write_csv(dir / "c.csv");
  const auto lines = read_lines(dir / "c.csv");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "iter,total,act_term,tv_term,stddev");
}
