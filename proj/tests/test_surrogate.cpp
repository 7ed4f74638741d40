#include <gtest/gtest.h>

#include "gpos/surrogate.hpp"
#include "test_support.hpp"

namespace gpos {
namespace {

MatrixXd grid_inputs() {
  MatrixXd x(8, 3);
  for (int i = 0; i < 8; ++i) x.row(i) << 1.0 + i, 5.0 + 2.0 * (i % 3), 3.0 * (i % 4);
  return x;
}

/// A GP that returns `value` (with negligible spread) at the grid inputs.
GPModel constant_gp(double value) {
  return train(grid_inputs(), VectorXd::Constant(8, value), VectorXd::Zero(8), KernelParams{});
}

const WeatherRecord kAtGrid{3.0, 9.0, 6.0, 0};  // row 2 of grid_inputs

TEST(SurrogateModel, ArityChecked) {
  EXPECT_THROW(SurrogateModel(DistFamily::Gumbel, {constant_gp(1.0)}, constant_gp(10.0)), UsageError);
  EXPECT_THROW(SurrogateModel(DistFamily::Rayleigh, {constant_gp(1.0), constant_gp(1.0)}, constant_gp(10.0)),
               UsageError);
  EXPECT_NO_THROW(SurrogateModel(DistFamily::Weibull, {constant_gp(2.0), constant_gp(1.0)}, constant_gp(10.0)));
}

TEST(SurrogateModel, ModeAndRedrawNames) {
  EXPECT_EQ(parse_mode(mode_name(SamplingMode::Point)), SamplingMode::Point);
  EXPECT_EQ(parse_mode(mode_name(SamplingMode::PosteriorSample)), SamplingMode::PosteriorSample);
  EXPECT_EQ(parse_redraw("per-realization"), ThetaRedraw::PerRealization);
  EXPECT_THROW(parse_mode("mean"), UsageError);
  EXPECT_THROW(parse_redraw("never"), UsageError);
}

TEST(PredictParams, LIsRoundedAndClamped) {
  const SurrogateModel m(DistFamily::Rayleigh, {constant_gp(2.0)}, constant_gp(350.4), SamplingMode::Point);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(predict_params(m, kAtGrid, s).l, 350u);
  const SurrogateModel neg(DistFamily::Rayleigh, {constant_gp(2.0)}, constant_gp(-5.0), SamplingMode::Point);
  EXPECT_EQ(predict_params(neg, kAtGrid, 1).l, 0u);
  EXPECT_TRUE(generate_responses(neg, kAtGrid, 1).peaks.empty());
}

TEST(PredictParams, PointModeReturnsPredictiveMean) {
  const MatrixXd x = grid_inputs();
  VectorXd k(8), lam(8);
  for (int i = 0; i < 8; ++i) {
    k[i] = 1.5 + 0.1 * x(i, 0);
    lam[i] = 2.0 * x(i, 0) + x(i, 1);
  }
  const auto gk = train(x, k, VectorXd::Constant(8, 0.01), KernelParams{});
  const auto gl = train(x, lam, VectorXd::Constant(8, 0.01), KernelParams{});
  const SurrogateModel m(DistFamily::Weibull, {gk, gl}, constant_gp(100.0), SamplingMode::Point);
  const WeatherRecord probe{4.2, 8.1, 2.0, 0};
  const auto d = predict_params(m, probe, 9);
  EXPECT_EQ(d.theta[0], gk.predict(to_vector(probe)).mean);
  EXPECT_EQ(d.theta[1], gl.predict(to_vector(probe)).mean);

  // Posterior draws scatter around the same means.
  const auto post = m.with_mode(SamplingMode::PosteriorSample);
  std::vector<double> draws;
  for (std::uint64_t s = 0; s < 4000; ++s) draws.push_back(predict_params(post, probe, s).theta[1]);
  const auto pm = gl.predict(to_vector(probe));
  EXPECT_NEAR(mean(draws), pm.mean, 4.0 * pm.std / std::sqrt(4000.0));
  EXPECT_NEAR(sample_std(draws), pm.std, 0.05 * pm.std);
}

TEST(PredictParams, PositiveParametersStayPositive) {
  // Mean 0.01 with a wide predictive spread forces the resample-then-clamp path.
  const MatrixXd x = grid_inputs();
  VectorXd s(8);
  for (int i = 0; i < 8; ++i) s[i] = i % 2 ? 0.01 : 5.0;
  const auto gs = train(x, s, VectorXd::Constant(8, 1.0), KernelParams{});
  const SurrogateModel m(DistFamily::Rayleigh, {gs}, constant_gp(10.0));
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto d = predict_params(m, {50.0, 20.0, 30.0, 0}, seed);
    ASSERT_GT(d.theta[0], 0.0);
  }
}

TEST(GenerateResponses, DeterministicAndTagged) {
  const SurrogateModel m(DistFamily::Gumbel, {constant_gp(10.0), constant_gp(2.0)}, constant_gp(300.0));
  const auto a = generate_responses(m, kAtGrid, 4);
  const auto b = generate_responses(m, kAtGrid, 4);
  EXPECT_EQ(a.peaks, b.peaks);
  EXPECT_NE(a.peaks, generate_responses(m, kAtGrid, 5).peaks);
  EXPECT_EQ(a.provenance.seed, 4u);
  EXPECT_EQ(a.provenance.mode, SamplingMode::PosteriorSample);
  const SimOutput& as_sim = a;
  EXPECT_EQ(as_sim.count(), a.peaks.size());
}

TEST(GenerateResponses, RayleighSecondMoment) {
  const SurrogateModel m(DistFamily::Rayleigh, {constant_gp(2.0)}, constant_gp(200000.0), SamplingMode::Point);
  const auto out = generate_responses(m, kAtGrid, 6);
  ASSERT_EQ(out.count(), 200000u);
  double ss = 0.0;
  for (double v : out.peaks) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(out.count())), 2.0 * std::sqrt(2.0), 0.01 * 2.0 * std::sqrt(2.0));
}

TEST(GenerateResponses, SampleFamilyMatchesCdf) {
  Rng rng(7);
  const std::vector<double> g{3.0, 1.5}, w{1.7, 2.5};
  std::vector<double> xg, xw;
  for (int i = 0; i < 20000; ++i) {
    xg.push_back(sample_family(DistFamily::Gumbel, g, rng));
    xw.push_back(sample_family(DistFamily::Weibull, w, rng));
  }
  const double crit = testing::ks_critical(0.001) / std::sqrt(20000.0);
  EXPECT_LT(testing::ks_statistic(xg, [](double x) { return std::exp(-std::exp(-(x - 3.0) / 1.5)); }), crit);
  EXPECT_LT(testing::ks_statistic(xw, [](double x) { return 1.0 - std::exp(-std::pow(x / 2.5, 1.7)); }), crit);
}

TEST(TrainSurrogate, RequiresEnoughRows) {
  TrainingTable t;
  t.rows.resize(10);
  assign_split(t, 1);
  EXPECT_THROW(train_surrogate(t, DistFamily::Rayleigh, SurrogateConfig{}, 1), InsufficientDataError);
}

class TrainedRayleigh : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    InputBox box;
    box.hs = {1.0, 5.0};
    box.tp = {8.0, 12.0};
    box.vw = {0.0, 4.0};
    const auto design = sample_uniform_inputs(80, box, 31);
    table_ = build_training_table(design, 6, SimConfig{}, 32, 2);
    SurrogateConfig cfg;
    cfg.search.restarts = 2;
    cfg.mode = SamplingMode::Point;
    model_ = std::make_unique<SurrogateModel>(train_surrogate(table_, DistFamily::Rayleigh, cfg, 33));
  }
  static void TearDownTestSuite() { model_.reset(); }
  static inline TrainingTable table_;
  static inline std::unique_ptr<SurrogateModel> model_;
};

TEST_F(TrainedRayleigh, UsesOnlyTrainRows) {
  EXPECT_EQ(model_->param_models()[0].size(), static_cast<Eigen::Index>(table_.train.size()));
  EXPECT_EQ(model_->l_model().size(), static_cast<Eigen::Index>(table_.train.size()));
  EXPECT_TRUE(model_->l_model().options().include_noise);
  EXPECT_FALSE(model_->param_models()[0].options().include_noise);
}

TEST_F(TrainedRayleigh, PeaksMatchSimulatorDistribution) {
  const WeatherRecord x{3.0, 10.0, 2.0, 0};
  std::vector<double> sim, sur;
  for (std::uint64_t s = 0; sim.size() < 3000; ++s) {
    const auto out = simulate(x, SimConfig{}, 1000 + s);
    sim.insert(sim.end(), out.peaks.begin(), out.peaks.end());
  }
  for (std::uint64_t s = 0; sur.size() < 3000; ++s) {
    const auto out = generate_responses(*model_, x, s);
    sur.insert(sur.end(), out.peaks.begin(), out.peaks.end());
  }
  const double n = static_cast<double>(sim.size()), m = static_cast<double>(sur.size());
  const double crit = testing::ks_critical(0.001) * std::sqrt((n + m) / (n * m));
  EXPECT_LT(testing::ks_two_sample(sim, sur), crit);
}

TEST_F(TrainedRayleigh, SubsamplingCapsTrainingSize) {
  SurrogateConfig cfg;
  cfg.search.restarts = 1;
  cfg.search.max_passes = 2;
  cfg.n_max = 30;
  const auto small = train_surrogate(table_, DistFamily::Rayleigh, cfg, 34);
  EXPECT_EQ(small.param_models()[0].size(), 30);
}

}  // namespace
}  // namespace gpos
