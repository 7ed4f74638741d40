#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "gpos/weather.hpp"

namespace gpos {
namespace {

TEST(LoadWeather, ParsesTableRows) {
  std::istringstream in("index,hs,tp,vw\n0,3.2,11.3,1.2\n1,7.4,9.6,16.5\n");
  const auto w = parse_weather_csv(in);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], (WeatherRecord{3.2, 11.3, 1.2, 0}));
  EXPECT_EQ(w[1], (WeatherRecord{7.4, 9.6, 16.5, 1}));
}

TEST(LoadWeather, NegativeHsReportsLine) {
  std::istringstream in("index,hs,tp,vw\n0,3.2,11.3,1.2\n1,7.4,9.6,16.5\n2,-1.0,9.0,5.0\n");
  try {
    parse_weather_csv(in);
    FAIL() << "expected a parse error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(LoadWeather, SchemaErrors) {
  std::istringstream missing("index,hs,tp\n0,1,2\n");
  EXPECT_THROW(parse_weather_csv(missing), DataError);
  std::istringstream extra("index,hs,tp,vw\n0,1,2,3,4\n");
  EXPECT_THROW(parse_weather_csv(extra), DataError);
  std::istringstream text("index,hs,tp,vw\n0,abc,2,3\n");
  EXPECT_THROW(parse_weather_csv(text), DataError);
  std::istringstream zero_tp("index,hs,tp,vw\n0,1,0,3\n");
  EXPECT_THROW(parse_weather_csv(zero_tp), DataError);
  std::istringstream neg_vw("index,hs,tp,vw\n0,1,2,-3\n");
  EXPECT_THROW(parse_weather_csv(neg_vw), DataError);
  EXPECT_THROW(load_weather("/nonexistent/weather.csv"), DataError);
}

TEST(LoadWeather, WriteThenParseIsIdentity) {
  const auto w = synthesize_weather(50, InputBox{}, 3);
  std::ostringstream out;
  write_weather_csv(out, w);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_weather_csv(in), w);
}

TEST(InputBox, DegenerateBoxRejected) {
  InputBox box;
  box.tp = {10.0, 10.0};
  EXPECT_THROW(box.validate(), ConfigError);
  EXPECT_THROW(synthesize_weather(10, box, 1), ConfigError);
  EXPECT_THROW(sample_uniform_inputs(10, box, 1), ConfigError);
  InputBox neg;
  neg.hs = {-1.0, 2.0};
  EXPECT_THROW(neg.validate(), ConfigError);
  EXPECT_NO_THROW(InputBox{}.validate());
}

TEST(SynthesizeWeather, FullScaleLengthAndBounds) {
  const InputBox box;
  const auto w = synthesize_weather(24 * 365 * 25, box, 7);
  ASSERT_EQ(w.size(), 219000u);
  for (std::size_t i = 0; i < w.size(); ++i) {
    ASSERT_TRUE(is_physical(w[i]));
    ASSERT_TRUE(box.contains(w[i]));
    ASSERT_EQ(w[i].index, i);
  }
}

TEST(SynthesizeWeather, DeterministicPerSeed) {
  EXPECT_EQ(synthesize_weather(500, InputBox{}, 42), synthesize_weather(500, InputBox{}, 42));
  EXPECT_NE(synthesize_weather(500, InputBox{}, 42), synthesize_weather(500, InputBox{}, 43));
  EXPECT_THROW(synthesize_weather(0, InputBox{}, 1), UsageError);
}

TEST(SynthesizeWeather, HourlyPersistence) {
  const auto w = synthesize_weather(10000, InputBox{}, 5);
  std::vector<double> hs;
  for (const auto& r : w) hs.push_back(r.hs);
  const double m = mean(hs);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    den += (hs[i] - m) * (hs[i] - m);
    if (i + 1 < hs.size()) num += (hs[i] - m) * (hs[i + 1] - m);
  }
  EXPECT_GT(num / den, 0.5);
}

TEST(SampleUniformInputs, DesignSizeAndSupport) {
  const InputBox box;
  const auto d = sample_uniform_inputs(5000, box, 9);
  ASSERT_EQ(d.size(), 5000u);
  for (const auto& r : d) {
    ASSERT_TRUE(box.contains(r));
    ASSERT_TRUE(is_physical(r));
  }
  EXPECT_EQ(d, sample_uniform_inputs(5000, box, 9));
  EXPECT_THROW(sample_uniform_inputs(0, box, 9), UsageError);
}

TEST(SampleUniformInputs, MeanWithinThreeStandardErrors) {
  const InputBox box;
  const auto d = sample_uniform_inputs(5000, box, 10);
  const Interval ivs[3] = {box.hs, box.tp, box.vw};
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (const auto& r : d) s += c == 0 ? r.hs : c == 1 ? r.tp : r.vw;
    const double m = s / 5000.0;
    // Uniform(a, b): sd = (b - a) / sqrt(12).
    const double se = ivs[c].width() / std::sqrt(12.0) / std::sqrt(5000.0);
    EXPECT_LT(std::abs(m - ivs[c].mid()), 3.0 * se) << "coordinate " << c;
  }
}

TEST(SampleUniformInputs, ChiSquareUniformity) {
  const InputBox box;
  const auto d = sample_uniform_inputs(5000, box, 11);
  const Interval ivs[3] = {box.hs, box.tp, box.vw};
  const boost::math::chi_squared dist(19.0);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> counts(20, 0.0);
    for (const auto& r : d) {
      const double v = c == 0 ? r.hs : c == 1 ? r.tp : r.vw;
      const auto bin = static_cast<std::size_t>((v - ivs[c].min) / ivs[c].width() * 20.0);
      counts[std::min<std::size_t>(bin, 19)] += 1.0;
    }
    double chi2 = 0.0;
    for (double o : counts) chi2 += (o - 250.0) * (o - 250.0) / 250.0;
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001) << "coordinate " << c;
  }
}

}  // namespace
}  // namespace gpos
