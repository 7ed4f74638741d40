#ifndef GPOS_SURROGATE_HPP
#define GPOS_SURROGATE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "gpos/common.hpp"
#include "gpos/distfit.hpp"
#include "gpos/gp.hpp"
#include "gpos/simulator.hpp"
#include "gpos/weather.hpp"

namespace gpos {

enum class SamplingMode { Point, PosteriorSample };

/// When sampled parameters are redrawn inside a QoI run: independently for
/// every (hour, realization), or once per realization (a common standard
/// normal per parameter, shifted and scaled by each hour's predictive moments).
enum class ThetaRedraw { PerHour, PerRealization };

inline std::string_view mode_name(SamplingMode m) {
  return m == SamplingMode::Point ? "point" : "posterior";
}
inline SamplingMode parse_mode(std::string_view s) {
  if (s == "point") return SamplingMode::Point;
  if (s == "posterior") return SamplingMode::PosteriorSample;
  throw UsageError("unknown sampling mode '" + std::string(s) + "' (point|posterior)");
}
inline std::string_view redraw_name(ThetaRedraw r) {
  return r == ThetaRedraw::PerHour ? "per-hour" : "per-realization";
}
inline ThetaRedraw parse_redraw(std::string_view s) {
  if (s == "per-hour") return ThetaRedraw::PerHour;
  if (s == "per-realization") return ThetaRedraw::PerRealization;
  throw UsageError("unknown redraw policy '" + std::string(s) + "' (per-hour|per-realization)");
}

struct SurrogateConfig {
  HyperSearch search{};
  GPOptions param_options{};
  /// The L model predicts an observation (a peak count), so its predictive
  /// Gaussian includes the run-to-run noise.
  GPOptions l_options{.include_noise = true};
  std::size_t n_max = 2000;
  std::size_t min_rows = 20;
  SamplingMode mode = SamplingMode::PosteriorSample;
  ThetaRedraw redraw = ThetaRedraw::PerHour;
};

inline VectorXd to_vector(const WeatherRecord& r) { return VectorXd{{r.hs, r.tp, r.vw}}; }

struct SurrogateMoments {
  std::vector<PredictiveMoments> params;
  PredictiveMoments l;
};

struct ParamDraw {
  std::vector<double> theta;
  std::size_t l = 0;
};

struct Provenance {
  SamplingMode mode = SamplingMode::Point;
  std::uint64_t seed = 0;
};

/// Same shape as SimOutput; downstream code consumes it as a SimOutput.
struct GeneratedOutput : SimOutput {
  Provenance provenance;
};

/// Per-family parameter GPs plus an L model. Immutable after training.
class SurrogateModel {
 public:
  SurrogateModel(DistFamily family, std::vector<GPModel> param_models, GPModel l_model,
                 SamplingMode mode = SamplingMode::PosteriorSample,
                 ThetaRedraw redraw = ThetaRedraw::PerHour)
      : family_(family),
        param_models_(std::move(param_models)),
        l_model_(std::move(l_model)),
        mode_(mode),
        redraw_(redraw) {
    if (param_models_.size() != param_count(family_))
      throw UsageError("surrogate: " + std::to_string(param_models_.size()) +
                       " parameter models for family " + std::string(family_name(family_)) +
                       ", expected " + std::to_string(param_count(family_)));
  }

  DistFamily family() const { return family_; }
  const std::vector<GPModel>& param_models() const { return param_models_; }
  const GPModel& l_model() const { return l_model_; }
  SamplingMode mode() const { return mode_; }
  ThetaRedraw redraw() const { return redraw_; }

  SurrogateModel with_mode(SamplingMode mode) const {
    SurrogateModel m = *this;
    m.mode_ = mode;
    return m;
  }
  SurrogateModel with_redraw(ThetaRedraw redraw) const {
    SurrogateModel m = *this;
    m.redraw_ = redraw;
    return m;
  }

  SurrogateMoments moments(const WeatherRecord& x) const {
    const VectorXd v = to_vector(x);
    SurrogateMoments out;
    for (const auto& gp : param_models_) out.params.push_back(gp.predict(v));
    out.l = l_model_.predict(v);
    return out;
  }

 private:
  DistFamily family_;
  std::vector<GPModel> param_models_;
  GPModel l_model_;
  SamplingMode mode_;
  ThetaRedraw redraw_;
};

/// Train one GP per distribution parameter and one for L on the rows of the
/// train split that carry fits for `family`.
inline SurrogateModel train_surrogate(const TrainingTable& table, DistFamily family,
                                      const SurrogateConfig& cfg, std::uint64_t seed) {
  std::vector<std::size_t> rows;
  for (std::size_t i : table.train)
    if (table.rows[i].family(family)) rows.push_back(i);
  if (rows.size() < cfg.min_rows)
    throw InsufficientDataError("train_surrogate: " + std::to_string(rows.size()) +
                                " training rows with " + std::string(family_name(family)) +
                                " fits, need at least " + std::to_string(cfg.min_rows));
  if (rows.size() > cfg.n_max) {
    Rng rng(derive_seed(seed, 0x5ab5ULL));
    shuffle(rows, rng);
    rows.resize(cfg.n_max);
    std::sort(rows.begin(), rows.end());
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  MatrixXd x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = table.rows[rows[static_cast<std::size_t>(i)]];
    x.row(i) << r.hs, r.tp, r.vw;
  }

  auto fit_one = [&](const VectorXd& y, const VectorXd& noise, std::uint64_t s, const GPOptions& opt) {
    const auto hyper = fit_hyperparams_detailed(x, y, noise, s, cfg.search, opt);
    return train(x, y, noise, hyper.kernel, opt);
  };

  std::vector<GPModel> params;
  for (std::size_t p = 0; p < param_count(family); ++p) {
    VectorXd y(n), noise(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& st = *table.rows[rows[static_cast<std::size_t>(i)]].family(family);
      y[i] = st.mean[p];
      noise[i] = st.std[p] * st.std[p];
    }
    params.push_back(fit_one(y, noise, derive_seed(seed, p), cfg.param_options));
  }
  VectorXd ly(n), lnoise(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = table.rows[rows[static_cast<std::size_t>(i)]];
    ly[i] = r.l_mean;
    lnoise[i] = r.l_std * r.l_std;
  }
  GPModel l = fit_one(ly, lnoise, derive_seed(seed, 0x1ULL << 32), cfg.l_options);
  return SurrogateModel(family, std::move(params), std::move(l), cfg.mode, cfg.redraw);
}

/// Parameters and L from precomputed predictive moments. `theta_rng` drives
/// parameter draws (PosteriorSample mode only), `l_rng` the L draw.
inline ParamDraw draw_params(const SurrogateModel& model, const SurrogateMoments& mo, Rng& theta_rng,
                             Rng& l_rng) {
  ParamDraw d;
  for (std::size_t p = 0; p < mo.params.size(); ++p) {
    const auto& m = mo.params[p];
    double theta = m.mean;
    const bool positive = is_positive_param(model.family(), p);
    if (model.mode() == SamplingMode::PosteriorSample) {
      theta = m.mean + m.std * theta_rng.normal();
      if (positive && theta <= 0.0) theta = m.mean + m.std * theta_rng.normal();
    }
    if (positive)
      theta = std::max(theta, std::max(1e-6 * std::abs(m.mean), std::numeric_limits<double>::min()));
    d.theta.push_back(theta);
  }
  const double l = std::round(mo.l.mean + mo.l.std * l_rng.normal());
  d.l = l > 0.0 ? static_cast<std::size_t>(l) : 0;
  return d;
}

inline ParamDraw predict_params(const SurrogateModel& model, const WeatherRecord& x, std::uint64_t seed) {
  Rng theta_rng(derive_seed(seed, 0));
  Rng l_rng(derive_seed(seed, 1));
  return draw_params(model, model.moments(x), theta_rng, l_rng);
}

/// Draw one sample from the family with the given parameters.
inline double sample_family(DistFamily f, std::span<const double> theta, Rng& rng) {
  const double u = rng.uniform();
  switch (f) {
    case DistFamily::Gumbel: return theta[0] - theta[1] * std::log(-std::log(u));
    case DistFamily::Rayleigh: return theta[0] * std::sqrt(-2.0 * std::log(u));
    case DistFamily::Weibull: return theta[1] * std::pow(-std::log(u), 1.0 / theta[0]);
  }
  return 0.0;
}

inline GeneratedOutput generate_from_draw(DistFamily f, const ParamDraw& d, Rng& rng) {
  GeneratedOutput out;
  out.peaks.resize(d.l);
  for (double& v : out.peaks) v = sample_family(f, d.theta, rng);
  return out;
}

/// One surrogate "run": parameters and L at x, then L draws from the family.
inline GeneratedOutput generate_responses(const SurrogateModel& model, const WeatherRecord& x,
                                          std::uint64_t seed) {
  const auto d = predict_params(model, x, seed);
  Rng rng(derive_seed(seed, 2));
  auto out = generate_from_draw(model.family(), d, rng);
  out.provenance = {model.mode(), seed};
  return out;
}

}  // namespace gpos

#endif
