#ifndef GPOS_DISTFIT_HPP
#define GPOS_DISTFIT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gpos/common.hpp"
#include "gpos/simulator.hpp"
#include "gpos/weather.hpp"

namespace gpos {

enum class DistFamily { Gumbel = 0, Rayleigh = 1, Weibull = 2 };

inline constexpr std::array<DistFamily, 3> kAllFamilies{DistFamily::Gumbel, DistFamily::Rayleigh,
                                                        DistFamily::Weibull};

inline std::string_view family_name(DistFamily f) {
  switch (f) {
    case DistFamily::Gumbel: return "gumbel";
    case DistFamily::Rayleigh: return "rayleigh";
    case DistFamily::Weibull: return "weibull";
  }
  return "?";
}

inline DistFamily parse_family(std::string_view s) {
  for (auto f : kAllFamilies)
    if (family_name(f) == s) return f;
  throw UsageError("unknown distribution family '" + std::string(s) + "'");
}

/// Parameter names in storage order: Gumbel (mu, beta), Rayleigh (sigma),
/// Weibull (k, lambda).
inline std::vector<std::string> param_names(DistFamily f) {
  switch (f) {
    case DistFamily::Gumbel: return {"mu", "beta"};
    case DistFamily::Rayleigh: return {"sigma"};
    case DistFamily::Weibull: return {"k", "lambda"};
  }
  return {};
}

inline std::size_t param_count(DistFamily f) { return param_names(f).size(); }

/// Whether parameter i of the family must be strictly positive.
inline bool is_positive_param(DistFamily f, std::size_t i) {
  return !(f == DistFamily::Gumbel && i == 0);
}

struct FitResult {
  DistFamily family = DistFamily::Gumbel;
  std::vector<double> params;
  double log_likelihood = 0.0;
};

// ---------------------------------------------------------------------------
// Log-likelihoods

inline double rayleigh_loglik(std::span<const double> x, double sigma) {
  const double s2 = sigma * sigma;
  double ll = 0.0;
  for (double v : x) ll += std::log(v) - std::log(s2) - v * v / (2.0 * s2);
  return ll;
}

inline double gumbel_loglik(std::span<const double> x, double mu, double beta) {
  double ll = 0.0;
  for (double v : x) {
    const double z = (v - mu) / beta;
    ll += -std::log(beta) - z - std::exp(-z);
  }
  return ll;
}

inline double weibull_loglik(std::span<const double> x, double k, double lambda) {
  double ll = 0.0;
  for (double v : x) {
    const double lz = std::log(v / lambda);
    ll += std::log(k / lambda) + (k - 1.0) * lz - std::exp(k * lz);
  }
  return ll;
}

inline double log_likelihood(DistFamily f, std::span<const double> x,
                             std::span<const double> params) {
  switch (f) {
    case DistFamily::Gumbel: return gumbel_loglik(x, params[0], params[1]);
    case DistFamily::Rayleigh: return rayleigh_loglik(x, params[0]);
    case DistFamily::Weibull: return weibull_loglik(x, params[0], params[1]);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood fitters

namespace detail {

inline void require_size(std::span<const double> x, const char* who) {
  if (x.size() < 2)
    throw InsufficientDataError(std::string(who) + ": need at least 2 values, got " +
                                std::to_string(x.size()));
}

inline void require_positive(std::span<const double> x, const char* who) {
  for (double v : x)
    if (!(v > 0.0) || !std::isfinite(v))
      throw DataError(std::string(who) + ": values must be finite and > 0");
}

/// Safeguarded Newton for a monotone scalar equation f(t) = 0 on (lo, hi)
/// with f(lo) and f(hi) of opposite sign. Newton steps that leave the bracket
/// are replaced by bisection.
struct RootTrace {
  std::vector<double> iterates;
  std::string str() const {
    std::string s;
    const std::size_t from = iterates.size() > 8 ? iterates.size() - 8 : 0;
    for (std::size_t i = from; i < iterates.size(); ++i) s += format_double(iterates[i]) + " ";
    return s;
  }
};

template <typename F>
double safeguarded_newton(F&& f_and_df, double t0, double lo, double hi, bool increasing,
                          const char* who, int max_iter = 100, double rel_tol = 1e-9) {
  RootTrace trace;
  double t = std::clamp(t0, lo, hi);
  for (int it = 0; it < max_iter; ++it) {
    const auto [f, df] = f_and_df(t);
    trace.iterates.push_back(t);
    if (f == 0.0) return t;
    // Shrink the bracket using the sign of f.
    if ((f < 0.0) == increasing)
      lo = t;
    else
      hi = t;
    double next = (df != 0.0 && std::isfinite(df)) ? t - f / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= rel_tol * std::abs(t)) return next;
    t = next;
  }
  throw NumericError(std::string(who) + ": no convergence after " + std::to_string(max_iter) +
                     " iterations; last iterates: " + trace.str());
}

}  // namespace detail

/// Closed-form MLE sigma = sqrt(sum x^2 / 2n).
inline FitResult fit_rayleigh(std::span<const double> data) {
  detail::require_size(data, "fit_rayleigh");
  detail::require_positive(data, "fit_rayleigh");
  double ss = 0.0;
  for (double v : data) ss += v * v;
  const double sigma = std::sqrt(ss / (2.0 * static_cast<double>(data.size())));
  return {DistFamily::Rayleigh, {sigma}, rayleigh_loglik(data, sigma)};
}

/// Gumbel (maximum) MLE. The scale solves
///   beta = mean(x) - sum x e^{-x/beta} / sum e^{-x/beta}
/// by Newton from the moment estimate; location follows in closed form.
/// Works on standardized data and maps back, which makes the fit exactly
/// location/scale equivariant up to rounding.
inline FitResult fit_gumbel(std::span<const double> data) {
  detail::require_size(data, "fit_gumbel");
  for (double v : data)
    if (!std::isfinite(v)) throw DataError("fit_gumbel: non-finite value");
  const double m = mean(data);
  const double s = sample_std(data);
  if (!(s > 0.0) || s <= 1e-14 * std::abs(m))
    throw DegenerateFitError("fit_gumbel: zero-variance data, scale collapses to 0");

  const std::size_t n = data.size();
  std::vector<double> y(n);
  double ymin = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = (data[i] - m) / s;
    ymin = i == 0 ? y[i] : std::min(ymin, y[i]);
  }

  // Weighted moments with weights exp(-(y - ymin)/b) <= 1.
  struct Moments {
    double sum_w, mean_w, var_w;
  };
  auto moments = [&](double b) {
    double sw = 0.0, swy = 0.0, swy2 = 0.0;
    for (double v : y) {
      const double w = std::exp(-(v - ymin) / b);
      sw += w;
      swy += w * v;
      swy2 += w * v * v;
    }
    const double mw = swy / sw;
    return Moments{sw, mw, std::max(0.0, swy2 / sw - mw * mw)};
  };
  // g(b) = b - mean(y) + weighted mean, with mean(y) = 0; g is increasing.
  auto g = [&](double b) {
    const auto mo = moments(b);
    return std::pair{b + mo.mean_w, 1.0 + mo.var_w / (b * b)};
  };

  const double b0 = std::sqrt(6.0) / std::numbers::pi;
  double lo = b0, hi = b0;
  for (int i = 0; i < 200 && g(lo).first >= 0.0; ++i) lo *= 0.5;
  for (int i = 0; i < 200 && g(hi).first <= 0.0; ++i) hi *= 2.0;
  const double b = detail::safeguarded_newton(g, b0, lo, hi, true, "fit_gumbel");

  const auto mo = moments(b);
  const double mu_y = ymin - b * std::log(mo.sum_w / static_cast<double>(n));
  const double mu = m + s * mu_y;
  const double beta = s * b;
  return {DistFamily::Gumbel, {mu, beta}, gumbel_loglik(data, mu, beta)};
}

inline constexpr double kWeibullMaxShape = 100.0;

/// Weibull MLE: Newton on the shape profile equation
///   1/k + mean(log x) - sum x^k log x / sum x^k = 0,
/// scale in closed form given the shape. Shape is capped at 100.
inline FitResult fit_weibull(std::span<const double> data) {
  detail::require_size(data, "fit_weibull");
  detail::require_positive(data, "fit_weibull");
  const std::size_t n = data.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = std::log(data[i]);
  const double log_center = mean(t);
  double tmax = -INFINITY, tmin = INFINITY;
  for (double& v : t) {
    v -= log_center;
    tmax = std::max(tmax, v);
    tmin = std::min(tmin, v);
  }
  if (!(tmax - tmin > 1e-12)) throw DegenerateFitError("fit_weibull: all values equal");

  struct Moments {
    double log_mean_w, mean_w, var_w;  // log of (1/n) sum e^{k t}
  };
  auto moments = [&](double k) {
    double sw = 0.0, swt = 0.0, swt2 = 0.0;
    for (double v : t) {
      const double w = std::exp(k * (v - tmax));
      sw += w;
      swt += w * v;
      swt2 += w * v * v;
    }
    const double mw = swt / sw;
    return Moments{k * tmax + std::log(sw / static_cast<double>(n)), mw,
                   std::max(0.0, swt2 / sw - mw * mw)};
  };
  // h(k) = 1/k - weighted mean of t (mean of t is 0); h is decreasing.
  auto h = [&](double k) {
    const auto mo = moments(k);
    return std::pair{1.0 / k - mo.mean_w, -1.0 / (k * k) - mo.var_w};
  };

  double k;
  if (h(kWeibullMaxShape).first >= 0.0) {
    k = kWeibullMaxShape;
  } else {
    const double sd = sample_std(t);
    const double k0 = std::clamp(std::numbers::pi / (std::sqrt(6.0) * sd), 1e-3, kWeibullMaxShape);
    double lo = std::min(k0, 1.0);
    for (int i = 0; i < 200 && h(lo).first <= 0.0; ++i) lo *= 0.5;
    k = detail::safeguarded_newton(h, k0, lo, kWeibullMaxShape, false, "fit_weibull");
  }
  const double lambda = std::exp(log_center + moments(k).log_mean_w / k);
  return {DistFamily::Weibull, {k, lambda}, weibull_loglik(data, k, lambda)};
}

inline FitResult fit(DistFamily f, std::span<const double> data) {
  switch (f) {
    case DistFamily::Gumbel: return fit_gumbel(data);
    case DistFamily::Rayleigh: return fit_rayleigh(data);
    case DistFamily::Weibull: return fit_weibull(data);
  }
  throw UsageError("fit: unknown family");
}

// ---------------------------------------------------------------------------
// Aggregation into training rows

struct ParamStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct FitAggregate {
  DistFamily family = DistFamily::Gumbel;
  ParamStats params;
  double l_mean = 0.0;
  double l_std = 0.0;
};

/// Mean and sample std (M - 1 denominator) of each parameter and of L over M runs.
inline FitAggregate aggregate_fits(std::span<const FitResult> fits, std::span<const double> counts) {
  if (fits.size() < 2) throw UsageError("aggregate_fits: need M >= 2 fits for a standard deviation");
  if (counts.size() != fits.size())
    throw UsageError("aggregate_fits: counts and fits differ in length");
  const DistFamily fam = fits.front().family;
  const std::size_t np = param_count(fam);
  for (const auto& f : fits)
    if (f.family != fam || f.params.size() != np)
      throw UsageError("aggregate_fits: fits of mixed families");

  FitAggregate agg;
  agg.family = fam;
  std::vector<double> column(fits.size());
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t m = 0; m < fits.size(); ++m) column[m] = fits[m].params[p];
    agg.params.mean.push_back(mean(column));
    agg.params.std.push_back(sample_std(column));
  }
  agg.l_mean = mean(counts);
  agg.l_std = sample_std(counts);
  return agg;
}

enum class Split { Train, Test };

struct TrainingRow {
  double hs = 0.0, tp = 0.0, vw = 0.0;
  /// Indexed by DistFamily; empty when any of the M fits failed.
  std::array<std::optional<ParamStats>, 3> fits;
  double l_mean = 0.0;
  double l_std = 0.0;
  Split split = Split::Train;

  const std::optional<ParamStats>& family(DistFamily f) const {
    return fits[static_cast<std::size_t>(f)];
  }
  WeatherRecord inputs() const { return {hs, tp, vw, 0}; }
};

struct TrainingTable {
  std::vector<TrainingRow> rows;
  std::vector<std::size_t> train;  ///< row indices, ascending
  std::vector<std::size_t> test;   ///< row indices, ascending
};

inline constexpr double kTrainFraction = 0.8;

/// Seeded 80/20 split. Marks rows and fills the index lists.
inline void assign_split(TrainingTable& table, std::uint64_t seed) {
  const std::size_t n = table.rows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5b117ULL));
  shuffle(order, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(kTrainFraction * static_cast<double>(n)));
  table.train.clear();
  table.test.clear();
  for (std::size_t i = 0; i < n; ++i)
    table.rows[order[i]].split = i < n_train ? Split::Train : Split::Test;
  for (std::size_t i = 0; i < n; ++i)
    (table.rows[i].split == Split::Train ? table.train : table.test).push_back(i);
}

/// Rayleigh and Weibull have positive support; their fits use only the
/// strictly positive peaks of a run.
inline std::vector<double> positive_part(std::span<const double> x) {
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x)
    if (v > 0.0) out.push_back(v);
  return out;
}

/// Run the simulator M times at every design point, fit all three families
/// per run and aggregate. Row order follows the design regardless of threads.
inline TrainingTable build_training_table(std::span<const WeatherRecord> design, std::size_t runs,
                                          const SimConfig& cfg, std::uint64_t seed,
                                          std::size_t threads = 1) {
  if (runs < 2) throw UsageError("build_training_table: M must be >= 2");
  cfg.validate();
  TrainingTable table;
  table.rows.resize(design.size());
  parallel_for(design.size(), threads, [&](std::size_t i) {
    const auto& x = design[i];
    TrainingRow row;
    row.hs = x.hs;
    row.tp = x.tp;
    row.vw = x.vw;
    std::array<std::vector<FitResult>, 3> fits;
    std::array<bool, 3> ok{true, true, true};
    std::vector<double> counts;
    counts.reserve(runs);
    for (std::size_t m = 0; m < runs; ++m) {
      const auto out = simulate(x, cfg, derive_seed(seed, i, m));
      counts.push_back(static_cast<double>(out.count()));
      const auto positive = positive_part(out.peaks);
      for (auto fam : kAllFamilies) {
        const auto fi = static_cast<std::size_t>(fam);
        if (!ok[fi]) continue;
        try {
          fits[fi].push_back(fit(fam, fam == DistFamily::Gumbel ? std::span<const double>(out.peaks)
                                                                : std::span<const double>(positive)));
        } catch (const Error&) {
          ok[fi] = false;
        }
      }
    }
    for (auto fam : kAllFamilies) {
      const auto fi = static_cast<std::size_t>(fam);
      if (!ok[fi]) continue;
      row.fits[fi] = aggregate_fits(fits[fi], counts).params;
    }
    row.l_mean = mean(counts);
    row.l_std = sample_std(counts);
    table.rows[i] = std::move(row);
  });
  assign_split(table, seed);
  return table;
}

// ---------------------------------------------------------------------------
// Training table CSV

inline constexpr std::string_view kTrainingHeader =
    "hs,tp,vw,gumbel_mu,gumbel_mu_std,gumbel_beta,gumbel_beta_std,rayleigh_sigma,"
    "rayleigh_sigma_std,weibull_k,weibull_k_std,weibull_lambda,weibull_lambda_std,l_mean,l_std,"
    "split";

inline void write_training_csv(std::ostream& out, const TrainingTable& table) {
  out << kTrainingHeader << '\n';
  for (const auto& r : table.rows) {
    out << format_double(r.hs) << ',' << format_double(r.tp) << ',' << format_double(r.vw);
    for (auto fam : kAllFamilies) {
      const auto& st = r.family(fam);
      for (std::size_t p = 0; p < param_count(fam); ++p) {
        if (st)
          out << ',' << format_double(st->mean[p]) << ',' << format_double(st->std[p]);
        else
          out << ",,";
      }
    }
    out << ',' << format_double(r.l_mean) << ',' << format_double(r.l_std) << ','
        << (r.split == Split::Train ? "train" : "test") << '\n';
  }
}

inline TrainingTable read_training_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTrainingHeader)
    throw DataError("training csv: schema error, unexpected header");
  TrainingTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(detail::trim(line));
    if (f.size() != 16)
      throw DataError("training csv: line " + std::to_string(line_no) + ": expected 16 columns");
    auto num = [&](std::size_t i) {
      double v;
      if (!detail::parse_double(f[i], v))
        throw DataError("training csv: line " + std::to_string(line_no) + ": bad number in column " +
                        std::to_string(i + 1));
      return v;
    };
    TrainingRow r;
    r.hs = num(0);
    r.tp = num(1);
    r.vw = num(2);
    std::size_t col = 3;
    for (auto fam : kAllFamilies) {
      const std::size_t np = param_count(fam);
      bool present = !detail::trim(f[col]).empty();
      ParamStats st;
      for (std::size_t p = 0; p < np; ++p, col += 2) {
        const bool here = !detail::trim(f[col]).empty() && !detail::trim(f[col + 1]).empty();
        if (here != present)
          throw DataError("training csv: line " + std::to_string(line_no) +
                          ": partially missing fit for " + std::string(family_name(fam)));
        if (present) {
          st.mean.push_back(num(col));
          st.std.push_back(num(col + 1));
        }
      }
      if (present) r.fits[static_cast<std::size_t>(fam)] = std::move(st);
    }
    r.l_mean = num(13);
    r.l_std = num(14);
    const std::string split = detail::trim(f[15]);
    if (split == "train")
      r.split = Split::Train;
    else if (split == "test")
      r.split = Split::Test;
    else
      throw DataError("training csv: line " + std::to_string(line_no) + ": split must be train|test");
    (r.split == Split::Train ? table.train : table.test).push_back(table.rows.size());
    table.rows.push_back(std::move(r));
  }
  return table;
}

}  // namespace gpos

#endif
