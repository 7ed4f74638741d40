#ifndef GPOS_ORDERSTATS_HPP
#define GPOS_ORDERSTATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gpos/common.hpp"
#include "gpos/simulator.hpp"
#include "gpos/surrogate.hpp"
#include "gpos/weather.hpp"

namespace gpos {

/// Bounded multiset of the k largest values seen so far (min-heap).
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {
    if (k == 0) throw UsageError("TopK: k must be >= 1");
    heap_.reserve(k);
  }

  void push(double v) {
    if (heap_.size() < k_) {
      heap_.push_back(v);
      std::push_heap(heap_.begin(), heap_.end(), std::greater<>{});
    } else if (v > heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end(), std::greater<>{});
      heap_.back() = v;
      std::push_heap(heap_.begin(), heap_.end(), std::greater<>{});
    }
  }

  void update(std::span<const double> batch) {
    for (double v : batch) push(v);
  }

  void merge(const TopK& other) {
    if (other.k_ != k_) throw UsageError("TopK::merge: different k");
    update(other.heap_);
  }

  std::size_t k() const { return k_; }
  std::size_t size() const { return heap_.size(); }

  /// Contents, largest first.
  std::vector<double> sorted_desc() const {
    std::vector<double> v = heap_;
    std::sort(v.begin(), v.end(), std::greater<>{});
    return v;
  }

 private:
  std::size_t k_;
  std::vector<double> heap_;

  friend double extract_yk(const TopK&);
};

inline TopK& topk_update(TopK& acc, std::span<const double> batch) {
  acc.update(batch);
  return acc;
}

/// The k-th largest value seen (the smallest retained one).
inline double extract_yk(const TopK& acc) {
  if (acc.heap_.size() < acc.k_)
    throw InsufficientDataError("extract_yk: saw " + std::to_string(acc.heap_.size()) +
                                " values, " + std::to_string(acc.k_ - acc.heap_.size()) +
                                " short of k = " + std::to_string(acc.k_));
  return acc.heap_.front();
}

// ---------------------------------------------------------------------------

enum class QoiSource { Simulator, Surrogate };

struct QoiConfig {
  std::size_t k = 100;
  std::size_t n_hours = 0;
  std::size_t realizations = 100;
  QoiSource source = QoiSource::Simulator;
  std::uint64_t base_seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (k < 1 || n_hours < 1 || realizations < 1)
      throw UsageError("qoi config: k, n_hours and realizations must all be >= 1");
  }
};

struct QoiResult {
  std::size_t k = 0;
  std::vector<double> yk_samples;               ///< one per realization
  std::vector<std::vector<double>> ranks;       ///< [realization][rank-1], non-increasing
  std::vector<double> rank_mean;                ///< [rank-1]
  std::vector<double> rank_p025;
  std::vector<double> rank_p975;
  std::uint64_t total_responses = 0;
};

/// Per-rank mean and 2.5/97.5 percentiles across realizations.
inline void summarize_ranks(QoiResult& r) {
  const std::size_t m = r.ranks.size();
  r.rank_mean.assign(r.k, 0.0);
  r.rank_p025.assign(r.k, 0.0);
  r.rank_p975.assign(r.k, 0.0);
  std::vector<double> col(m);
  for (std::size_t j = 0; j < r.k; ++j) {
    for (std::size_t i = 0; i < m; ++i) col[i] = r.ranks[i][j];
    r.rank_mean[j] = mean(col);
    std::sort(col.begin(), col.end());
    r.rank_p025[j] = percentile_sorted(col, 2.5);
    r.rank_p975[j] = percentile_sorted(col, 97.5);
  }
}

/// Response source backed by the simulator.
struct SimulatorSource {
  SimConfig cfg;

  SimOutput operator()(std::size_t /*realization*/, std::size_t /*hour*/, const WeatherRecord& x,
                       std::uint64_t seed) const {
    return simulate(x, cfg, seed);
  }
};

/// Response source backed by a surrogate. Predictive moments depend only on
/// the weather, so they are computed once per hour and shared by all
/// realizations.
class SurrogateSource {
 public:
  SurrogateSource(const SurrogateModel& model, std::span<const WeatherRecord> weather,
                  std::uint64_t base_seed, std::size_t threads = 1)
      : model_(model), base_seed_(base_seed), moments_(weather.size()) {
    parallel_for(weather.size(), threads,
                 [&](std::size_t h) { moments_[h] = model_.moments(weather[h]); });
  }

  SimOutput operator()(std::size_t realization, std::size_t hour, const WeatherRecord& /*x*/,
                       std::uint64_t seed) const {
    const std::uint64_t theta_seed = model_.redraw() == ThetaRedraw::PerRealization
                                         ? derive_seed(base_seed_, realization, ~std::uint64_t{0})
                                         : derive_seed(seed, 0);
    Rng theta_rng(theta_seed);
    Rng l_rng(derive_seed(seed, 1));
    const auto d = draw_params(model_, moments_.at(hour), theta_rng, l_rng);
    Rng rng(derive_seed(seed, 2));
    return generate_from_draw(model_.family(), d, rng);
  }

 private:
  const SurrogateModel& model_;
  std::uint64_t base_seed_;
  std::vector<SurrogateMoments> moments_;
};

/// Brute-force Y_k: for each realization stream every hour through `source`
/// with seed derive_seed(base, m, hour), keep the running top k, and extract.
template <typename Source>
QoiResult run_qoi(const QoiConfig& cfg, std::span<const WeatherRecord> weather, const Source& source) {
  cfg.validate();
  if (weather.size() != cfg.n_hours)
    throw UsageError("run_qoi: weather has " + std::to_string(weather.size()) + " hours, config says " +
                     std::to_string(cfg.n_hours));
  QoiResult result;
  result.k = cfg.k;
  result.yk_samples.assign(cfg.realizations, 0.0);
  result.ranks.assign(cfg.realizations, {});
  std::vector<std::uint64_t> counts(cfg.realizations, 0);

  parallel_for(cfg.realizations, cfg.threads, [&](std::size_t m) {
    TopK acc(cfg.k);
    std::uint64_t seen = 0;
    for (std::size_t h = 0; h < weather.size(); ++h) {
      const SimOutput out = source(m, h, weather[h], derive_seed(cfg.base_seed, m, h));
      acc.update(out.peaks);
      seen += out.peaks.size();
    }
    if (acc.size() < cfg.k)
      throw InsufficientDataError("run_qoi: realization " + std::to_string(m) + " produced " +
                                  std::to_string(seen) + " responses, fewer than k = " +
                                  std::to_string(cfg.k));
    result.yk_samples[m] = extract_yk(acc);
    result.ranks[m] = acc.sorted_desc();
    counts[m] = seen;
  });
  for (auto c : counts) result.total_responses += c;
  summarize_ranks(result);
  return result;
}

// ---------------------------------------------------------------------------
// Comparison

struct SampleSummary {
  double mean = 0.0, std = 0.0, p025 = 0.0, p50 = 0.0, p975 = 0.0;
};

inline SampleSummary summarize(std::vector<double> x) {
  SampleSummary s;
  s.mean = mean(x);
  s.std = sample_std(x);
  std::sort(x.begin(), x.end());
  s.p025 = percentile_sorted(x, 2.5);
  s.p50 = percentile_sorted(x, 50.0);
  s.p975 = percentile_sorted(x, 97.5);
  return s;
}

struct Histogram {
  std::vector<double> edges;  ///< bins + 1
  std::vector<std::size_t> a_counts, b_counts;
};

struct ComparisonReport {
  std::size_t k = 0;
  SampleSummary a_yk, b_yk;
  /// (mean_a - mean_b) / |mean_b|; positive means `a` is conservative.
  double relative_mean_difference = 0.0;
  bool a_conservative = false;
  /// 1-based rank j whose mean in `b` is closest to a's mean Y_k.
  std::size_t closest_rank = 0;
  std::vector<bool> interval_overlap;  ///< per rank: a and b 95% intervals intersect
  std::vector<bool> a_mean_in_b_band;  ///< per rank: a's mean inside b's 2.5-97.5 band
  double fraction_overlap = 0.0;
  double fraction_a_mean_in_b_band = 0.0;
  Histogram histogram;
};

inline Histogram joint_histogram(std::span<const double> a, std::span<const double> b, std::size_t bins) {
  Histogram h;
  double lo = INFINITY, hi = -INFINITY;
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!(hi > lo)) {
    hi = lo + 1.0;
    lo -= 1.0;
  }
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  auto fill = [&](std::span<const double> x) {
    std::vector<std::size_t> c(bins, 0);
    for (double v : x) {
      auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
      ++c[std::min(i, bins - 1)];
    }
    return c;
  };
  h.a_counts = fill(a);
  h.b_counts = fill(b);
  return h;
}

/// Compare `a` (typically a surrogate) against `b` (typically the simulator).
inline ComparisonReport compare_qoi(const QoiResult& a, const QoiResult& b, std::size_t bins = 20) {
  if (a.k != b.k)
    throw UsageError("compare_qoi: mismatched k (" + std::to_string(a.k) + " vs " + std::to_string(b.k) + ")");
  if (a.rank_mean.size() != a.k || b.rank_mean.size() != b.k)
    throw UsageError("compare_qoi: missing per-rank summaries");
  ComparisonReport r;
  r.k = a.k;
  r.a_yk = summarize(a.yk_samples);
  r.b_yk = summarize(b.yk_samples);
  r.relative_mean_difference = (r.a_yk.mean - r.b_yk.mean) / std::abs(r.b_yk.mean);
  r.a_conservative = r.relative_mean_difference > 0.0;

  double best = INFINITY;
  for (std::size_t j = 0; j < b.k; ++j) {
    const double d = std::abs(b.rank_mean[j] - r.a_yk.mean);
    if (d < best) {
      best = d;
      r.closest_rank = j + 1;
    }
  }

  std::size_t overlap = 0, inside = 0;
  for (std::size_t j = 0; j < r.k; ++j) {
    const bool ov = a.rank_p025[j] <= b.rank_p975[j] && b.rank_p025[j] <= a.rank_p975[j];
    const bool in = a.rank_mean[j] >= b.rank_p025[j] && a.rank_mean[j] <= b.rank_p975[j];
    r.interval_overlap.push_back(ov);
    r.a_mean_in_b_band.push_back(in);
    overlap += ov;
    inside += in;
  }
  r.fraction_overlap = static_cast<double>(overlap) / static_cast<double>(r.k);
  r.fraction_a_mean_in_b_band = static_cast<double>(inside) / static_cast<double>(r.k);
  r.histogram = joint_histogram(a.yk_samples, b.yk_samples, bins);
  return r;
}

}  // namespace gpos

#endif
