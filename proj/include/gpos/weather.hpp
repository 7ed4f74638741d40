#ifndef GPOS_WEATHER_HPP
#define GPOS_WEATHER_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gpos/common.hpp"

namespace gpos {

/// One hour of sea state.
struct WeatherRecord {
  double hs = 0.0;  ///< significant wave height [m]
  double tp = 0.0;  ///< peak wave period [s]
  double vw = 0.0;  ///< mean wind speed [m/s]
  std::uint64_t index = 0;

  bool operator==(const WeatherRecord&) const = default;
};

/// Physical validity, independent of any design box.
inline bool is_physical(const WeatherRecord& r) {
  return std::isfinite(r.hs) && std::isfinite(r.tp) && std::isfinite(r.vw) &&
         r.hs > 0.0 && r.tp > 0.0 && r.vw >= 0.0;
}

struct Interval {
  double min = 0.0;
  double max = 0.0;

  double width() const { return max - min; }
  double mid() const { return 0.5 * (min + max); }
  bool contains(double x) const { return x >= min && x <= max; }
};

/// Design domain for the three weather inputs.
struct InputBox {
  Interval hs{0.2, 12.0};
  Interval tp{4.0, 20.0};
  Interval vw{0.0, 30.0};

  /// Throws ConfigError on a degenerate or non-finite box.
  void validate() const {
    auto check = [](const Interval& iv, const char* name, bool allow_zero_min) {
      if (!std::isfinite(iv.min) || !std::isfinite(iv.max))
        throw ConfigError(std::string("input box: non-finite bound for ") + name);
      if (!(iv.min < iv.max))
        throw ConfigError(std::string("input box: degenerate interval for ") + name);
      if (allow_zero_min ? iv.min < 0.0 : iv.min <= 0.0)
        throw ConfigError(std::string("input box: non-positive lower bound for ") + name);
    };
    check(hs, "hs", false);
    check(tp, "tp", false);
    check(vw, "vw", true);
  }

  bool contains(const WeatherRecord& r) const {
    return hs.contains(r.hs) && tp.contains(r.tp) && vw.contains(r.vw);
  }
};

/// Parameters of the synthetic weather generator. Each variable follows an
/// independent stationary AR(1) in a latent space; the latent value z is mapped
/// into its box interval by min + width * logistic(z).
struct SynthParams {
  double ar_coefficient = 0.95;
  // Latent stationary means; negative values put the bulk of the hours in the
  // lower part of the box.
  double hs_center = -1.0;
  double tp_center = 0.0;
  double vw_center = -0.5;
  double latent_scale = 1.0;
};

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double into_box(const Interval& iv, double z) {
  // Keep strictly inside the interval even when the logistic saturates.
  const double u = std::clamp(logistic(z), 1e-12, 1.0 - 1e-12);
  return iv.min + iv.width() * u;
}

}  // namespace detail

/// Correlated multi-year weather sequence, deterministic per seed.
inline std::vector<WeatherRecord> synthesize_weather(std::size_t n_hours, const InputBox& box,
                                                     std::uint64_t seed,
                                                     const SynthParams& params = {}) {
  if (n_hours < 1) throw UsageError("synthesize_weather: n_hours must be >= 1");
  box.validate();
  const double phi = params.ar_coefficient;
  if (!(phi > -1.0 && phi < 1.0))
    throw ConfigError("synthesize_weather: AR coefficient must lie in (-1, 1)");
  const double innovation = std::sqrt(1.0 - phi * phi);

  Rng rng(seed);
  const double centers[3] = {params.hs_center, params.tp_center, params.vw_center};
  double z[3];
  for (double& zi : z) zi = rng.normal();  // stationary start

  std::vector<WeatherRecord> out;
  out.reserve(n_hours);
  for (std::size_t t = 0; t < n_hours; ++t) {
    if (t > 0)
      for (double& zi : z) zi = phi * zi + innovation * rng.normal();
    WeatherRecord r;
    r.hs = detail::into_box(box.hs, centers[0] + params.latent_scale * z[0]);
    r.tp = detail::into_box(box.tp, centers[1] + params.latent_scale * z[1]);
    r.vw = detail::into_box(box.vw, centers[2] + params.latent_scale * z[2]);
    r.index = t;
    out.push_back(r);
  }
  return out;
}

/// Independent uniform draws over the box (training design).
inline std::vector<WeatherRecord> sample_uniform_inputs(std::size_t n, const InputBox& box,
                                                        std::uint64_t seed) {
  if (n < 1) throw UsageError("sample_uniform_inputs: n must be >= 1");
  box.validate();
  Rng rng(seed);
  std::vector<WeatherRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    WeatherRecord r;
    r.hs = rng.uniform(box.hs.min, box.hs.max);
    r.tp = rng.uniform(box.tp.min, box.tp.max);
    r.vw = rng.uniform(box.vw.min, box.vw.max);
    r.index = i;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header `index,hs,tp,vw`

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

}  // namespace detail

inline std::vector<WeatherRecord> parse_weather_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("weather csv: empty input");
  ++line_no;
  const auto header = detail::split_csv_line(detail::trim(line));
  const std::vector<std::string> expected{"index", "hs", "tp", "vw"};
  std::vector<std::string> trimmed;
  for (const auto& h : header) trimmed.push_back(detail::trim(h));
  if (trimmed != expected)
    throw DataError("weather csv: schema error, expected header 'index,hs,tp,vw'");

  std::vector<WeatherRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4)
      throw DataError("weather csv: schema error at line " + std::to_string(line_no) +
                      ": expected 4 columns, got " + std::to_string(fields.size()));
    double v[4];
    for (int i = 0; i < 4; ++i)
      if (!detail::parse_double(fields[static_cast<std::size_t>(i)], v[i]))
        throw DataError("weather csv: parse error at line " + std::to_string(line_no) +
                        ": non-numeric field '" + fields[static_cast<std::size_t>(i)] + "'");
    if (v[0] < 0.0 || v[0] != std::floor(v[0]))
      throw DataError("weather csv: parse error at line " + std::to_string(line_no) +
                      ": index must be a non-negative integer");
    WeatherRecord r{v[1], v[2], v[3], static_cast<std::uint64_t>(v[0])};
    if (!is_physical(r))
      throw DataError("weather csv: parse error at line " + std::to_string(line_no) +
                      ": value out of physical range (need hs > 0, tp > 0, vw >= 0)");
    out.push_back(r);
  }
  return out;
}

inline std::vector<WeatherRecord> load_weather(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("weather csv: cannot open '" + path + "'");
  return parse_weather_csv(in);
}

inline void write_weather_csv(std::ostream& out, const std::vector<WeatherRecord>& records) {
  out << "index,hs,tp,vw\n";
  for (const auto& r : records)
    out << r.index << ',' << format_double(r.hs) << ',' << format_double(r.tp) << ','
        << format_double(r.vw) << '\n';
}

}  // namespace gpos

#endif
