#ifndef GPOS_IO_HPP
#define GPOS_IO_HPP

// File formats: simulator configuration, GP models, surrogate bundles, QoI
// results and comparison reports. Requires nlohmann/json.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpos/common.hpp"
#include "gpos/distfit.hpp"
#include "gpos/gp.hpp"
#include "gpos/orderstats.hpp"
#include "gpos/simulator.hpp"
#include "gpos/surrogate.hpp"

namespace gpos::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kGpFormatVersion = 1;
inline constexpr int kBundleFormatVersion = 1;
inline constexpr int kQoiFormatVersion = 1;

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out << content;
  if (!out) throw DataError("write failed for '" + p.string() + "'");
}

inline json parse_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in '" + p.string() + "': " + e.what());
  }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Simulator configuration

inline json to_json(const SimConfig& c) {
  return json{{"dt", c.dt},
              {"duration", c.duration},
              {"omega0", c.transfer.omega0},
              {"zeta", c.transfer.zeta},
              {"gain", c.transfer.gain},
              {"rated_speed", c.thrust.rated_speed},
              {"cutout_speed", c.thrust.cutout_speed},
              {"rated_force", c.thrust.rated_force},
              {"lever_arm", c.lever_arm}};
}

/// Keys absent from the file keep their defaults; unknown keys are rejected.
inline SimConfig sim_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sim config: expected a JSON object");
  SimConfig c;
  const std::pair<const char*, double*> fields[] = {
      {"dt", &c.dt},
      {"duration", &c.duration},
      {"omega0", &c.transfer.omega0},
      {"zeta", &c.transfer.zeta},
      {"gain", &c.transfer.gain},
      {"rated_speed", &c.thrust.rated_speed},
      {"cutout_speed", &c.thrust.cutout_speed},
      {"rated_force", &c.thrust.rated_force},
      {"lever_arm", &c.lever_arm}};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto& [name, dst] : fields)
      if (it.key() == name) {
        if (!it->is_number()) throw ConfigError(std::string("sim config: '") + name + "' must be a number");
        *dst = it->get<double>();
        known = true;
      }
    if (!known) throw ConfigError("sim config: unknown key '" + it.key() + "'");
  }
  c.validate();
  return c;
}

inline SimConfig load_sim_config(const fs::path& p) { return sim_config_from_json(parse_json(p)); }

// ---------------------------------------------------------------------------
// GP models

inline json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json to_json(const GPModel& m) {
  json inputs = json::array();
  for (Eigen::Index i = 0; i < m.inputs().rows(); ++i) inputs.push_back(to_json(VectorXd(m.inputs().row(i))));
  const auto& s = m.standardization();
  const auto& o = m.options();
  return json{{"format", "gpos-gp"},
              {"format_version", kGpFormatVersion},
              {"kernel", {{"type", "matern52"},
                          {"signal_variance", m.kernel().signal_variance},
                          {"lengthscales", to_json(m.kernel().lengthscales)}}},
              {"standardization", {{"input_mean", to_json(s.input_mean)},
                                   {"input_scale", to_json(s.input_scale)},
                                   {"target_mean", s.target_mean},
                                   {"target_scale", s.target_scale}}},
              {"options", {{"jitter_start", o.jitter_start},
                           {"jitter_growth", o.jitter_growth},
                           {"jitter_levels", o.jitter_levels},
                           {"include_noise", o.include_noise}}},
              {"train_inputs", inputs},
              {"train_targets", to_json(m.targets())},
              {"noise_variances", to_json(m.noise_variances())}};
}

inline GPModel gp_from_json(const json& j) {
  try {
    if (j.at("format") != "gpos-gp") throw DataError("gp model: unexpected format tag");
    if (j.at("format_version").get<int>() != kGpFormatVersion)
      throw DataError("gp model: unsupported format version");
    KernelParams k;
    k.signal_variance = j.at("kernel").at("signal_variance").get<double>();
    k.lengthscales = vector_from_json(j.at("kernel").at("lengthscales"));
    Standardization s;
    const auto& js = j.at("standardization");
    s.input_mean = vector_from_json(js.at("input_mean"));
    s.input_scale = vector_from_json(js.at("input_scale"));
    s.target_mean = js.at("target_mean").get<double>();
    s.target_scale = js.at("target_scale").get<double>();
    GPOptions o;
    const auto& jo = j.at("options");
    o.jitter_start = jo.at("jitter_start").get<double>();
    o.jitter_growth = jo.at("jitter_growth").get<double>();
    o.jitter_levels = jo.at("jitter_levels").get<int>();
    o.include_noise = jo.at("include_noise").get<bool>();
    const auto& rows = j.at("train_inputs");
    const auto d = k.lengthscales.size();
    MatrixXd x(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const VectorXd r = vector_from_json(rows[i]);
      if (r.size() != d) throw DataError("gp model: input row dimension mismatch");
      x.row(static_cast<Eigen::Index>(i)) = r.transpose();
    }
    return GPModel(k, std::move(x), vector_from_json(j.at("train_targets")),
                   vector_from_json(j.at("noise_variances")), std::move(s), o);
  } catch (const json::exception& e) {
    throw DataError(std::string("gp model: ") + e.what());
  }
}

inline void save_gp(const GPModel& m, const fs::path& p) { write_file(p, dump(to_json(m))); }
inline GPModel load_gp(const fs::path& p) { return gp_from_json(parse_json(p)); }

// ---------------------------------------------------------------------------
// Surrogate bundle: <dir>/manifest.json + one model file per target.

inline std::vector<std::string> bundle_model_files(DistFamily f) {
  std::vector<std::string> files;
  for (const auto& p : param_names(f)) files.push_back(std::string(family_name(f)) + "_" + p + ".json");
  files.push_back("l.json");
  return files;
}

inline void save_bundle(const SurrogateModel& m, const fs::path& dir) {
  fs::create_directories(dir);
  const auto files = bundle_model_files(m.family());
  for (std::size_t p = 0; p < m.param_models().size(); ++p) save_gp(m.param_models()[p], dir / files[p]);
  save_gp(m.l_model(), dir / files.back());
  json manifest{{"format", "gpos-surrogate"},
                {"format_version", kBundleFormatVersion},
                {"family", family_name(m.family())},
                {"mode", mode_name(m.mode())},
                {"redraw", redraw_name(m.redraw())},
                {"params", param_names(m.family())},
                {"models", files}};
  write_file(dir / "manifest.json", dump(manifest));
}

inline SurrogateModel load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("surrogate bundle: '" + dir.string() + "' is not a directory");
  const json man = parse_json(dir / "manifest.json");
  try {
    if (man.at("format") != "gpos-surrogate") throw DataError("surrogate bundle: unexpected format tag");
    if (man.at("format_version").get<int>() != kBundleFormatVersion)
      throw DataError("surrogate bundle: unsupported format version");
    const DistFamily fam = parse_family(man.at("family").get<std::string>());
    const auto files = bundle_model_files(fam);
    std::vector<GPModel> params;
    for (std::size_t p = 0; p + 1 < files.size(); ++p) params.push_back(load_gp(dir / files[p]));
    return SurrogateModel(fam, std::move(params), load_gp(dir / files.back()),
                          parse_mode(man.at("mode").get<std::string>()),
                          parse_redraw(man.at("redraw").get<std::string>()));
  } catch (const json::exception& e) {
    throw DataError(std::string("surrogate bundle: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// QoI results: yk_samples.csv, rank_summary.csv, summary.json

inline std::string yk_samples_csv(const QoiResult& r) {
  std::string s = "realization,yk\n";
  for (std::size_t m = 0; m < r.yk_samples.size(); ++m)
    s += std::to_string(m) + "," + format_double(r.yk_samples[m]) + "\n";
  return s;
}

inline std::string rank_summary_csv(const QoiResult& r) {
  std::string s = "rank,mean,p2.5,p97.5\n";
  for (std::size_t j = 0; j < r.k; ++j)
    s += std::to_string(j + 1) + "," + format_double(r.rank_mean[j]) + "," + format_double(r.rank_p025[j]) +
         "," + format_double(r.rank_p975[j]) + "\n";
  return s;
}

inline json qoi_summary(const QoiResult& r) {
  const auto s = summarize(r.yk_samples);
  return json{{"format", "gpos-qoi"},
              {"format_version", kQoiFormatVersion},
              {"k", r.k},
              {"realizations", r.yk_samples.size()},
              {"total_responses", r.total_responses},
              {"yk", {{"mean", s.mean}, {"std", s.std}, {"p2.5", s.p025}, {"p50", s.p50}, {"p97.5", s.p975}}}};
}

inline void save_qoi(const QoiResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "yk_samples.csv", yk_samples_csv(r));
  write_file(dir / "rank_summary.csv", rank_summary_csv(r));
  write_file(dir / "summary.json", dump(qoi_summary(r)));
}

/// Reload the persisted parts of a QoI result (samples and per-rank summaries).
inline QoiResult load_qoi(const fs::path& dir) {
  QoiResult r;
  const json summary = parse_json(dir / "summary.json");
  r.k = summary.at("k").get<std::size_t>();
  r.total_responses = summary.at("total_responses").get<std::uint64_t>();
  auto rows = [&](const fs::path& p, std::size_t cols) {
    std::istringstream in(read_file(p));
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> out;
    while (std::getline(in, line)) {
      if (detail::trim(line).empty()) continue;
      const auto f = detail::split_csv_line(detail::trim(line));
      if (f.size() != cols) throw DataError("qoi result: bad row in '" + p.string() + "'");
      std::vector<double> v(cols);
      for (std::size_t i = 0; i < cols; ++i)
        if (!detail::parse_double(f[i], v[i])) throw DataError("qoi result: bad number in '" + p.string() + "'");
      out.push_back(std::move(v));
    }
    return out;
  };
  for (const auto& row : rows(dir / "yk_samples.csv", 2)) r.yk_samples.push_back(row[1]);
  for (const auto& row : rows(dir / "rank_summary.csv", 4)) {
    r.rank_mean.push_back(row[1]);
    r.rank_p025.push_back(row[2]);
    r.rank_p975.push_back(row[3]);
  }
  if (r.rank_mean.size() != r.k) throw DataError("qoi result: rank summary length differs from k");
  if (r.yk_samples.empty()) throw DataError("qoi result: no Y_k samples");
  return r;
}

// ---------------------------------------------------------------------------
// Comparison report: report.json, rank_curves.csv, yk_histogram.csv

inline json to_json(const SampleSummary& s) {
  return json{{"mean", s.mean}, {"std", s.std}, {"p2.5", s.p025}, {"p50", s.p50}, {"p97.5", s.p975}};
}

inline void save_comparison(const ComparisonReport& rep, const QoiResult& a, const QoiResult& b,
                            const fs::path& dir) {
  fs::create_directories(dir);
  json j{{"format", "gpos-comparison"},
         {"k", rep.k},
         {"a_yk", to_json(rep.a_yk)},
         {"b_yk", to_json(rep.b_yk)},
         {"relative_mean_difference", rep.relative_mean_difference},
         {"a_label", rep.a_conservative ? "conservative" : "non-conservative"},
         {"closest_rank_in_b", rep.closest_rank},
         {"fraction_interval_overlap", rep.fraction_overlap},
         {"fraction_a_mean_in_b_band", rep.fraction_a_mean_in_b_band}};
  write_file(dir / "report.json", dump(j));

  std::string curves = "rank,a_mean,a_p2.5,a_p97.5,b_mean,b_p2.5,b_p97.5,overlap\n";
  for (std::size_t i = 0; i < rep.k; ++i)
    curves += std::to_string(i + 1) + "," + format_double(a.rank_mean[i]) + "," + format_double(a.rank_p025[i]) +
              "," + format_double(a.rank_p975[i]) + "," + format_double(b.rank_mean[i]) + "," +
              format_double(b.rank_p025[i]) + "," + format_double(b.rank_p975[i]) + "," +
              (rep.interval_overlap[i] ? "1" : "0") + "\n";
  write_file(dir / "rank_curves.csv", curves);

  std::string hist = "bin_lo,bin_hi,a_count,b_count\n";
  const auto& h = rep.histogram;
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i)
    hist += format_double(h.edges[i]) + "," + format_double(h.edges[i + 1]) + "," + std::to_string(h.a_counts[i]) +
            "," + std::to_string(h.b_counts[i]) + "\n";
  write_file(dir / "yk_histogram.csv", hist);
}

}  // namespace gpos::io

#endif
