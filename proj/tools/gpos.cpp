// gpos: batch front end for the weather -> simulator -> surrogate -> Y_k pipeline.
//
// Every subcommand writes into a fresh --out directory (built under a
// temporary sibling and renamed on success, so a failed run leaves nothing
// behind) together with run_manifest.json.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unistd.h>

#include <CLI11.hpp>

#include "gpos/io.hpp"
#include "gpos/orderstats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpos;

namespace {

constexpr int kManifestFormatVersion = 1;

std::size_t default_threads() {
  if (const char* env = std::getenv("GPOS_THREADS")) {
    std::size_t v = 0;
    const std::string_view s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size() && v > 0) return v;
    throw UsageError("GPOS_THREADS must be a positive integer, got '" + std::string(s) + "'");
  }
  return 1;
}

/// Output directory staged next to its final location.
class Staging {
 public:
  Staging(fs::path out, bool force) : out_(std::move(out)), force_(force) {
    if (out_.empty()) throw UsageError("--out is required");
    if (fs::exists(out_) && !force_)
      throw UsageError("output directory '" + out_.string() + "' exists (use --force to overwrite)");
    const fs::path parent = fs::absolute(out_).parent_path();
    fs::create_directories(parent);
    tmp_ = parent / ("." + out_.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;
  ~Staging() {
    std::error_code ec;
    if (!committed_) fs::remove_all(tmp_, ec);
  }

  const fs::path& dir() const { return tmp_; }
  const fs::path& final_dir() const { return out_; }

  void commit() {
    if (force_) fs::remove_all(out_);
    fs::rename(tmp_, out_);
    committed_ = true;
  }

 private:
  fs::path out_, tmp_;
  bool force_;
  bool committed_ = false;
};

struct Common {
  std::string out;
  bool force = false;
  std::size_t threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Output directory (created fresh)")->required();
  sub->add_flag("--force", c.force, "Replace an existing output directory");
  sub->add_option("--threads", c.threads, "Worker threads (default: $GPOS_THREADS or 1)")
      ->check(CLI::PositiveNumber);
}

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) names.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(names.begin(), names.end());
  return names;
}

/// Write run_manifest.json, then move the staged directory into place.
void finish(Staging& st, const std::string& command, json config, json seeds, json inputs, json formats,
            std::chrono::steady_clock::time_point started, json extra = json::object()) {
  json m{{"format", "gpos-run-manifest"},
         {"format_version", kManifestFormatVersion},
         {"command", command},
         {"config", std::move(config)},
         {"seeds", std::move(seeds)},
         {"inputs", std::move(inputs)},
         {"output_dir", st.final_dir().generic_string()},
         {"outputs", listing(st.dir())},
         {"format_versions", std::move(formats)}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  io::write_file(st.dir() / "run_manifest.json", io::dump(m));
  st.commit();
}

InputBox default_box() { return InputBox{}; }

json box_json(const InputBox& b) {
  return json{{"hs", {b.hs.min, b.hs.max}}, {"tp", {b.tp.min, b.tp.max}}, {"vw", {b.vw.min, b.vw.max}}};
}

std::string weather_csv_string(const std::vector<WeatherRecord>& w) {
  std::ostringstream o;
  write_weather_csv(o, w);
  return o.str();
}

TrainingTable load_training_table(const fs::path& p) {
  std::istringstream in(io::read_file(p));
  return read_training_csv(in);
}

// ---------------------------------------------------------------------------

struct WeatherArgs {
  Common c;
  std::string kind;
  std::size_t hours = 0;
  std::optional<std::uint64_t> seed;
};

void run_weather(const WeatherArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!a.seed) throw UsageError("--seed is required");
  if (a.hours == 0) throw UsageError("--hours must be >= 1");
  const InputBox box = default_box();
  Staging st(a.c.out, a.c.force);
  const auto w = a.kind == "synth" ? synthesize_weather(a.hours, box, *a.seed)
                                   : sample_uniform_inputs(a.hours, box, *a.seed);
  io::write_file(st.dir() / "weather.csv", weather_csv_string(w));
  finish(st, "weather " + a.kind, {{"hours", a.hours}, {"box", box_json(box)}}, {{"seed", *a.seed}},
         json::object(), {{"weather_csv", 1}}, t0);
}

struct TrainsetArgs {
  Common c;
  std::size_t n = 0, m = 0;
  std::optional<std::uint64_t> seed;
  std::string sim_config;
};

void run_trainset(const TrainsetArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!a.seed) throw UsageError("--seed is required");
  if (a.n == 0) throw UsageError("--n must be >= 1");
  if (a.m < 2) throw UsageError("--m must be >= 2 (a standard deviation needs two runs)");
  const SimConfig sim = a.sim_config.empty() ? SimConfig{} : io::load_sim_config(a.sim_config);
  sim.validate();
  const InputBox box = default_box();
  Staging st(a.c.out, a.c.force);
  const std::uint64_t design_seed = derive_seed(*a.seed, 0), run_seed = derive_seed(*a.seed, 1);
  const auto design = sample_uniform_inputs(a.n, box, design_seed);
  const auto table = build_training_table(design, a.m, sim, run_seed, a.c.threads);
  std::ostringstream o;
  write_training_csv(o, table);
  io::write_file(st.dir() / "training.csv", o.str());
  json inputs = json::object();
  if (!a.sim_config.empty()) inputs["sim_config"] = a.sim_config;
  finish(st, "trainset",
         {{"n", a.n}, {"m", a.m}, {"box", box_json(box)}, {"sim", io::to_json(sim)}, {"threads", a.c.threads}},
         {{"seed", *a.seed}, {"design_seed", design_seed}, {"run_seed", run_seed}}, inputs,
         {{"training_csv", 1}}, t0,
         {{"rows", table.rows.size()}, {"train_rows", table.train.size()}, {"test_rows", table.test.size()}});
}

struct TrainArgs {
  Common c;
  std::string table, family, mode = "posterior", redraw = "per-hour";
  std::optional<std::uint64_t> seed;
  int restarts = 5;
  std::size_t n_max = 2000;
};

void run_train(const TrainArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!a.seed) throw UsageError("--seed is required");
  const DistFamily fam = parse_family(a.family);
  SurrogateConfig cfg;
  cfg.mode = parse_mode(a.mode);
  cfg.redraw = parse_redraw(a.redraw);
  cfg.search.restarts = a.restarts;
  cfg.search.threads = a.c.threads;
  cfg.n_max = a.n_max;
  const auto table = load_training_table(a.table);
  Staging st(a.c.out, a.c.force);
  const auto model = train_surrogate(table, fam, cfg, *a.seed);
  io::save_bundle(model, st.dir());
  json kernels = json::array();
  auto describe = [](const GPModel& g) {
    return json{{"signal_variance", g.kernel().signal_variance},
                {"lengthscales", io::to_json(g.kernel().lengthscales)},
                {"training_points", g.size()},
                {"jitter", g.jitter()}};
  };
  for (const auto& g : model.param_models()) kernels.push_back(describe(g));
  kernels.push_back(describe(model.l_model()));
  finish(st, "train",
         {{"family", family_name(fam)},
          {"mode", mode_name(cfg.mode)},
          {"redraw", redraw_name(cfg.redraw)},
          {"restarts", cfg.search.restarts},
          {"n_max", cfg.n_max},
          {"threads", a.c.threads}},
         {{"seed", *a.seed}}, {{"table", a.table}},
         {{"surrogate_bundle", io::kBundleFormatVersion}, {"gp_model", io::kGpFormatVersion}}, t0,
         {{"models", io::bundle_model_files(fam)}, {"kernels", kernels}});
}

struct EvalArgs {
  Common c;
  std::string table, bundle;
};

struct TargetEval {
  std::string name;
  double rmse = 0.0;
  double coverage_epistemic = 0.0;  ///< truth inside mean +- 1.96 std
  double coverage_total = 0.0;      ///< std widened by the test row's own noise
  std::size_t points = 0;
};

void run_eval(const EvalArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = io::load_bundle(a.bundle);
  const auto table = load_training_table(a.table);
  const DistFamily fam = model.family();
  std::vector<std::size_t> rows;
  for (std::size_t i : table.test)
    if (table.rows[i].family(fam)) rows.push_back(i);
  if (rows.empty()) throw InsufficientDataError("eval: no test rows with " + std::string(family_name(fam)) + " fits");
  Staging st(a.c.out, a.c.force);

  auto names = param_names(fam);
  names.push_back("l");
  std::vector<TargetEval> evals;
  for (std::size_t t = 0; t < names.size(); ++t) {
    const bool is_l = t + 1 == names.size();
    const GPModel& gp = is_l ? model.l_model() : model.param_models()[t];
    std::string csv = "hs,tp,vw,true,noise_std,pred_mean,pred_std\n";
    TargetEval ev;
    ev.name = is_l ? "l" : std::string(family_name(fam)) + "_" + names[t];
    double sse = 0.0;
    std::size_t in_ep = 0, in_tot = 0;
    for (std::size_t i : rows) {
      const auto& r = table.rows[i];
      const double truth = is_l ? r.l_mean : r.family(fam)->mean[t];
      const double noise = is_l ? r.l_std : r.family(fam)->std[t];
      const auto pm = gp.predict(to_vector(r.inputs()));
      sse += (pm.mean - truth) * (pm.mean - truth);
      const double err = std::abs(pm.mean - truth);
      in_ep += err <= 1.96 * pm.std;
      in_tot += err <= 1.96 * std::sqrt(pm.std * pm.std + noise * noise);
      csv += format_double(r.hs) + "," + format_double(r.tp) + "," + format_double(r.vw) + "," +
             format_double(truth) + "," + format_double(noise) + "," + format_double(pm.mean) + "," +
             format_double(pm.std) + "\n";
    }
    ev.points = rows.size();
    ev.rmse = std::sqrt(sse / static_cast<double>(rows.size()));
    ev.coverage_epistemic = static_cast<double>(in_ep) / static_cast<double>(rows.size());
    ev.coverage_total = static_cast<double>(in_tot) / static_cast<double>(rows.size());
    io::write_file(st.dir() / ("eval_" + ev.name + ".csv"), csv);
    evals.push_back(ev);
  }
  json summary = json::array();
  for (const auto& e : evals)
    summary.push_back({{"target", e.name},
                       {"test_points", e.points},
                       {"rmse", e.rmse},
                       {"coverage95", e.coverage_epistemic},
                       {"coverage95_with_noise", e.coverage_total}});
  io::write_file(st.dir() / "eval_summary.json", io::dump(json{{"family", family_name(fam)}, {"targets", summary}}));
  finish(st, "eval", {{"family", family_name(fam)}}, json::object(), {{"table", a.table}, {"bundle", a.bundle}},
         {{"eval_csv", 1}}, t0);
}

struct QoiArgs {
  Common c;
  std::string source, weather, bundle, sim_config, mode, redraw;
  std::size_t k = 100, m = 100, hours = 0;
  std::optional<std::uint64_t> seed;
};

void run_qoi_cmd(const QoiArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!a.seed) throw UsageError("--seed is required");
  if (a.source != "simulator" && a.source != "surrogate")
    throw UsageError("--source must be simulator or surrogate");
  if (a.source == "surrogate" && a.bundle.empty()) throw UsageError("--source surrogate needs --bundle");
  if (a.weather.empty() && a.hours == 0) throw UsageError("give --weather or --hours");

  std::vector<WeatherRecord> weather;
  json seeds{{"seed", *a.seed}};
  if (!a.weather.empty()) {
    weather = load_weather(a.weather);
    if (a.hours > 0) {
      if (a.hours > weather.size())
        throw UsageError("--hours " + std::to_string(a.hours) + " exceeds the " + std::to_string(weather.size()) +
                         " hours in the weather file");
      weather.resize(a.hours);
    }
  } else {
    const std::uint64_t ws = derive_seed(*a.seed, 0x3ea7ULL);
    weather = synthesize_weather(a.hours, default_box(), ws);
    seeds["weather_seed"] = ws;
  }

  QoiConfig cfg;
  cfg.k = a.k;
  cfg.n_hours = weather.size();
  cfg.realizations = a.m;
  cfg.base_seed = *a.seed;
  cfg.threads = a.c.threads;
  cfg.source = a.source == "simulator" ? QoiSource::Simulator : QoiSource::Surrogate;
  cfg.validate();

  json config{{"source", a.source}, {"k", a.k}, {"m", a.m}, {"hours", weather.size()}, {"threads", a.c.threads}};
  json inputs = json::object();
  if (!a.weather.empty()) inputs["weather"] = a.weather;

  std::optional<SurrogateModel> model;
  SimConfig sim;
  if (cfg.source == QoiSource::Surrogate) {
    model = io::load_bundle(a.bundle);
    if (!a.mode.empty()) model = model->with_mode(parse_mode(a.mode));
    if (!a.redraw.empty()) model = model->with_redraw(parse_redraw(a.redraw));
    inputs["bundle"] = a.bundle;
    config["family"] = family_name(model->family());
    config["mode"] = mode_name(model->mode());
    config["redraw"] = redraw_name(model->redraw());
  } else {
    if (!a.sim_config.empty()) {
      sim = io::load_sim_config(a.sim_config);
      inputs["sim_config"] = a.sim_config;
    }
    config["sim"] = io::to_json(sim);
  }

  Staging st(a.c.out, a.c.force);
  const auto q0 = std::chrono::steady_clock::now();
  QoiResult res;
  if (model) {
    const SurrogateSource src(*model, weather, cfg.base_seed, cfg.threads);
    res = run_qoi(cfg, weather, src);
  } else {
    res = run_qoi(cfg, weather, SimulatorSource{sim});
  }
  const double qoi_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - q0).count();
  io::save_qoi(res, st.dir());
  finish(st, "qoi", config, seeds, inputs, {{"qoi", io::kQoiFormatVersion}}, t0, {{"qoi_wall_time_s", qoi_seconds}});
}

struct CompareArgs {
  Common c;
  std::string a, b;
  std::size_t bins = 20;
};

void run_compare(const CompareArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto ra = io::load_qoi(a.a), rb = io::load_qoi(a.b);
  const auto rep = compare_qoi(ra, rb, a.bins);
  Staging st(a.c.out, a.c.force);
  io::save_comparison(rep, ra, rb, st.dir());
  finish(st, "compare", {{"bins", a.bins}}, json::object(), {{"a", a.a}, {"b", a.b}}, {{"comparison", 1}}, t0);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpos: weather-driven structural response simulation, GP surrogates and Y_k order statistics"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::size_t threads_default = 1;
  try {
    threads_default = default_threads();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  WeatherArgs wa;
  auto* weather = app.add_subcommand("weather", "Generate hourly weather or a uniform design");
  weather->require_subcommand(1);
  CLI::App* weather_subs[2] = {weather->add_subcommand("synth", "Synthetic correlated hourly weather series"),
                               weather->add_subcommand("uniform", "Uniform design over the input box")};
  for (auto* s : weather_subs) {
    add_common(s, wa.c);
    s->add_option("--hours", wa.hours, "Number of rows")->required();
    s->add_option("--seed", wa.seed, "Random seed")->required();
  }

  TrainsetArgs ta;
  auto* trainset = app.add_subcommand("trainset", "Simulate a uniform design M times per point and fit all families");
  add_common(trainset, ta.c);
  trainset->add_option("--n", ta.n, "Design points")->required();
  trainset->add_option("--m", ta.m, "Simulator runs per design point (>= 2)")->required();
  trainset->add_option("--seed", ta.seed, "Random seed")->required();
  trainset->add_option("--sim-config", ta.sim_config, "Simulator configuration JSON");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a surrogate bundle for one distribution family");
  add_common(train_cmd, tr.c);
  train_cmd->add_option("--table", tr.table, "training.csv from trainset")->required();
  train_cmd->add_option("--family", tr.family, "gumbel | rayleigh | weibull")->required();
  train_cmd->add_option("--seed", tr.seed, "Random seed")->required();
  train_cmd->add_option("--mode", tr.mode, "Sampling mode stored in the bundle: point | posterior");
  train_cmd->add_option("--redraw", tr.redraw, "Parameter redraw policy: per-hour | per-realization");
  train_cmd->add_option("--restarts", tr.restarts, "Hyperparameter search restarts")->check(CLI::PositiveNumber);
  train_cmd->add_option("--n-max", tr.n_max, "Subsample the train split to at most this many rows")
      ->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score a bundle on the test split of a training table");
  add_common(eval_cmd, ea.c);
  eval_cmd->add_option("--table", ea.table, "training.csv")->required();
  eval_cmd->add_option("--bundle", ea.bundle, "Surrogate bundle directory")->required();

  QoiArgs qa;
  auto* qoi_cmd = app.add_subcommand("qoi", "Distribution of the k-th largest response over M realizations");
  add_common(qoi_cmd, qa.c);
  qoi_cmd->add_option("--source", qa.source, "simulator | surrogate")->required();
  qoi_cmd->add_option("--k", qa.k, "Order statistic rank")->check(CLI::PositiveNumber);
  qoi_cmd->add_option("--m", qa.m, "Realizations")->check(CLI::PositiveNumber);
  qoi_cmd->add_option("--seed", qa.seed, "Random seed")->required();
  qoi_cmd->add_option("--weather", qa.weather, "weather.csv; without it --hours are synthesized");
  qoi_cmd->add_option("--hours", qa.hours, "Use the first N hours (or synthesize N hours)");
  qoi_cmd->add_option("--bundle", qa.bundle, "Surrogate bundle (surrogate source)");
  qoi_cmd->add_option("--mode", qa.mode, "Override the bundle's sampling mode");
  qoi_cmd->add_option("--redraw", qa.redraw, "Override the bundle's redraw policy");
  qoi_cmd->add_option("--sim-config", qa.sim_config, "Simulator configuration JSON (simulator source)");

  CompareArgs ca;
  auto* compare_cmd = app.add_subcommand("compare", "Compare two qoi result directories (a against b)");
  add_common(compare_cmd, ca.c);
  compare_cmd->add_option("a", ca.a, "Result directory a (e.g. surrogate)")->required();
  compare_cmd->add_option("b", ca.b, "Result directory b (e.g. simulator)")->required();
  compare_cmd->add_option("--bins", ca.bins, "Histogram bins")->check(CLI::PositiveNumber);

  for (Common* c : {&wa.c, &ta.c, &tr.c, &ea.c, &qa.c, &ca.c}) c->threads = threads_default;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (weather->parsed()) {
      wa.kind = weather_subs[0]->parsed() ? "synth" : "uniform";
      run_weather(wa);
    } else if (trainset->parsed()) {
      run_trainset(ta);
    } else if (train_cmd->parsed()) {
      run_train(tr);
    } else if (eval_cmd->parsed()) {
      run_eval(ea);
    } else if (qoi_cmd->parsed()) {
      run_qoi_cmd(qa);
    } else if (compare_cmd->parsed()) {
      run_compare(ca);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
