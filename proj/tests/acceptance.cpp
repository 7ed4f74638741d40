// Acceptance run: one PASS/FAIL line per criterion, plus acceptance.json
// with the measured numbers and timings in the --out directory.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numbers>

#include <Eigen/LU>

#include "gpos/io.hpp"
#include "gpos/orderstats.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpos;

namespace {

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
  json data = json::object();

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

struct Runner {
  json report = json::object();
  int failures = 0;

  template <typename F>
  void run(int id, const std::string& title, double budget_s, F&& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double t = seconds_since(t0);
    if (budget_s > 0.0) o.require(t < budget_s, "runtime " + format_double(t) + " s over budget");
    o.data["runtime_s"] = t;
    o.data["pass"] = o.pass;
    if (!o.detail.empty()) o.data["failures"] = o.detail;
    report["criterion_" + std::to_string(id)] = o.data;
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s (%.1f s)%s%s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), t,
                o.detail.empty() ? "" : " -- ", o.detail.c_str());
    std::fflush(stdout);
  }
};

// ---------------------------------------------------------------------------

void criterion1(Outcome& o) {
  Rng rng(101);
  std::size_t mismatches = 0, total = 0;
  for (int s = 0; s < 1000; ++s) {
    const auto n = static_cast<std::size_t>(std::llround(std::pow(10.0, rng.uniform(2.0, 6.0))));
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(n, 200));
    std::vector<double> x(n);
    for (double& v : x) v = s % 4 == 0 ? std::round(10.0 * rng.normal()) : rng.normal();
    TopK acc(k);
    acc.update(x);
    total += n;
    std::sort(x.begin(), x.end(), std::greater<>{});
    if (extract_yk(acc) != x[k - 1]) ++mismatches;
  }
  o.data["streams"] = 1000;
  o.data["values"] = total;
  o.data["mismatches"] = mismatches;
  o.require(mismatches == 0, std::to_string(mismatches) + " streams differ from the sort oracle");
}

void criterion2(Outcome& o) {
  const SimConfig cfg;
  const auto grid = cfg.grid();
  Rng rng(202);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double hs = rng.uniform(0.2, 12.0), tp = rng.uniform(4.0, 20.0);
    const auto s = wave_spectrum(hs, tp, grid);
    double m0 = 0.0;
    for (std::size_t j = 0; j + 1 < s.omega.size(); ++j)
      m0 += (s.omega[j + 1] - s.omega[j]) * (s.density[j] + s.density[j + 1]) / 2.0;
    worst = std::max(worst, std::abs(m0 / (hs * hs / 16.0) - 1.0));
  }
  o.data["m0_worst_relative_error"] = worst;
  o.require(worst <= 0.005, "m0 error " + format_double(worst));

  json states = json::array();
  for (auto [hs, tp] : {std::pair{3.0, 10.0}, std::pair{7.4, 9.6}, std::pair{1.0, 6.0}}) {
    const auto resp = response_spectrum(wave_spectrum(hs, tp, grid), cfg.transfer);
    double target = 0.0;
    for (std::size_t j = 0; j + 1 < resp.omega.size(); ++j)
      target += (resp.omega[j + 1] - resp.omega[j]) * (resp.density[j] + resp.density[j + 1]) / 2.0;
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto x = realize_time_series(resp, cfg.dt, cfg.duration, derive_seed(202, seed));
      const double sd = sample_std(x);
      acc += sd * sd;
    }
    const double rel = acc / 200.0 / target - 1.0;
    states.push_back({{"hs", hs}, {"tp", tp}, {"variance_relative_error", rel}});
    o.require(std::abs(rel) <= 0.02, "variance error " + format_double(rel) + " at hs=" + format_double(hs));
  }
  o.data["variance_closure"] = states;
}

void criterion3(Outcome& o) {
  const SimConfig cfg;
  std::vector<double> pooled;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = simulate({3.0, 10.0, 0.0, 0}, cfg, derive_seed(303, seed));
    pooled.insert(pooled.end(), out.peaks.begin(), out.peaks.end());
  }
  const double sigma = fit_rayleigh(positive_part(pooled)).params[0];
  const double d = testing::ks_statistic(
      pooled, [&](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-x * x / (2.0 * sigma * sigma)); });
  const double crit = testing::ks_critical(0.01) / std::sqrt(static_cast<double>(pooled.size()));
  o.data["peaks"] = pooled.size();
  o.data["sigma"] = sigma;
  o.data["ks_d"] = d;
  o.data["ks_critical"] = crit;
  o.require(d < crit, "KS D " + format_double(d) + " >= " + format_double(crit));
}

void criterion4(Outcome& o) {
  const std::size_t n = 100000;
  Rng rng(404);
  std::vector<double> g(n), r(n), w(n);
  for (auto& v : g) v = 75371.0 - 20983.0 * std::log(-std::log(rng.uniform()));
  for (auto& v : r) v = 2.0 * std::sqrt(-2.0 * std::log(rng.uniform()));
  const double wk = 2.0, wl = 2.0 * std::sqrt(2.0);
  for (auto& v : w) v = wl * std::pow(-std::log(rng.uniform()), 1.0 / wk);

  const auto fg = fit_gumbel(g), fr = fit_rayleigh(r), fw = fit_weibull(w);
  auto within = [&](const char* name, double est, double truth) {
    const double rel = est / truth - 1.0;
    o.data[name] = {{"estimate", est}, {"truth", truth}, {"relative_error", rel}};
    o.require(std::abs(rel) <= 0.01, std::string(name) + " off by " + format_double(rel));
  };
  within("gumbel_mu", fg.params[0], 75371.0);
  within("gumbel_beta", fg.params[1], 20983.0);
  within("rayleigh_sigma", fr.params[0], 2.0);
  within("weibull_k", fw.params[0], wk);
  within("weibull_lambda", fw.params[1], wl);

  // 50 x 50 grid spanning +-5% around each MLE; the MLE must not be beaten.
  std::size_t beaten = 0;
  for (const auto& f : {fg, fw}) {
    const auto& x = f.family == DistFamily::Gumbel ? g : w;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        const std::vector<double> p{f.params[0] * (0.95 + 0.1 * i / 49.0), f.params[1] * (0.95 + 0.1 * j / 49.0)};
        if (log_likelihood(f.family, x, p) > f.log_likelihood) ++beaten;
      }
  }
  for (int i = 0; i < 50; ++i) {
    const double s = fr.params[0] * (0.95 + 0.1 * i / 49.0);
    if (rayleigh_loglik(r, s) > fr.log_likelihood) ++beaten;
  }
  o.data["grid_points_beating_mle"] = beaten;
  o.require(beaten == 0, std::to_string(beaten) + " grid points beat the MLE");
}

/// Criterion 5 part 2: coverage of held-out parameters on a dedicated table.
json coverage_study(Outcome& o, std::size_t threads) {
  const auto design = sample_uniform_inputs(1000, InputBox{}, 505);
  const auto table = build_training_table(design, 20, SimConfig{}, 506, threads);
  SurrogateConfig cfg;
  cfg.n_max = 400;
  cfg.search.threads = threads;
  json out = json::array();
  for (auto fam : {DistFamily::Rayleigh, DistFamily::Weibull}) {
    const auto model = train_surrogate(table, fam, cfg, 507);
    const auto names = param_names(fam);
    for (std::size_t p = 0; p < names.size(); ++p) {
      // Diagnostic only: the thrust cut-out is a jump in vw that a stationary
      // kernel cannot follow, so misses are also counted away from it.
      std::size_t points = 0, inside = 0, inside_noise = 0, away = 0, away_inside = 0;
      double sse = 0.0;
      for (std::size_t i : table.test) {
        const auto& row = table.rows[i];
        if (!row.family(fam)) continue;
        const double truth = row.family(fam)->mean[p];
        const double noise_sd = row.family(fam)->std[p] / std::sqrt(20.0);
        const auto pm = model.param_models()[p].predict(to_vector(row.inputs()));
        const double err = std::abs(pm.mean - truth);
        ++points;
        sse += err * err;
        inside += err <= 1.96 * pm.std;
        inside_noise += err <= 1.96 * std::hypot(pm.std, noise_sd);
        if (std::abs(row.vw - SimConfig{}.thrust.cutout_speed) > 2.5) {
          ++away;
          away_inside += err <= 1.96 * pm.std;
        }
      }
      const double cov = static_cast<double>(inside) / static_cast<double>(points);
      const std::string target = std::string(family_name(fam)) + "_" + names[p];
      out.push_back({{"target", target},
                     {"test_points", points},
                     {"rmse", std::sqrt(sse / static_cast<double>(points))},
                     {"coverage95", cov},
                     {"coverage95_with_mean_noise", static_cast<double>(inside_noise) / static_cast<double>(points)},
                     {"test_points_away_from_cutout", away},
                     {"coverage95_away_from_cutout", static_cast<double>(away_inside) / static_cast<double>(away)}});
      o.require(points >= 200, target + ": only " + std::to_string(points) + " test points");
      o.require(cov >= 0.90 && cov <= 0.99, target + " coverage " + format_double(cov));
    }
  }
  return out;
}

void criterion5(Outcome& o, std::size_t threads) {
  Rng rng(505);
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const auto n = static_cast<Eigen::Index>(5 + rng.below(196));
    MatrixXd x(n, 3);
    VectorXd y(n), noise(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x.row(i) << rng.uniform(0.2, 12.0), rng.uniform(4.0, 20.0), rng.uniform(0.0, 30.0);
      y[i] = 1e5 * std::sin(0.5 * x(i, 0)) + 3e3 * x(i, 1) + rng.normal(0.0, 1e3);
      noise[i] = std::pow(rng.uniform(1e2, 5e3), 2);
    }
    KernelParams k;
    k.signal_variance = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
    k.lengthscales = VectorXd(3);
    for (int d = 0; d < 3; ++d) k.lengthscales[d] = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));
    const auto gp = train(x, y, noise, k);

    // Dense oracle: z-scores and the inverse of the full covariance, built here.
    const double ym = y.mean(), ys = std::sqrt((y.array() - ym).square().mean());
    VectorXd xm = x.colwise().mean().transpose(), xsd(3);
    for (int d = 0; d < 3; ++d) xsd[d] = std::sqrt((x.col(d).array() - xm[d]).square().mean());
    MatrixXd zx = (x.rowwise() - xm.transpose()).array().rowwise() / xsd.transpose().array();
    MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        const double r = ((zx.row(i) - zx.row(j)).array() / k.lengthscales.transpose().array()).matrix().norm();
        a(i, j) = k.signal_variance * (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
      }
    a.diagonal() += noise / (ys * ys);
    a.diagonal().array() += gp.jitter();
    const MatrixXd inv = Eigen::FullPivLU<MatrixXd>(a).inverse();
    const VectorXd alpha = inv * ((y.array() - ym) / ys).matrix();
    for (int q = 0; q < 10; ++q) {
      VectorXd p(3);
      p << rng.uniform(0.0, 13.0), rng.uniform(3.0, 21.0), rng.uniform(0.0, 31.0);
      const VectorXd zp = (p - xm).cwiseQuotient(xsd);
      VectorXd kv(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double r = ((zx.row(j).transpose() - zp).array() / k.lengthscales.array()).matrix().norm();
        kv[j] = k.signal_variance * (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
      }
      const double m = ym + ys * kv.dot(alpha);
      const double sd = ys * std::sqrt(std::max(0.0, k.signal_variance - kv.dot(inv * kv)));
      const auto pm = gp.predict(p);
      worst = std::max(worst, std::abs(pm.mean - m) / std::max(std::abs(m), 1e-300));
      worst = std::max(worst, std::abs(pm.std - sd) / std::max(sd, 1e-12 * ys));
    }
  }
  o.data["oracle_worst_relative_error"] = worst;
  o.require(worst <= 1e-6, "oracle mismatch " + format_double(worst));

  // Noise-free interpolation and reversion to the prior far from the data.
  MatrixXd x(30, 3);
  VectorXd y(30);
  for (int i = 0; i < 30; ++i) {
    x.row(i) << rng.uniform(0.2, 12.0), rng.uniform(4.0, 20.0), rng.uniform(0.0, 30.0);
    y[i] = 5e4 * std::cos(0.4 * x(i, 0)) + 1e3 * x(i, 2);
  }
  const auto gp = train(x, y, VectorXd::Zero(30), KernelParams{});
  const double ys = std::sqrt((y.array() - y.mean()).square().mean());
  double interp = 0.0;
  for (int i = 0; i < 30; ++i) interp = std::max(interp, std::abs(gp.predict(x.row(i).transpose()).mean - y[i]));
  const auto far = gp.predict(VectorXd::Constant(3, 1e6));
  o.data["interpolation_max_abs_error"] = interp;
  o.data["far_mean_minus_target_mean"] = far.mean - y.mean();
  o.require(interp <= 1e-6 * ys, "interpolation error " + format_double(interp));
  o.require(std::abs(far.mean - y.mean()) <= 1e-9 * ys && std::abs(far.std - ys) <= 1e-9 * ys, "no prior reversion");

  o.data["coverage"] = coverage_study(o, threads);
}

struct EndToEnd {
  double sim_seconds = 0.0;
  std::map<std::string, double> surrogate_seconds;
  bool ok = false;
};

void criterion6(Outcome& o, EndToEnd& e2e, const fs::path& out, std::size_t threads) {
  const SimConfig sim;
  const auto weather = synthesize_weather(8760, InputBox{}, 606);
  const auto design = sample_uniform_inputs(400, InputBox{}, 607);
  auto t0 = Clock::now();
  const auto table = build_training_table(design, 20, sim, 608, threads);
  o.data["table_seconds"] = seconds_since(t0);

  QoiConfig q;
  q.k = 100;
  q.n_hours = weather.size();
  q.realizations = 30;
  q.base_seed = 609;
  q.threads = 1;  // criterion 7 compares single-worker wall times
  t0 = Clock::now();
  const auto sim_res = run_qoi(q, weather, SimulatorSource{sim});
  e2e.sim_seconds = seconds_since(t0);
  io::save_qoi(sim_res, out / "qoi_simulator");
  const double sim_mean = summarize(sim_res.yk_samples).mean;
  o.data["simulator_mean_y100"] = sim_mean;

  SurrogateConfig cfg;
  cfg.search.threads = threads;
  for (auto fam : {DistFamily::Weibull, DistFamily::Rayleigh, DistFamily::Gumbel}) {
    const std::string name(family_name(fam));
    t0 = Clock::now();
    const auto model = train_surrogate(table, fam, cfg, 610);
    const double train_s = seconds_since(t0);
    t0 = Clock::now();
    const SurrogateSource src(model, weather, q.base_seed);
    const auto res = run_qoi(q, weather, src);
    e2e.surrogate_seconds[name] = seconds_since(t0);
    io::save_qoi(res, out / ("qoi_" + name));
    const auto rep = compare_qoi(res, sim_res);
    io::save_comparison(rep, res, sim_res, out / ("compare_" + name));
    o.data[name] = {{"train_seconds", train_s},
                    {"qoi_seconds", e2e.surrogate_seconds[name]},
                    {"mean_y100", rep.a_yk.mean},
                    {"relative_mean_difference", rep.relative_mean_difference},
                    {"closest_rank", rep.closest_rank},
                    {"fraction_rank_means_in_band", rep.fraction_a_mean_in_b_band},
                    {"fraction_interval_overlap", rep.fraction_overlap}};
    if (fam == DistFamily::Weibull)
      o.require(std::abs(rep.relative_mean_difference) <= 0.10,
                "(a) weibull mean Y100 off by " + format_double(rep.relative_mean_difference));
    if (fam != DistFamily::Gumbel)
      o.require(rep.fraction_a_mean_in_b_band >= 0.80,
                "(b) " + name + " rank means in band for " + format_double(rep.fraction_a_mean_in_b_band));
    if (fam == DistFamily::Gumbel)
      o.require(rep.a_yk.mean >= sim_mean, "(c) gumbel mean Y100 below simulator");
  }
  e2e.ok = true;
}

void criterion7(Outcome& o, const EndToEnd& e2e) {
  o.require(e2e.ok, "criterion 6 run did not complete");
  if (!e2e.ok) return;
  o.data["simulator_qoi_seconds"] = e2e.sim_seconds;
  for (const auto& [name, s] : e2e.surrogate_seconds) {
    const double ratio = s / e2e.sim_seconds;
    o.data[name + "_ratio"] = ratio;
    o.require(ratio < 0.20, name + " surrogate took " + format_double(ratio) + " of the simulator time");
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::string cmd = std::string("\"") + GPOS_CLI_PATH + "\"";
  for (const auto& a : args) cmd += " \"" + a + "\"";
  cmd += " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> data_files(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json")
      files[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
  return files;
}

void criterion8(Outcome& o, const fs::path& out) {
  auto pipeline = [&](const fs::path& d, const std::string& threads) {
    fs::remove_all(d);
    fs::create_directories(d);
    const std::string w = (d / "weather").string(), t = (d / "table").string(), b = (d / "bundle").string();
    const std::vector<std::vector<std::string>> steps{
        {"weather", "synth", "--hours", "720", "--seed", "81", "--out", w},
        {"trainset", "--n", "60", "--m", "4", "--seed", "82", "--threads", threads, "--out", t},
        {"train", "--table", t + "/training.csv", "--family", "weibull", "--seed", "83", "--restarts", "2",
         "--threads", threads, "--out", b},
        {"eval", "--table", t + "/training.csv", "--bundle", b, "--out", (d / "eval").string()},
        {"qoi", "--source", "simulator", "--weather", w + "/weather.csv", "--k", "20", "--m", "4", "--seed", "84",
         "--threads", threads, "--out", (d / "qoi_sim").string()},
        {"qoi", "--source", "surrogate", "--bundle", b, "--weather", w + "/weather.csv", "--k", "20", "--m", "4",
         "--seed", "84", "--threads", threads, "--out", (d / "qoi_sur").string()},
        {"compare", (d / "qoi_sur").string(), (d / "qoi_sim").string(), "--out", (d / "cmp").string()}};
    for (const auto& s : steps) {
      const int rc = run_cli(s);
      if (rc != 0) throw std::runtime_error("cli step '" + s[0] + "' exited with " + std::to_string(rc));
    }
    return data_files(d);
  };
  const auto a = pipeline(out / "determinism_a", "1");
  const auto b = pipeline(out / "determinism_b", "1");
  const auto c = pipeline(out / "determinism_c", "3");
  o.data["data_files"] = a.size();
  o.require(a.size() >= 12, "too few data files (" + std::to_string(a.size()) + ")");
  std::size_t diff = 0;
  for (const auto& [name, content] : a) {
    if (!b.count(name) || b.at(name) != content) ++diff, o.require(false, "rerun differs: " + name);
    if (!c.count(name) || c.at(name) != content) ++diff, o.require(false, "3 threads differ: " + name);
  }
  o.require(a.size() == b.size() && a.size() == c.size(), "file sets differ");
  o.data["differing_files"] = diff;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_out";
  std::size_t threads = 1;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) out = argv[++i];
    else if (a == "--threads" && i + 1 < argc) threads = static_cast<std::size_t>(std::stoul(argv[++i]));
    else if (a == "--only" && i + 1 < argc) only.push_back(std::stoi(argv[++i]));
    else {
      std::cerr << "usage: acceptance [--out DIR] [--threads N] [--only CRITERION]...\n";
      return 2;
    }
  }
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  fs::create_directories(out);

  Runner r;
  EndToEnd e2e;
  if (wanted(1)) r.run(1, "streaming top-k equals full sort on 1000 streams", 60, criterion1);
  if (wanted(2)) r.run(2, "spectral energy and realization variance closure", 60, criterion2);
  if (wanted(3)) r.run(3, "pooled peaks at hs=3 tp=10 vw=0 are Rayleigh (KS, 0.01)", 60, criterion3);
  if (wanted(4)) r.run(4, "MLE recovery within 1% at n=1e5 and grid optimality", 120, criterion4);
  if (wanted(5))
    r.run(5, "GP dense-oracle agreement, limits and held-out coverage", 300,
          [&](Outcome& o) { criterion5(o, threads); });
  if (wanted(6) || wanted(7))
    r.run(6, "desk-scale Y100: weibull/rayleigh alignment, gumbel ordering", 1800,
          [&](Outcome& o) { criterion6(o, e2e, out, threads); });
  if (wanted(6) || wanted(7))
    r.run(7, "surrogate QoI under 20% of simulator QoI wall time", 0, [&](Outcome& o) { criterion7(o, e2e); });
  if (wanted(8))
    r.run(8, "byte-identical reruns of every CLI stage", 300, [&](Outcome& o) { criterion8(o, out); });

  r.report["threads"] = threads;
  io::write_file(out / "acceptance.json", io::dump(r.report));
  std::printf("%d criterion failure(s); details in %s\n", r.failures, (out / "acceptance.json").string().c_str());
  return r.failures == 0 ? 0 : 1;
}
