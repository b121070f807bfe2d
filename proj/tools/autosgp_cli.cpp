// Benchmark driver: runs the automatic SGPR procedure, exact GPR, SVGP and the
// trivial baselines on a delimited data file or a toy generator, and writes
// long-form and pivoted reports.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "autosgp/autosgp.hpp"

namespace {

namespace fs = std::filesystem;
using autosgp::harness::MetricRow;
using autosgp::harness::RunManifest;

struct Common {
  std::string data;
  std::string toy;
  std::string target;
  long long n = 500;
  double noise_sd = 0.1;
  std::string kernel = "se";
  std::uint64_t seed = 0;
  int seeds = 1;
  std::string out = "results";
  std::string format = "csv";
  std::optional<double> timeout_secs;
  std::vector<long long> m_schedule;
  long long exact_gpr_cap = 20000;
};

struct SvgpOptions {
  long long m = 100;
  int steps = 20000;
  long long batch_size = 0;
  double learning_rate = 0.1;
  bool no_scheduler = false;
  bool fixed_inducing = false;
};

void add_common(CLI::App* app, Common& c, bool data_required) {
  auto* data = app->add_option("--data", c.data, "delimited numeric file with a header row");
  auto* toy = app->add_option("--toy", c.toy, "toy generator")->check(CLI::IsMember({"smooth1d", "step1d"}));
  data->excludes(toy);
  toy->excludes(data);
  if (data_required) app->callback([data, toy] {
      if (data->count() + toy->count() == 0) throw CLI::RequiredError("--data or --toy");
    });
  app->add_option("--target", c.target, "target column name or index (default: last)");
  app->add_option("--n", c.n, "toy dataset size")->check(CLI::Range(10LL, 100000000LL));
  app->add_option("--noise-sd", c.noise_sd, "toy noise standard deviation")->check(CLI::NonNegativeNumber);
  app->add_option("--kernel", c.kernel, "kernel family")
      ->check(CLI::IsMember({"se", "matern12", "matern32", "matern52", "arccos0", "arccos1", "arccos2"}));
  app->add_option("--seed", c.seed, "first seed");
  app->add_option("--seeds", c.seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--format", c.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  app->add_option("--timeout-secs", c.timeout_secs, "training-time budget per run")->check(CLI::PositiveNumber);
  app->add_option("--m-schedule", c.m_schedule, "inducing-point schedule")->delimiter(',');
  app->add_option("--exact-gpr-cap", c.exact_gpr_cap, "largest training set for exact GPR")->check(CLI::PositiveNumber);
}

std::string dataset_id(const Common& c) { return c.toy.empty() ? fs::path(c.data).stem().string() : c.toy; }

autosgp::harness::StandardizedDataset load(const Common& c, std::uint64_t seed) {
  if (!c.toy.empty()) return autosgp::harness::generate_toy(c.toy, c.n, c.noise_sd, seed);
  return autosgp::harness::load_dataset(c.data, c.target, seed);
}

nlohmann::json common_json(const Common& c) {
  nlohmann::json j{{"kernel", c.kernel}, {"exact_gpr_cap", c.exact_gpr_cap}};
  if (c.toy.empty()) {
    j["data"] = c.data;
    j["target"] = c.target;
  } else {
    j["toy"] = c.toy;
    j["n"] = c.n;
    j["noise_sd"] = c.noise_sd;
  }
  if (c.timeout_secs) j["timeout_secs"] = *c.timeout_secs;
  return j;
}

RunManifest manifest(const Common& c, const std::string& method, std::uint64_t seed, nlohmann::json config) {
  RunManifest m;
  m.dataset_id = dataset_id(c);
  m.method = method;
  m.kernel = (method == "Linear" || method == "ConstantMean") ? "none" : c.kernel;
  m.seed = seed;
  m.config = std::move(config);
  m.output_path = c.out;
  return m;
}

MetricRow base_row(const RunManifest& m) {
  MetricRow r;
  r.dataset = m.dataset_id;
  r.method = m.method;
  r.kernel = m.kernel;
  r.seed = m.seed;
  return r;
}

void trivial_rows(const Common& c, const autosgp::harness::StandardizedDataset& ds, std::uint64_t seed,
                  std::vector<MetricRow>& rows, std::vector<RunManifest>& manifests) {
  using autosgp::harness::BaselineFit;
  if (ds.n_test() == 0) return;
  const BaselineFit lin = autosgp::harness::linear_baseline(ds.x_train, ds.y_train, ds.x_test, ds.y_test);
  const BaselineFit cst = autosgp::harness::constant_baseline(ds.y_train, ds.y_test);
  for (const auto& [name, fit] : {std::pair{"Linear", lin}, std::pair{"ConstantMean", cst}}) {
    manifests.push_back(manifest(c, name, seed, common_json(c)));
    MetricRow r = base_row(manifests.back());
    r.bound_kind = "train_loglik";
    r.bound_value = fit.train_log_likelihood;
    r.rmse = fit.rmse;
    r.nlpd = fit.nlpd;
    r.note = fit.note;
    rows.push_back(r);
  }
}

void write(const Common& c, const std::vector<MetricRow>& rows, const std::vector<RunManifest>& manifests,
           const std::string& stem) {
  const auto fmt = c.format == "json" ? autosgp::harness::ReportFormat::Json : autosgp::harness::ReportFormat::Csv;
  for (const auto& p : autosgp::harness::emit_report(rows, manifests, fmt, c.out, stem)) {
    std::cout << "wrote " << p.string() << "\n";
  }
}

int cmd_bench(const Common& c) {
  autosgp::BaselineConfig cfg;
  if (!c.m_schedule.empty()) cfg.m_schedule.assign(c.m_schedule.begin(), c.m_schedule.end());
  cfg.timeout_seconds = c.timeout_secs;
  std::vector<MetricRow> rows;
  std::vector<RunManifest> manifests;
  for (int k = 0; k < c.seeds; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    const auto ds = load(c, seed);
    nlohmann::json config = common_json(c);
    config["m_schedule"] = cfg.m_schedule;
    config["max_epochs_per_m"] = cfg.max_epochs_per_m;
    config["m_cutoff_fraction"] = cfg.m_cutoff_fraction;
    config["initial_noise_variance"] = cfg.initial_noise_variance;
    manifests.push_back(manifest(c, "SGPR-baseline", seed, config));
    const auto family = autosgp::kernel_from_name(c.kernel, ds.input_dim());
    const auto records = autosgp::run_baseline(ds, family, cfg);
    for (const auto& rec : records) {
      std::fprintf(stderr, "seed %llu M=%lld elbo=%.6g upper=%.6g rmse=%.4g nlpd=%.4g t=%.3fs%s%s\n",
                   static_cast<unsigned long long>(seed), static_cast<long long>(rec.m), rec.elbo, rec.upper_bound,
                   rec.rmse, rec.nlpd, rec.elapsed_train_seconds, rec.note.empty() ? "" : " ", rec.note.c_str());
    }
    const auto sgpr_rows = autosgp::harness::rows_from_checkpoints(records, manifests.back());
    rows.insert(rows.end(), sgpr_rows.begin(), sgpr_rows.end());
    trivial_rows(c, ds, seed, rows, manifests);
  }
  write(c, rows, manifests, dataset_id(c) + "_" + c.kernel + "_bench");
  return 0;
}

int cmd_gpr(const Common& c) {
  std::vector<MetricRow> rows;
  std::vector<RunManifest> manifests;
  for (int k = 0; k < c.seeds; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    const auto ds = load(c, seed);
    manifests.push_back(manifest(c, "GPR", seed, common_json(c)));
    MetricRow r = base_row(manifests.back());
    r.bound_kind = "lml";
    if (ds.n_train() > c.exact_gpr_cap) {
      r.note = "skipped: N = " + std::to_string(ds.n_train()) + " exceeds the exact GPR cap";
      rows.push_back(r);
      continue;
    }
    const auto init = autosgp::kernel_from_name(c.kernel, ds.input_dim());
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto fit = autosgp::train_gpr(ds.x_train, ds.y_train, init, 0.01);
      r.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.bound_value = fit.lml;
      if (ds.n_test() > 0) {
        const auto p = autosgp::gpr_predict(fit.posterior, ds.x_test);
        r.rmse = autosgp::harness::rmse(p.mean, ds.y_test);
        r.nlpd = autosgp::harness::nlpd(p.mean, p.observation_variance, ds.y_test);
      }
    } catch (const std::runtime_error& e) {
      r.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.note = e.what();
    }
    std::fprintf(stderr, "seed %llu lml=%.6g rmse=%.4g nlpd=%.4g t=%.3fs\n", static_cast<unsigned long long>(seed),
                 r.bound_value, r.rmse, r.nlpd, r.elapsed_s);
    rows.push_back(r);
  }
  write(c, rows, manifests, dataset_id(c) + "_" + c.kernel + "_gpr");
  return 0;
}

int cmd_svgp(const Common& c, const SvgpOptions& o) {
  std::vector<MetricRow> rows;
  std::vector<RunManifest> manifests;
  for (int k = 0; k < c.seeds; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    const auto ds = load(c, seed);
    autosgp::SvgpTrainConfig cfg;
    cfg.batch_size = o.batch_size;
    cfg.learning_rate = o.learning_rate;
    cfg.total_steps = o.steps;
    cfg.use_scheduler = !o.no_scheduler;
    cfg.train_inducing = !o.fixed_inducing;
    cfg.seed = seed;
    const long long m = std::min<long long>(o.m, ds.n_train());
    nlohmann::json config = common_json(c);
    config["m"] = m;
    config["steps"] = cfg.total_steps;
    config["batch_size"] = cfg.batch_size;
    config["learning_rate"] = cfg.learning_rate;
    config["scheduler"] = cfg.use_scheduler;
    config["train_inducing"] = cfg.train_inducing;
    manifests.push_back(manifest(c, "SVGP", seed, config));
    const MetricRow proto = base_row(manifests.back());

    const auto kernel = autosgp::kernel_from_name(c.kernel, ds.input_dim());
    const auto init = autosgp::initial_svgp_params(ds.x_train, kernel, autosgp::BaselineConfig{}.initial_noise_variance, m);
    // Time spent in the callback (metric evaluation) is excluded.
    double untimed = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    auto on_epoch = [&](const autosgp::SvgpEpochInfo& info, const autosgp::SvgpParams& p) {
      const auto e0 = std::chrono::steady_clock::now();
      MetricRow r = proto;
      r.m = m;
      r.elapsed_s = std::chrono::duration<double>(e0 - t0).count() - untimed;
      r.bound_kind = "elbo";
      r.bound_value = info.full_elbo;
      if (ds.n_test() > 0) {
        try {
          const auto pr = autosgp::svgp_predict(p, ds.x_test);
          r.rmse = autosgp::harness::rmse(pr.mean, ds.y_test);
          r.nlpd = autosgp::harness::nlpd(pr.mean, pr.observation_variance, ds.y_test);
        } catch (const autosgp::NonFiniteObjective& e) {
          r.note = e.what();
        }
      }
      rows.push_back(r);
      untimed += std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    };
    try {
      const auto res = autosgp::train_svgp(ds.x_train, ds.y_train, init, cfg, on_epoch);
      std::fprintf(stderr, "seed %llu final elbo=%.6g skipped=%d\n", static_cast<unsigned long long>(seed),
                   res.epoch_elbo.empty() ? 0.0 : res.epoch_elbo.back(), res.skipped_steps);
    } catch (const autosgp::TrainingFailure& e) {
      MetricRow r = proto;
      r.m = m;
      r.bound_kind = "elbo";
      r.note = e.what();
      rows.push_back(r);
    }
  }
  write(c, rows, manifests, dataset_id(c) + "_" + c.kernel + "_svgp");
  return 0;
}

int cmd_toy(const Common& c) {
  fs::create_directories(c.out);
  for (int k = 0; k < c.seeds; ++k) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
    const auto raw = autosgp::harness::generate_toy_raw(c.toy, c.n, c.noise_sd, seed);
    const fs::path path = fs::path(c.out) / (c.toy + "_seed" + std::to_string(seed) + ".csv");
    std::ofstream out(path);
    if (!out) throw autosgp::harness::IoError("cannot write '" + path.string() + "'");
    out << "x,y\n";
    for (Eigen::Index i = 0; i < raw.y.size(); ++i) {
      out << autosgp::harness::format_double(raw.x(i, 0)) << ',' << autosgp::harness::format_double(raw.y[i]) << "\n";
    }
    std::cout << "wrote " << path.string() << "\n";
  }
  return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& inputs, bool smooth, const std::string& stem) {
  std::vector<MetricRow> rows;
  for (const auto& in : inputs) {
    const auto part = autosgp::harness::read_long_form_csv(in);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (smooth) rows = autosgp::harness::smooth_rows(rows);
  write(c, rows, {}, stem);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automatic sparse GP regression benchmarks"};
  app.require_subcommand(1);

  Common bench_c, gpr_c, svgp_c, toy_c, report_c;
  SvgpOptions svgp_o;
  std::vector<std::string> report_inputs;
  bool report_smooth = false;
  std::string report_stem = "report";

  auto* bench = app.add_subcommand("bench", "automatic SGPR over the M schedule, plus linear and constant baselines");
  add_common(bench, bench_c, true);
  auto* gpr = app.add_subcommand("gpr", "exact GP regression");
  add_common(gpr, gpr_c, true);
  auto* svgp = app.add_subcommand("svgp", "stochastic variational GP trained with Adam");
  add_common(svgp, svgp_c, true);
  svgp->add_option("--m", svgp_o.m, "number of inducing points")->check(CLI::PositiveNumber);
  svgp->add_option("--steps", svgp_o.steps, "optimizer steps")->check(CLI::PositiveNumber);
  svgp->add_option("--batch-size", svgp_o.batch_size, "minibatch size (0: min(N, 10000))");
  svgp->add_option("--lr", svgp_o.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  svgp->add_flag("--no-scheduler", svgp_o.no_scheduler, "disable reduce-on-plateau");
  svgp->add_flag("--fixed-inducing", svgp_o.fixed_inducing, "keep the greedy inducing inputs fixed");
  auto* toy = app.add_subcommand("toy", "write a raw toy dataset as CSV");
  add_common(toy, toy_c, false);
  toy->get_option("--toy")->required();
  auto* report = app.add_subcommand("report", "merge long-form CSV reports and re-emit them");
  add_common(report, report_c, false);
  report->add_option("inputs", report_inputs, "long-form CSV files")->required()->check(CLI::ExistingFile);
  report->add_flag("--smooth", report_smooth, "hold bounds across M restarts until they catch up");
  report->add_option("--stem", report_stem, "output file stem");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*bench) return cmd_bench(bench_c);
    if (*gpr) return cmd_gpr(gpr_c);
    if (*svgp) return cmd_svgp(svgp_c, svgp_o);
    if (*toy) return cmd_toy(toy_c);
    if (*report) return cmd_report(report_c, report_inputs, report_smooth, report_stem);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
