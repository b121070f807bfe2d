#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"

namespace fs = std::filesystem;
using namespace autosgp::harness;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("autosgp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& content) {
  const fs::path p = dir / name;
  std::ofstream(p) << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const double x : v) out[i++] = x;
  return out;
}

std::string twenty_rows() {
  std::ostringstream s;
  s << "a,b,target\n";
  for (int i = 0; i < 20; ++i) s << i << "," << (i * i) % 7 << "," << 0.5 * i + 1.0 << "\n";
  return s.str();
}

}  // namespace

TEST(Dataset, SplitSizesAndStandardization) {
  const fs::path dir = scratch_dir("split");
  const fs::path file = write_file(dir, "d.csv", twenty_rows());
  const StandardizedDataset ds = load_dataset(file.string(), "", 0);
  EXPECT_EQ(ds.n_train(), 17);
  EXPECT_EQ(ds.n_test(), 3);
  EXPECT_EQ(ds.input_dim(), 2);
  for (Eigen::Index d = 0; d < 2; ++d) {
    EXPECT_NEAR(ds.x_train.col(d).mean(), 0.0, 1e-10);
    EXPECT_NEAR(ds.x_train.col(d).array().square().mean(), 1.0, 1e-8);
  }
  EXPECT_NEAR(ds.y_train.mean(), 0.0, 1e-10);
  EXPECT_NEAR(ds.y_train.array().square().mean(), 1.0, 1e-8);

  const StandardizedDataset again = load_dataset(file.string(), "target", 0);
  EXPECT_EQ(ds.x_train, again.x_train);
  EXPECT_EQ(ds.y_test, again.y_test);
  const StandardizedDataset other = load_dataset(file.string(), "", 1);
  EXPECT_NE(ds.y_train, other.y_train);
  EXPECT_EQ(train_size(20), 17);
  EXPECT_EQ(train_size(1), 1);
}

TEST(Dataset, TargetSelectionAndWhitespace) {
  const fs::path dir = scratch_dir("target");
  const fs::path file = write_file(dir, "d.txt", "x1 x2 y\n1 10 100\n2 20 200\n3 30 300\n\n4 40 400\n");
  const RawData byname = read_table(file.string(), "x2");
  EXPECT_EQ(byname.target_name, "x2");
  EXPECT_EQ(byname.y, vec({10, 20, 30, 40}));
  EXPECT_EQ(byname.input_names, (std::vector<std::string>{"x1", "y"}));
  EXPECT_EQ(read_table(file.string(), "0").y, vec({1, 2, 3, 4}));
  EXPECT_EQ(read_table(file.string(), "-1").y, vec({100, 200, 300, 400}));
  EXPECT_EQ(read_table(file.string()).y, vec({100, 200, 300, 400}));
  EXPECT_THROW(read_table(file.string(), "nope"), DatasetError);
  EXPECT_THROW(read_table(file.string(), "7"), DatasetError);
}

TEST(Dataset, ConstantTargetIsOnlyCentered) {
  const fs::path dir = scratch_dir("const");
  std::ostringstream s;
  s << "x,y\n";
  for (int i = 0; i < 12; ++i) s << i << ",3.5\n";
  const auto ds = load_dataset(write_file(dir, "c.csv", s.str()).string(), "", 4);
  EXPECT_EQ(ds.y_scale, 1.0);
  EXPECT_EQ(ds.y_train.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(ds.y_test.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dataset, Errors) {
  const fs::path dir = scratch_dir("errors");
  EXPECT_THROW(read_table((dir / "missing.csv").string()), DatasetError);
  EXPECT_THROW(read_table(write_file(dir, "empty.csv", "").string()), EmptyDataset);
  EXPECT_THROW(read_table(write_file(dir, "header.csv", "a,b\n").string()), EmptyDataset);
  try {
    read_table(write_file(dir, "short.csv", "a,b\n1,2\n3\n").string());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(read_table(write_file(dir, "text.csv", "a,b\n1,2\nx,4\n").string()), NonNumericColumn);
  EXPECT_THROW(read_table(write_file(dir, "inf.csv", "a,b\n1,inf\n").string()), ParseError);
  const RawData nan_dropped = read_table(write_file(dir, "nan.csv", "a,b\n1,2\nnan,3\n4,5\n").string());
  EXPECT_EQ(nan_dropped.y, vec({2, 5}));
  EXPECT_THROW(read_table(write_file(dir, "allnan.csv", "a,b\nnan,1\n").string()), EmptyDataset);
}

TEST(Toy, Generators) {
  const RawData step = generate_toy_raw("step1d", 50, 0.0, 3);
  for (Eigen::Index i = 0; i < 50; ++i) {
    EXPECT_TRUE(step.y[i] == 1.0 || step.y[i] == -1.0);
    EXPECT_EQ(step.y[i], step.x(i, 0) < 0.0 ? -1.0 : 1.0);
    EXPECT_GE(step.x(i, 0), -1.0);
    EXPECT_LT(step.x(i, 0), 1.0);
  }
  const RawData a = generate_toy_raw("smooth1d", 30, 0.1, 9);
  const RawData b = generate_toy_raw("smooth1d", 30, 0.1, 9);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_TRUE((a.x.array() >= 0.0).all() && (a.x.array() < 6.0).all());
  const RawData clean = generate_toy_raw("smooth1d", 30, 0.0, 9);
  for (Eigen::Index i = 0; i < 30; ++i) {
    const double x = clean.x(i, 0);
    EXPECT_DOUBLE_EQ(clean.y[i], std::sin(2 * x) + 0.4 * std::cos(5 * x));
  }
  const auto ds = generate_toy("step1d", 100, 0.1, 2);
  EXPECT_EQ(ds.n_train(), 85);
  EXPECT_EQ(ds.source, "step1d");
  EXPECT_THROW(generate_toy_raw("snelson", 50, 0.1, 0), UnknownGenerator);
  EXPECT_THROW(generate_toy_raw("step1d", 9, 0.1, 0), std::invalid_argument);
}

TEST(Metrics, Rmse) {
  EXPECT_EQ(rmse(vec({1, 2, 3}), vec({1, 2, 3})), 0.0);
  EXPECT_EQ(rmse(vec({0, 0}), vec({1, 1})), 1.0);
  EXPECT_NEAR(rmse(vec({1, 2}), vec({2, 4})), std::sqrt(2.5), 1e-15);
  EXPECT_NEAR(rmse(vec({0.5, -1, 2}), vec({1, 1, 1})), std::sqrt((0.25 + 4 + 1) / 3.0), 1e-12);
  EXPECT_THROW(rmse(vec({1}), vec({1, 2})), LengthMismatch);
  EXPECT_THROW(rmse(Eigen::VectorXd(0), Eigen::VectorXd(0)), LengthMismatch);
}

TEST(Metrics, Nlpd) {
  const double half_log_2pi = 0.5 * std::log(2 * M_PI);
  EXPECT_NEAR(nlpd(vec({1, 2}), vec({1, 1}), vec({1, 2})), half_log_2pi, 1e-15);
  EXPECT_NEAR(half_log_2pi, 0.918939, 1e-6);
  const double doubled = nlpd(vec({1, 2}), vec({2, 2}), vec({1, 2}));
  EXPECT_NEAR(doubled - half_log_2pi, 0.5 * std::log(2.0), 1e-15);
  const Eigen::VectorXd mu = vec({0.1, -0.3, 2.0}), v = vec({0.5, 1.5, 0.2}), y = vec({0.0, 0.4, 1.7});
  double expect = 0.0;
  for (int i = 0; i < 3; ++i)
    expect += 0.5 * std::log(2 * M_PI * v[i]) + (y[i] - mu[i]) * (y[i] - mu[i]) / (2 * v[i]);
  EXPECT_NEAR(nlpd(mu, v, y), expect / 3, 1e-12);
  EXPECT_THROW(nlpd(vec({1}), vec({0}), vec({1})), NonPositiveVariance);
  EXPECT_THROW(nlpd(vec({1}), vec({1, 1}), vec({1})), LengthMismatch);
}

TEST(Baselines, LinearIsExactOnLinearData) {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = testsupport::random_matrix(rng, 40, 3);
  const Eigen::Vector3d w(0.5, -1.0, 2.0);
  const Eigen::VectorXd y = (x * w).array() + 0.3;
  const BaselineFit fit = linear_baseline(x.topRows(30), y.head(30), x.bottomRows(10), y.tail(10));
  EXPECT_LT(fit.rmse, 1e-8);
  EXPECT_TRUE(fit.note.empty());
  EXPECT_TRUE(std::isfinite(fit.train_log_likelihood));
}

TEST(Baselines, LinearRidgeFallbackOnSingularDesign) {
  std::mt19937_64 rng(2);
  Eigen::MatrixXd x = testsupport::random_matrix(rng, 20, 2);
  x.col(1) = 2.0 * x.col(0);
  const Eigen::VectorXd y = x.col(0) + testsupport::random_vector(rng, 20, -0.1, 0.1);
  const BaselineFit fit = linear_baseline(x.topRows(15), y.head(15), x.bottomRows(5), y.tail(5));
  EXPECT_FALSE(fit.note.empty());
  EXPECT_LT(fit.rmse, 0.2);
}

TEST(Baselines, ConstantOnMatchedStatistics) {
  const auto ds = generate_toy("smooth1d", 4000, 0.1, 5);
  const BaselineFit fit = constant_baseline(ds.y_train, ds.y_test);
  EXPECT_NEAR(fit.rmse, 1.0, 0.05);
  EXPECT_NEAR(fit.nlpd, 0.5 * std::log(2 * M_PI) + 0.5, 0.03);
  EXPECT_NEAR(fit.noise_variance, 1.0, 1e-10);
}

TEST(Smoothing, HandFixture) {
  const std::vector<SeriesPoint> raw{{0.0, -10.0, 10, {1.0}}, {1.0, -12.0, 10, {2.0}}, {2.0, -8.0, 20, {3.0}}, {3.0, -13.0, 20, {4.0}}};
  const auto out = smooth_metric_curve(raw);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].value, -10.0);
  EXPECT_EQ(out[1].value, -12.0);
  EXPECT_EQ(out[2].value, -12.0);
  EXPECT_EQ(out[2].companions, std::vector<double>{2.0});
  EXPECT_EQ(out[3].value, -13.0);
  EXPECT_EQ(out[3].companions, std::vector<double>{4.0});
}

TEST(Smoothing, HoldsUntilCatchUpAndKeepsFinalRaw) {
  // Losses: restart at a new M is worse, then improves past the held value.
  const std::vector<SeriesPoint> raw{{0, 5.0, 1, {}}, {1, 3.0, 1, {}}, {2, 9.0, 2, {}}, {3, 4.0, 2, {}},
                                     {4, 2.5, 2, {}}, {5, 7.0, 3, {}}};
  const auto out = smooth_metric_curve(raw);
  const std::vector<double> expect{5.0, 3.0, 3.0, 3.0, 2.5, 7.0};
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_EQ(out[i].value, expect[i]) << i;
  // Within tolerance counts as caught up.
  const std::vector<SeriesPoint> close{{0, 1.0, 1, {}}, {1, 1.0 + 5e-7, 2, {}}, {2, 0.5, 2, {}}};
  EXPECT_EQ(smooth_metric_curve(close)[1].value, 1.0 + 5e-7);
}

TEST(Smoothing, TrivialCases) {
  const std::vector<SeriesPoint> same{{0, 3.0, 1, {}}, {1, 2.0, 1, {}}, {2, 4.0, 1, {}}};
  const auto out = smooth_metric_curve(same);
  for (std::size_t i = 0; i < same.size(); ++i) EXPECT_EQ(out[i].value, same[i].value);
  const std::vector<SeriesPoint> improving{{0, 3.0, 1, {}}, {1, 2.0, 2, {}}, {2, 1.0, 3, {}}};
  const auto out2 = smooth_metric_curve(improving);
  for (std::size_t i = 0; i < improving.size(); ++i) EXPECT_EQ(out2[i].value, improving[i].value);
  EXPECT_TRUE(smooth_metric_curve({}).empty());
  const std::vector<SeriesPoint> gain{{0, 1.0, 1, {}}, {1, 2.0, 2, {}}, {2, 3.0, 2, {}}};
  EXPECT_EQ(smooth_metric_curve(gain, Sense::HigherIsBetter)[1].value, 2.0);
  EXPECT_EQ(smooth_metric_curve(gain, Sense::LowerIsBetter)[1].value, 1.0);
}

TEST(Smoothing, NeverBetterThanBestRawSoFar) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<SeriesPoint> raw;
    long long m = 1;
    for (int i = 0; i < 20; ++i) {
      if (rng() % 4 == 0) ++m;
      raw.push_back({static_cast<double>(i), u(rng), m, {}});
    }
    const auto out = smooth_metric_curve(raw);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      best = std::min(best, raw[i].value);
      EXPECT_GE(out[i].value, best);
    }
    EXPECT_EQ(out.back().value, raw.back().value);
  }
}

namespace {

std::vector<MetricRow> fake_rows(int seeds) {
  std::vector<MetricRow> rows;
  for (int s = 0; s < seeds; ++s) {
    double t = 0.0;
    for (const long long m : {10LL, 20LL, 50LL}) {
      t += 0.5 + 0.1 * s;
      MetricRow r;
      r.dataset = "toy";
      r.method = "SGPR-baseline";
      r.kernel = "se";
      r.seed = static_cast<std::uint64_t>(s);
      r.m = m;
      r.elapsed_s = t;
      r.bound_kind = "elbo";
      r.bound_value = -100.0 + static_cast<double>(m) + s;
      r.upper_bound = r.bound_value + 1.0 / 3.0;
      r.rmse = 0.1 * (s + 1);
      r.nlpd = 0.2 * (s + 1);
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace

TEST(Report, SingleRecord) {
  const fs::path dir = scratch_dir("single");
  std::vector<MetricRow> rows = fake_rows(1);
  rows.resize(1);
  const auto files = emit_report(rows, {}, ReportFormat::Csv, dir, "one");
  ASSERT_EQ(files.size(), 2u);
  const std::string long_csv = slurp(files[0]);
  EXPECT_EQ(std::count(long_csv.begin(), long_csv.end(), '\n'), 2);
  EXPECT_EQ(long_csv.substr(0, long_csv.find('\n')),
            "dataset,method,kernel,seed,m,elapsed_s,bound_kind,bound_value,upper_bound,rmse,nlpd,note");
  const std::string pivot = slurp(files[1]);
  EXPECT_EQ(pivot.substr(0, pivot.find('\n')), "dataset,method,kernel,metric,M=10,final");
  EXPECT_NE(pivot.find("toy,SGPR-baseline,se,bound_value,-90,-90"), std::string::npos);
  EXPECT_THROW(emit_report({}, {}, ReportFormat::Csv, dir), std::invalid_argument);
}

TEST(Report, DeterministicAndRoundTrips) {
  const fs::path dir = scratch_dir("determinism");
  const auto rows = fake_rows(2);
  const auto a = emit_report(rows, {}, ReportFormat::Csv, dir / "a");
  const auto b = emit_report(rows, {}, ReportFormat::Csv, dir / "b");
  EXPECT_EQ(slurp(a[0]), slurp(b[0]));
  EXPECT_EQ(slurp(a[1]), slurp(b[1]));
  RunManifest man{"toy", "SGPR-baseline", "se", 0, {{"m_schedule", {10, 20, 50}}}, dir.string()};
  const auto ja = emit_report(rows, {man}, ReportFormat::Json, dir / "a");
  const auto jb = emit_report(rows, {man}, ReportFormat::Json, dir / "b");
  EXPECT_EQ(slurp(ja[0]), slurp(jb[0]));

  const auto back = read_long_form_csv(a[0].string());
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].bound_value, rows[i].bound_value);
    EXPECT_EQ(back[i].upper_bound, rows[i].upper_bound);
    EXPECT_EQ(back[i].elapsed_s, rows[i].elapsed_s);
    EXPECT_EQ(back[i].m, rows[i].m);
  }
  EXPECT_FALSE(fs::exists(a[0].string() + ".tmp"));
}

TEST(Report, FiveSeedPivotMeans) {
  const auto rows = fake_rows(5);
  const PivotTable t = pivot(rows);
  EXPECT_EQ(t.m_columns, (std::vector<long long>{10, 20, 50}));
  for (const auto& r : t.rows) {
    if (r.metric == "bound_value") {
      EXPECT_DOUBLE_EQ(r.by_m.at(10), -90.0 + 2.0);
      EXPECT_DOUBLE_EQ(r.by_m.at(50), -50.0 + 2.0);
      EXPECT_DOUBLE_EQ(r.final_value, -48.0);
    }
    if (r.metric == "rmse") EXPECT_NEAR(r.final_value, 0.3, 1e-15);
  }
}

TEST(Report, JsonDocumentShape) {
  const auto rows = fake_rows(1);
  RunManifest man{"toy", "SGPR-baseline", "se", 0, {{"max_epochs_per_m", 20}}, "out"};
  const nlohmann::json doc = report_json(rows, {man});
  EXPECT_EQ(doc["schema_version"], 1);
  EXPECT_EQ(doc["manifests"][0]["config"]["max_epochs_per_m"], 20);
  EXPECT_EQ(doc["rows"].size(), 3u);
  EXPECT_EQ(doc["rows"][2]["bound_value"].get<double>(), rows[2].bound_value);
  EXPECT_EQ(doc["pivot"]["m_columns"].size(), 3u);
  MetricRow failed = rows[0];
  failed.bound_value = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(report_json({failed}, {})["rows"][0]["bound_value"].is_null());
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(Report, SmoothRowsPerRun) {
  std::vector<MetricRow> rows = fake_rows(1);
  rows[1].bound_value = -200.0;  // M = 20 restarts far below the M = 10 bound
  rows[1].rmse = 9.0;
  const auto out = smooth_rows(rows);
  EXPECT_EQ(out[1].bound_value, rows[0].bound_value);
  EXPECT_EQ(out[1].rmse, rows[0].rmse);
  EXPECT_EQ(out[2].bound_value, rows[2].bound_value);
}
