#ifndef AUTOSGP_HARNESS_DATASET_HPP
#define AUTOSGP_HARNESS_DATASET_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace autosgp::harness {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DatasetError {
 public:
  ParseError(const std::string& what, std::size_t line) : DatasetError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDataset : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class NonNumericColumn : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class UnknownGenerator : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kTrainFraction = 0.85;

/// Raw (unstandardized) inputs and targets.
struct RawData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> input_names;
  std::string target_name = "y";
};

/// Train/test split standardized with training statistics only. Predictions
/// and metrics stay in these standardized units.
struct StandardizedDataset {
  Eigen::MatrixXd x_train, x_test;
  Eigen::VectorXd y_train, y_test;
  Eigen::VectorXd x_mean, x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
  std::uint64_t seed = 0;
  std::string source;

  [[nodiscard]] Eigen::Index n_train() const { return x_train.rows(); }
  [[nodiscard]] Eigen::Index n_test() const { return x_test.rows(); }
  [[nodiscard]] Eigen::Index input_dim() const { return x_train.cols(); }
};

/// round(0.85 N), at least one training row.
inline Eigen::Index train_size(Eigen::Index n_total) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(kTrainFraction * static_cast<double>(n_total))));
}

namespace detail {

inline void column_stats(const Eigen::VectorXd& col, double& mean, double& scale) {
  mean = col.mean();
  const double var = (col.array() - mean).square().mean();
  // Constant columns are only centered.
  scale = var > 1e-24 ? std::sqrt(var) : 1.0;
}

}  // namespace detail

/// Seeded shuffle, 85/15 split, then standardization with training statistics.
inline StandardizedDataset split_and_standardize(const RawData& raw, std::uint64_t seed, const std::string& source) {
  const Eigen::Index n = raw.x.rows();
  if (n < 1) throw EmptyDataset("dataset '" + source + "' has no usable rows");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const Eigen::Index n_train = train_size(n);
  const Eigen::Index n_test = n - n_train;
  const Eigen::Index dim = raw.x.cols();
  StandardizedDataset ds;
  ds.seed = seed;
  ds.source = source;
  ds.x_train.resize(n_train, dim);
  ds.y_train.resize(n_train);
  ds.x_test.resize(n_test, dim);
  ds.y_test.resize(n_test);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index src = order[static_cast<std::size_t>(r)];
    if (r < n_train) {
      ds.x_train.row(r) = raw.x.row(src);
      ds.y_train[r] = raw.y[src];
    } else {
      ds.x_test.row(r - n_train) = raw.x.row(src);
      ds.y_test[r - n_train] = raw.y[src];
    }
  }

  ds.x_mean.resize(dim);
  ds.x_scale.resize(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    detail::column_stats(ds.x_train.col(d), ds.x_mean[d], ds.x_scale[d]);
    ds.x_train.col(d).array() = (ds.x_train.col(d).array() - ds.x_mean[d]) / ds.x_scale[d];
    if (n_test > 0) ds.x_test.col(d).array() = (ds.x_test.col(d).array() - ds.x_mean[d]) / ds.x_scale[d];
  }
  detail::column_stats(ds.y_train, ds.y_mean, ds.y_scale);
  ds.y_train.array() = (ds.y_train.array() - ds.y_mean) / ds.y_scale;
  if (n_test > 0) ds.y_test.array() = (ds.y_test.array() - ds.y_mean) / ds.y_scale;
  return ds;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_fields(const std::string& line, bool comma) {
  std::vector<std::string> out;
  if (comma) {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
  } else {
    std::istringstream ss(line);
    std::string field;
    while (ss >> field) out.push_back(field);
  }
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace detail

/// Reads a delimited numeric table with a header row. The delimiter is a
/// comma if the header contains one, whitespace otherwise. `target` names the
/// target column or gives its 0-based index (negative counts from the end);
/// empty means the last column. Rows containing NaN are dropped.
inline RawData read_table(const std::string& path, const std::string& target = "") {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  bool comma = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    comma = line.find(',') != std::string::npos;
    header = detail::split_fields(detail::trim(line), comma);
    break;
  }
  if (header.empty()) throw EmptyDataset("'" + path + "' has no header row");
  const auto ncol = static_cast<Eigen::Index>(header.size());
  if (ncol < 2) throw ParseError("need at least one input column and one target column", line_no);

  Eigen::Index target_col = ncol - 1;
  if (!target.empty()) {
    const auto it = std::find(header.begin(), header.end(), target);
    if (it != header.end()) {
      target_col = static_cast<Eigen::Index>(it - header.begin());
    } else if (detail::is_integer(target)) {
      target_col = std::stoll(target);
      if (target_col < 0) target_col += ncol;
      if (target_col < 0 || target_col >= ncol) throw DatasetError("target index " + target + " out of range");
    } else {
      throw DatasetError("no column named '" + target + "'");
    }
  }

  std::vector<double> values;
  Eigen::Index rows = 0;
  std::vector<double> row(static_cast<std::size_t>(ncol));
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto fields = detail::split_fields(t, comma);
    if (static_cast<Eigen::Index>(fields.size()) != ncol) {
      throw ParseError("expected " + std::to_string(ncol) + " fields, found " + std::to_string(fields.size()), line_no);
    }
    bool has_nan = false;
    for (Eigen::Index c = 0; c < ncol; ++c) {
      double v = 0.0;
      if (!detail::parse_double(fields[static_cast<std::size_t>(c)], v)) {
        throw NonNumericColumn("column '" + header[static_cast<std::size_t>(c)] + "' has non-numeric value '" +
                               fields[static_cast<std::size_t>(c)] + "' on line " + std::to_string(line_no));
      }
      if (std::isnan(v)) has_nan = true;
      if (std::isinf(v)) throw ParseError("infinite value", line_no);
      row[static_cast<std::size_t>(c)] = v;
    }
    if (has_nan) continue;
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw EmptyDataset("'" + path + "' has no data rows");

  RawData raw;
  raw.x.resize(rows, ncol - 1);
  raw.y.resize(rows);
  raw.target_name = header[static_cast<std::size_t>(target_col)];
  for (Eigen::Index c = 0; c < ncol; ++c) {
    if (c != target_col) raw.input_names.push_back(header[static_cast<std::size_t>(c)]);
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < ncol; ++c) {
      const double v = values[static_cast<std::size_t>(r * ncol + c)];
      if (c == target_col) {
        raw.y[r] = v;
      } else {
        raw.x(r, k++) = v;
      }
    }
  }
  return raw;
}

inline StandardizedDataset load_dataset(const std::string& path, const std::string& target, std::uint64_t seed) {
  return split_and_standardize(read_table(path, target), seed, path);
}

/// 1D toy data. smooth1d: x ~ U[0, 6], y = sin(2x) + 0.4 cos(5x) + noise.
/// step1d: x ~ U[-1, 1], y = sign(x) + noise.
inline RawData generate_toy_raw(const std::string& name, Eigen::Index n, double noise_sd, std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("toy datasets need n >= 10");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be >= 0");
  const bool smooth = name == "smooth1d";
  if (!smooth && name != "step1d") throw UnknownGenerator("unknown toy generator '" + name + "'");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(smooth ? 0.0 : -1.0, smooth ? 6.0 : 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  RawData raw;
  raw.x.resize(n, 1);
  raw.y.resize(n);
  raw.input_names = {"x"};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = unif(rng);
    const double f = smooth ? std::sin(2.0 * x) + 0.4 * std::cos(5.0 * x) : (x < 0.0 ? -1.0 : 1.0);
    const double e = noise(rng);
    raw.x(i, 0) = x;
    raw.y[i] = f + (noise_sd > 0.0 ? noise_sd * e : 0.0);
  }
  return raw;
}

inline StandardizedDataset generate_toy(const std::string& name, Eigen::Index n, double noise_sd, std::uint64_t seed) {
  // The split uses its own stream so the draw of points does not depend on it.
  return split_and_standardize(generate_toy_raw(name, n, noise_sd, seed), seed ^ 0x9e3779b97f4a7c15ULL, name);
}

}  // namespace autosgp::harness

#endif  // AUTOSGP_HARNESS_DATASET_HPP
