#ifndef AUTOSGP_BASELINE_HPP
#define AUTOSGP_BASELINE_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "autosgp/errors.hpp"
#include "autosgp/harness/dataset.hpp"
#include "autosgp/harness/metrics.hpp"
#include "autosgp/inducing.hpp"
#include "autosgp/kernels.hpp"
#include "autosgp/optimizer.hpp"
#include "autosgp/sgpr.hpp"

namespace autosgp {

struct BaselineConfig {
  std::vector<Eigen::Index> m_schedule{10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000};
  int max_epochs_per_m = 20;
  double m_cutoff_fraction = 0.8;
  double initial_noise_variance = 0.01;
  /// Every kernel hyperparameter starts here.
  double initial_kernel_value = 1.0;
  LbfgsConfig optimizer = [] {
    LbfgsConfig c;
    c.f_rel_tol = 2.2e-9;
    return c;
  }();
  BoundOptions bounds{};
  /// Stop scheduling new M once this much training time has been spent.
  std::optional<double> timeout_seconds;

  void validate() const {
    if (m_schedule.empty()) throw std::invalid_argument("BaselineConfig: empty M schedule");
    for (std::size_t i = 0; i < m_schedule.size(); ++i) {
      if (m_schedule[i] < 1 || (i > 0 && m_schedule[i] <= m_schedule[i - 1])) {
        throw std::invalid_argument("BaselineConfig: M schedule must be positive and strictly increasing");
      }
    }
    if (!(m_cutoff_fraction > 0.0 && m_cutoff_fraction <= 1.0)) {
      throw std::invalid_argument("BaselineConfig: cutoff fraction must lie in (0, 1]");
    }
    if (max_epochs_per_m < 1) throw std::invalid_argument("BaselineConfig: need at least one epoch per M");
    optimizer.validate();
  }
};

/// Largest M the schedule may reach for a training set of size n.
inline Eigen::Index m_cutoff(Eigen::Index n, double fraction) {
  return static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n)));
}

/// The schedule entries that survive the int(fraction * N) cutoff.
inline std::vector<Eigen::Index> truncated_schedule(const std::vector<Eigen::Index>& schedule, Eigen::Index n,
                                                    double fraction) {
  std::vector<Eigen::Index> out;
  const Eigen::Index cap = m_cutoff(n, fraction);
  for (const Eigen::Index m : schedule) {
    if (m > cap) break;
    out.push_back(m);
  }
  return out;
}

struct FixedMFit {
  SgprModel model;
  std::vector<Eigen::Index> inducing_indices;
  int epochs_used = 0;
  double elbo = 0.0;
  /// ELBO of each accepted (hyperparameters, Z) pair, in order.
  std::vector<double> accepted_elbos;
  std::vector<Termination> terminations;
};

namespace detail {

inline Objective negative_elbo_objective(const Eigen::MatrixXd& z, const KernelSpec& layout, const Eigen::MatrixXd& x,
                                         const Eigen::VectorXd& y, const BoundOptions& opt) {
  return [&z, &layout, &x, &y, opt](const Eigen::VectorXd& u, Eigen::VectorXd& grad) {
    const ValueAndGradient vg = elbo_with_gradient(z, layout, HyperVector{u}, x, y, opt);
    grad = -vg.gradient;
    return -vg.value;
  };
}

inline double elbo_or_neg_inf(const SgprModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const BoundOptions& opt) {
  try {
    return elbo(model, x, y, opt);
  } catch (const NonFiniteObjective&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/// Trains one SGPR model with M inducing points: starting from the initial
/// hyperparameters, alternate L-BFGS on the ELBO (Z fixed) with greedy
/// reselection of Z, keeping a reselection only if it does not lower the
/// ELBO. Stops after `max_epochs_per_m` epochs, on a rejected reselection, or
/// when reselection returns the same inducing set.
inline FixedMFit fit_fixed_m(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& initial_kernel,
                             double initial_noise, Eigen::Index m, const BaselineConfig& config) {
  if (m > x.rows()) throw std::invalid_argument("fit_fixed_m: M exceeds the number of training points");
  FixedMFit fit;
  HyperVector theta = pack(initial_kernel, initial_noise);
  SelectionResult sel = greedy_variance_select(x, initial_kernel, m);
  Eigen::MatrixXd z = take_rows(x, sel.indices);

  {
    const SgprModel start{z, initial_kernel, initial_noise};
    if (!std::isfinite(detail::elbo_or_neg_inf(start, x, y, config.bounds))) {
      throw TrainingFailure("ELBO is not finite at the initial hyperparameters (M = " + std::to_string(m) + ")");
    }
  }

  for (int epoch = 1; epoch <= config.max_epochs_per_m; ++epoch) {
    OptResult opt = minimize(detail::negative_elbo_objective(z, initial_kernel, x, y, config.bounds), theta.values,
                             config.optimizer);
    fit.terminations.push_back(opt.termination);
    const Hyperparameters h = unpack(initial_kernel, HyperVector{opt.x_final});
    const double elbo_kept = detail::elbo_or_neg_inf({z, h.kernel, h.noise_variance}, x, y, config.bounds);
    if (!std::isfinite(elbo_kept)) throw TrainingFailure("optimizer returned a non-finite ELBO");

    SelectionResult resel = greedy_variance_select(x, h.kernel, m);
    Eigen::MatrixXd z_new = take_rows(x, resel.indices);
    const double elbo_new = detail::elbo_or_neg_inf({z_new, h.kernel, h.noise_variance}, x, y, config.bounds);
    fit.epochs_used = epoch;
    theta.values = opt.x_final;
    if (elbo_new < elbo_kept) {
      fit.accepted_elbos.push_back(elbo_kept);
      break;
    }
    const bool same_set = std::set<Eigen::Index>(resel.indices.begin(), resel.indices.end()) ==
                          std::set<Eigen::Index>(sel.indices.begin(), sel.indices.end());
    sel = std::move(resel);
    z = std::move(z_new);
    fit.accepted_elbos.push_back(elbo_new);
    if (same_set) break;
  }

  const Hyperparameters h = unpack(initial_kernel, theta);
  fit.model = {z, h.kernel, h.noise_variance};
  fit.inducing_indices = sel.indices;
  fit.elbo = fit.accepted_elbos.back();
  return fit;
}

struct CheckpointRecord {
  /// Scheduled M and the number of inducing points actually used (smaller
  /// when greedy selection stopped early).
  Eigen::Index m = 0;
  Eigen::Index m_used = 0;
  double elapsed_train_seconds = 0.0;
  double elbo = std::numeric_limits<double>::quiet_NaN();
  double upper_bound = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double nlpd = std::numeric_limits<double>::quiet_NaN();
  Hyperparameters hyperparameters;
  int epochs_used = 0;
  bool failed = false;
  std::string note;
};

/// Monotonic seconds; injectable so tests can control timing.
using Clock = std::function<double()>;

inline Clock steady_clock_seconds() {
  return [] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  };
}

/// The automatic SGPR procedure over the increasing-M schedule. Every M
/// starts from the initial hyperparameters; only training is timed, and the
/// metrics for each checkpoint are computed outside the timed region.
inline std::vector<CheckpointRecord> run_baseline(const harness::StandardizedDataset& data,
                                                  const KernelSpec& kernel_family, const BaselineConfig& config,
                                                  const Clock& clock = steady_clock_seconds()) {
  config.validate();
  const Eigen::MatrixXd& x = data.x_train;
  const Eigen::VectorXd& y = data.y_train;
  KernelSpec init = kernel_family;
  init.signal_variance = config.initial_kernel_value;
  init.scales = Eigen::VectorXd::Constant(x.cols(), config.initial_kernel_value);
  init.bias_variance = config.initial_kernel_value;
  init.validate();

  std::vector<CheckpointRecord> records;
  double elapsed = 0.0;
  for (const Eigen::Index m : truncated_schedule(config.m_schedule, x.rows(), config.m_cutoff_fraction)) {
    CheckpointRecord rec;
    rec.m = m;
    std::optional<FixedMFit> fit;
    const double t0 = clock();
    try {
      fit = fit_fixed_m(x, y, init, config.initial_noise_variance, m, config);
    } catch (const TrainingFailure& e) {
      rec.note = e.what();
    } catch (const NonFiniteObjective& e) {
      rec.note = e.what();
    } catch (const InvalidStart& e) {
      rec.note = e.what();
    }
    const double t1 = clock();
    elapsed += t1 - t0;
    rec.elapsed_train_seconds = elapsed;

    // Untimed evaluation.
    if (fit) {
      rec.m_used = fit->model.inducing.rows();
      rec.epochs_used = fit->epochs_used;
      rec.hyperparameters = {fit->model.kernel, fit->model.noise_variance};
      if (rec.m_used < m) rec.note = "greedy selection stopped early at M = " + std::to_string(rec.m_used);
      try {
        const BoundReport br = bound_report(fit->model, x, y, config.bounds);
        rec.elbo = br.elbo;
        rec.upper_bound = br.upper_bound;
        if (data.n_test() > 0) {
          const Prediction p = sgpr_predict(fit->model, x, y, data.x_test, config.bounds);
          rec.rmse = harness::rmse(p.mean, data.y_test);
          rec.nlpd = harness::nlpd(p.mean, p.observation_variance, data.y_test);
        }
      } catch (const NonFiniteObjective& e) {
        rec.failed = true;
        rec.note = e.what();
      }
    } else {
      rec.failed = true;
      rec.hyperparameters = {init, config.initial_noise_variance};
    }
    records.push_back(std::move(rec));
    if (config.timeout_seconds && elapsed > *config.timeout_seconds) break;
  }
  if (records.empty()) {
    throw TrainingFailure("no scheduled M fits under the cutoff for N = " + std::to_string(x.rows()));
  }
  return records;
}

}  // namespace autosgp

#endif  // AUTOSGP_BASELINE_HPP
