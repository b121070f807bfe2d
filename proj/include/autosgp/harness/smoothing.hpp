#ifndef AUTOSGP_HARNESS_SMOOTHING_HPP
#define AUTOSGP_HARNESS_SMOOTHING_HPP

#include <cmath>
#include <vector>

namespace autosgp::harness {

struct SeriesPoint {
  double time = 0.0;
  double value = 0.0;
  long long m_label = 0;
  /// Channels that share the hold window of `value` (RMSE, NLPD, ...).
  std::vector<double> companions;
};

enum class Sense { LowerIsBetter, HigherIsBetter };

/// Removes the drops caused by restarting training at a larger M: after each
/// change of `m_label` the previously reported point is repeated until the
/// raw value catches up with it (within rel_tol * |held|), after which raw
/// values resume. The default sense treats the channel as a loss, e.g. the
/// negative ELBO. The last point is always reported raw.
inline std::vector<SeriesPoint> smooth_metric_curve(const std::vector<SeriesPoint>& raw,
                                                    Sense sense = Sense::LowerIsBetter, double rel_tol = 1e-6) {
  std::vector<SeriesPoint> out = raw;
  bool holding = false;
  double held = 0.0;
  std::vector<double> held_companions;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i > 0 && raw[i].m_label != raw[i - 1].m_label) {
      holding = true;
      held = out[i - 1].value;
      held_companions = out[i - 1].companions;
    }
    if (!holding) continue;
    const double tol = rel_tol * std::abs(held);
    const double v = raw[i].value;
    const bool caught_up = sense == Sense::LowerIsBetter ? v <= held + tol : v >= held - tol;
    if (caught_up) {
      holding = false;
      continue;
    }
    out[i].value = held;
    out[i].companions = held_companions;
  }
  if (!out.empty()) out.back() = raw.back();
  return out;
}

}  // namespace autosgp::harness

#endif  // AUTOSGP_HARNESS_SMOOTHING_HPP
