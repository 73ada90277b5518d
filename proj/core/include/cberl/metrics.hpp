#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cberl/errors.hpp"

namespace cberl {

struct MetricsReport {
  int num_classes = 0;
  std::vector<long> support;                // true counts per class
  std::vector<std::vector<long>> confusion;  // rows = true, cols = predicted
  std::vector<double> per_class_accuracy;   // recall
  std::vector<double> per_class_precision;
  std::vector<double> per_class_f1;
  double accuracy = 0.0;
  double waa = 0.0;   // support-weighted mean of per-class accuracy
  double waf1 = 0.0;  // support-weighted mean of per-class F1

  // run metadata, filled by the harness
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;

  /// Mean per-class F1 over the given classes (plain mean, not weighted).
  double mean_f1_over(const std::vector<int>& classes) const;
};

/// Standard per-class precision/recall/F1 plus support-weighted averages.
/// Classes absent from the truth get F1 = 0 with support 0 and are excluded
/// from the weighted averages.
MetricsReport compute_metrics(const std::vector<int>& y_true,
                              const std::vector<int>& y_pred, int num_classes);

}  // namespace cberl
