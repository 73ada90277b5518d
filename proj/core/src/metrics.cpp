#include "cberl/metrics.hpp"

namespace cberl {

double MetricsReport::mean_f1_over(const std::vector<int>& classes) const {
  if (classes.empty()) return 0.0;
  double s = 0.0;
  for (int c : classes) s += per_class_f1[c];
  return s / static_cast<double>(classes.size());
}

MetricsReport compute_metrics(const std::vector<int>& y_true,
                              const std::vector<int>& y_pred,
                              int num_classes) {
  if (y_true.size() != y_pred.size())
    throw LengthMismatch("compute_metrics: label vectors differ in length");
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 ||
        y_pred[i] >= num_classes)
      throw LengthMismatch("compute_metrics: label out of range");
  }

  MetricsReport r;
  r.num_classes = num_classes;
  r.confusion.assign(num_classes, std::vector<long>(num_classes, 0));
  r.support.assign(num_classes, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    r.confusion[y_true[i]][y_pred[i]]++;
    r.support[y_true[i]]++;
  }

  r.per_class_accuracy.assign(num_classes, 0.0);
  r.per_class_precision.assign(num_classes, 0.0);
  r.per_class_f1.assign(num_classes, 0.0);

  long correct = 0;
  const long total = static_cast<long>(y_true.size());
  for (int c = 0; c < num_classes; ++c) {
    const long tp = r.confusion[c][c];
    correct += tp;
    long pred_c = 0;
    for (int t = 0; t < num_classes; ++t) pred_c += r.confusion[t][c];
    const long sup = r.support[c];
    const double recall = sup > 0 ? static_cast<double>(tp) / sup : 0.0;
    const double prec = pred_c > 0 ? static_cast<double>(tp) / pred_c : 0.0;
    r.per_class_accuracy[c] = recall;
    r.per_class_precision[c] = prec;
    r.per_class_f1[c] =
        (prec + recall) > 0.0 ? 2.0 * prec * recall / (prec + recall) : 0.0;
  }
  r.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;

  double waa = 0.0, waf1 = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const double w = total > 0 ? static_cast<double>(r.support[c]) / total : 0;
    waa += w * r.per_class_accuracy[c];
    waf1 += w * r.per_class_f1[c];
  }
  r.waa = waa;
  r.waf1 = waf1;
  return r;
}

}  // namespace cberl
