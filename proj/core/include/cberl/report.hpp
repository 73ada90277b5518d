#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cberl/metrics.hpp"

namespace cberl::harness {

/// Temp-file + rename so partially written artifacts never appear.
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);

/// Canonical (alphabetically keyed) report JSON. wall_time_s is the only
/// field allowed to differ between reruns of the same config+seed.
std::string report_json(const MetricsReport& report,
                        const std::vector<int>& minority_classes,
                        const std::vector<std::string>& class_names);

std::string confusion_csv(const MetricsReport& report,
                          const std::vector<std::string>& class_names);

struct Series {
  std::string name;
  std::vector<double> ys;
};

std::string svg_line_chart(const std::string& title,
                           const std::vector<double>& xs,
                           const std::vector<Series>& series);

std::string svg_heatmap(const std::string& title,
                        const std::vector<std::vector<long>>& matrix,
                        const std::vector<std::string>& labels);

}  // namespace cberl::harness
