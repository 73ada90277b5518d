#include "cberl/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cberl::harness {

using nlohmann::json;

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::string report_json(const MetricsReport& r,
                        const std::vector<int>& minority_classes,
                        const std::vector<std::string>& class_names) {
  json j;
  j["accuracy"] = r.accuracy;
  j["class_names"] = class_names;
  j["config_hash"] = r.config_hash;
  j["confusion"] = r.confusion;
  j["minority_classes"] = minority_classes;
  j["minority_f1"] = r.mean_f1_over(minority_classes);
  j["num_classes"] = r.num_classes;
  j["per_class_accuracy"] = r.per_class_accuracy;
  j["per_class_f1"] = r.per_class_f1;
  j["per_class_precision"] = r.per_class_precision;
  j["seed"] = r.seed;
  j["support"] = r.support;
  j["waa"] = r.waa;
  j["waf1"] = r.waf1;
  j["wall_time_s"] = r.wall_time_s;
  return j.dump(2) + "\n";
}

std::string confusion_csv(const MetricsReport& r,
                          const std::vector<std::string>& class_names) {
  std::ostringstream out;
  out << "true\\pred";
  for (int c = 0; c < r.num_classes; ++c)
    out << "," << (c < static_cast<int>(class_names.size())
                       ? class_names[c]
                       : "class" + std::to_string(c));
  out << "\n";
  for (int t = 0; t < r.num_classes; ++t) {
    out << (t < static_cast<int>(class_names.size())
                ? class_names[t]
                : "class" + std::to_string(t));
    for (int c = 0; c < r.num_classes; ++c) out << "," << r.confusion[t][c];
    out << "\n";
  }
  return out.str();
}

namespace {

constexpr int kW = 640, kH = 420, kPad = 56;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

std::string svg_line_chart(const std::string& title,
                           const std::vector<double>& xs,
                           const std::vector<Series>& series) {
  double ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (double y : s.ys) {
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (!(ymax > ymin)) {
    ymax = ymin + 1.0;
    ymin -= 1.0;
  }
  const double xmin = xs.front(), xmax = xs.back();
  auto px = [&](double x) {
    return kPad + (x - xmin) / std::max(1e-12, xmax - xmin) * (kW - 2 * kPad);
  };
  auto py = [&](double y) {
    return kH - kPad - (y - ymin) / (ymax - ymin) * (kH - 2 * kPad);
  };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW
      << "' height='" << kH << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' "
      << "font-family='sans-serif' font-size='15'>" << title << "</text>\n"
      << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad
      << "' y2='" << kH - kPad << "' stroke='black'/>\n"
      << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad
      << "' y2='" << kH - kPad << "' stroke='black'/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i)
    svg << "<text x='" << px(xs[i]) << "' y='" << kH - kPad + 18
        << "' text-anchor='middle' font-family='sans-serif' font-size='11'>"
        << fmt(xs[i]) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    svg << "<text x='" << kPad - 6 << "' y='" << py(y) + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
        << fmt(std::round(y * 1000) / 1000) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % 6];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (std::size_t i = 0; i < xs.size(); ++i)
      svg << px(xs[i]) << "," << py(series[s].ys[i]) << " ";
    svg << "'/>\n";
    svg << "<text x='" << kW - kPad + 4 << "' y='"
        << kPad + 16 * static_cast<int>(s)
        << "' font-family='sans-serif' font-size='11' fill='" << color << "'>"
        << series[s].name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_heatmap(const std::string& title,
                        const std::vector<std::vector<long>>& matrix,
                        const std::vector<std::string>& labels) {
  const int n = static_cast<int>(matrix.size());
  long mx = 1;
  for (const auto& row : matrix)
    for (long v : row) mx = std::max(mx, v);
  const int cell = std::max(24, std::min(56, 360 / std::max(1, n)));
  const int w = kPad + n * cell + 40, h = kPad + n * cell + 40;

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w
      << "' height='" << h << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << w / 2 << "' y='20' text-anchor='middle' "
      << "font-family='sans-serif' font-size='14'>" << title << "</text>\n";
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < n; ++c) {
      const double frac = static_cast<double>(matrix[t][c]) / mx;
      const int blue = static_cast<int>(255 - 200 * frac);
      svg << "<rect x='" << kPad + c * cell << "' y='" << kPad + t * cell
          << "' width='" << cell << "' height='" << cell << "' fill='rgb("
          << blue << "," << blue << ",255)' stroke='#999'/>\n"
          << "<text x='" << kPad + c * cell + cell / 2 << "' y='"
          << kPad + t * cell + cell / 2 + 4
          << "' text-anchor='middle' font-family='sans-serif' font-size='10'>"
          << matrix[t][c] << "</text>\n";
    }
    const std::string name =
        t < static_cast<int>(labels.size()) ? labels[t] : std::to_string(t);
    svg << "<text x='" << kPad - 4 << "' y='" << kPad + t * cell + cell / 2 + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='10'>"
        << name << "</text>\n"
        << "<text x='" << kPad + t * cell + cell / 2 << "' y='" << kPad - 6
        << "' text-anchor='middle' font-family='sans-serif' font-size='10'>"
        << name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace cberl::harness
