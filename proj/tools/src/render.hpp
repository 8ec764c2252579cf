#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sail/evalmetrics.hpp"

namespace sail::app {

struct ReportInputs {
  std::vector<ConfigResult> configs;
  std::vector<RankedConfig> ranking;  // empty when ranking was not possible
  std::size_t recovery_n = 10;
  nlohmann::json retrieval;           // null when absent
  nlohmann::json interp;              // null when absent
};

std::string render_report(const ReportInputs& in);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Minimal scatter chart with linear axes and tick labels.
std::string scatter_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<ScatterPoint>& points);

}  // namespace sail::app
