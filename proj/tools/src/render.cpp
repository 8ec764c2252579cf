#include "render.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sail::app {
namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Left-aligned columns padded to the widest cell.
std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      line += rows[i][c];
      if (c + 1 < rows[i].size()) line += std::string(width[c] - rows[i][c].size() + 2, ' ');
    }
    out += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out += std::string(total - 2, '-') + "\n";
    }
  }
  return out;
}

}  // namespace

std::string render_report(const ReportInputs& in) {
  std::string out;
  if (!in.configs.empty()) {
    std::vector<std::size_t> ns;
    for (const auto& c : in.configs)
      for (const auto& [n, ratio] : c.recovery)
        if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
    std::sort(ns.begin(), ns.end());
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"config", "R2", "L0", "alive", "M", "AUC dense", "AUC sparse"};
    for (auto n : ns) head.push_back("rec@" + std::to_string(n));
    rows.push_back(head);
    for (const auto& c : in.configs) {
      std::vector<std::string> r{c.config_id,       fmt(c.r2),        fmt(c.mean_l0, 2),
                                 std::to_string(c.alive), fmt(c.m_config), fmt(c.dense_auc),
                                 fmt(c.sparse_auc)};
      for (auto n : ns) {
        const auto it = c.recovery.find(n);
        r.push_back(it == c.recovery.end() ? "-" : fmt(it->second));
      }
      rows.push_back(r);
    }
    out += "Configurations\n" + table(rows) + "\n";
  }
  if (!in.ranking.empty()) {
    std::vector<std::vector<std::string>> rows{{"rank", "config", "mono rank", "perf rank", "combined"}};
    for (const auto& r : in.ranking)
      rows.push_back({std::to_string(r.combined_rank), r.config_id, std::to_string(r.mono_rank),
                      std::to_string(r.perf_rank), std::to_string(r.combined_score)});
    out += "Combined ranking (performance at N=" + std::to_string(in.recovery_n) + ")\n" + table(rows) + "\n";
  }
  if (!in.retrieval.is_null()) {
    std::vector<std::vector<std::string>> rows{{"k", "quality", "fraction of dense"}};
    const double dense = in.retrieval.at("dense").get<double>();
    for (const auto& row : in.retrieval.at("fingerprint")) {
      const double q = row.at("quality").get<double>();
      rows.push_back({std::to_string(row.at("k").get<std::size_t>()), fmt(q), fmt(dense > 0 ? q / dense : 0.0)});
    }
    rows.push_back({"dense", fmt(dense), fmt(1.0)});
    out += "Fingerprint retrieval (top-" + std::to_string(in.retrieval.at("top_m").get<std::size_t>()) + ", " +
           std::to_string(in.retrieval.at("n_refs").get<std::size_t>()) + " references)\n" + table(rows) + "\n";
  }
  if (!in.interp.is_null()) {
    std::vector<std::vector<std::string>> rows{{"rank", "count"}};
    const auto hist = in.interp.at("histogram").get<std::vector<std::size_t>>();
    for (std::size_t i = 0; i < hist.size(); ++i) rows.push_back({std::to_string(i + 1), std::to_string(hist[i])});
    out += "Judge ranks (mean " + fmt(in.interp.at("mean_rank").get<double>(), 3) + " over " +
           std::to_string(in.interp.at("count").get<std::size_t>()) + " features)\n" + table(rows) + "\n";
  }
  if (out.empty()) out = "nothing to report\n";
  return out;
}

std::string scatter_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                        const std::vector<ScatterPoint>& points) {
  constexpr double W = 480, H = 360, L = 60, R = 20, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].x;
    y0 = y1 = points[0].y;
    for (const auto& p : points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double px = (x1 - x0) * 0.05 + (x1 == x0 ? 0.5 : 0.0);
  const double py = (y1 - y0) * 0.05 + (y1 == y0 ? 0.5 : 0.0);
  x0 -= px;
  x1 += px;
  y0 -= py;
  y1 += py;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << fmt(sx(xv), 1) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">" << fmt(xv, 2) << "</text>\n";
    s << "<text x=\"" << L - 5 << "\" y=\"" << fmt(sy(yv) + 4, 1) << "\" text-anchor=\"end\">" << fmt(yv, 3) << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  s << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
    << (T + H - B) / 2 << ")\">" << y_label << "</text>\n";
  for (const auto& p : points)
    s << "<circle cx=\"" << fmt(sx(p.x), 2) << "\" cy=\"" << fmt(sy(p.y), 2) << "\" r=\"4\" fill=\"steelblue\"/>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace sail::app
