#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "deeplda/errors.hpp"
#include "deeplda/matrix.hpp"

namespace deeplda {

namespace detail {
inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
}  // namespace detail

/// 2-D scatter of labeled points with class means drawn as crosses. At most
/// `cap` points are plotted, allocated across classes proportionally to class
/// frequency (stratified, deterministic: the first k_c points of each class).
/// One <circle> element per plotted point; no timestamps or other
/// run-dependent content, so identical inputs give identical bytes.
inline size_t svg_scatter(const std::vector<Vec>& points, const std::vector<int>& labels,
                          const std::vector<Vec>& means, const std::string& path,
                          size_t cap = 2000) {
  if (points.size() != labels.size())
    throw LengthMismatch("svg_scatter: points and labels differ in length");
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);
  num_classes = std::max(num_classes, static_cast<int>(means.size()));

  // proportional allocation, remainders to the largest fractional parts
  std::vector<size_t> class_total(num_classes, 0);
  for (int y : labels) class_total[y] += 1;
  const size_t n = points.size();
  std::vector<size_t> quota(num_classes, 0);
  if (n <= cap) {
    quota = class_total;
  } else {
    std::vector<std::pair<double, int>> frac;
    size_t assigned = 0;
    for (int c = 0; c < num_classes; ++c) {
      const double exact = static_cast<double>(cap) * class_total[c] / static_cast<double>(n);
      quota[c] = static_cast<size_t>(exact);
      assigned += quota[c];
      frac.push_back({exact - static_cast<double>(quota[c]), c});
    }
    std::stable_sort(frac.begin(), frac.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (size_t i = 0; assigned < cap && i < frac.size(); ++i) {
      if (quota[frac[i].second] < class_total[frac[i].second]) {
        quota[frac[i].second] += 1;
        ++assigned;
      }
    }
  }

  std::vector<size_t> keep;
  std::vector<size_t> taken(num_classes, 0);
  for (size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (taken[y] < quota[y]) {
      keep.push_back(i);
      taken[y] += 1;
    }
  }

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  const auto grow = [&](const Vec& p) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  };
  for (size_t i : keep) grow(points[i]);
  for (const Vec& m : means) grow(m);
  if (keep.empty() && means.empty()) {
    xmin = ymin = -1.0;
    xmax = ymax = 1.0;
  }
  const double padx = 0.05 * std::max(xmax - xmin, 1e-9);
  const double pady = 0.05 * std::max(ymax - ymin, 1e-9);
  xmin -= padx;
  xmax += padx;
  ymin -= pady;
  ymax += pady;
  const double w = 640.0, h = 640.0;
  const auto sx = [&](double x) { return w * (x - xmin) / (xmax - xmin); };
  const auto sy = [&](double y) { return h * (ymax - y) / (ymax - ymin); };  // y grows upward

  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
         "viewBox=\"0 0 640 640\">\n"
      << "<rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
  for (size_t i : keep) {
    out << "<circle cx=\"" << detail::fmt2(sx(points[i][0])) << "\" cy=\""
        << detail::fmt2(sy(points[i][1])) << "\" r=\"2\" fill=\""
        << kPalette[labels[i] % 8] << "\" fill-opacity=\"0.55\"/>\n";
  }
  for (const Vec& m : means) {
    const double cx = sx(m[0]), cy = sy(m[1]);
    out << "<line x1=\"" << detail::fmt2(cx - 7) << "\" y1=\"" << detail::fmt2(cy) << "\" x2=\""
        << detail::fmt2(cx + 7) << "\" y2=\"" << detail::fmt2(cy)
        << "\" stroke=\"#000000\" stroke-width=\"2.5\"/>\n"
        << "<line x1=\"" << detail::fmt2(cx) << "\" y1=\"" << detail::fmt2(cy - 7) << "\" x2=\""
        << detail::fmt2(cx) << "\" y2=\"" << detail::fmt2(cy + 7)
        << "\" stroke=\"#000000\" stroke-width=\"2.5\"/>\n";
  }
  out << "</svg>\n";
  return keep.size();
}

}  // namespace deeplda
