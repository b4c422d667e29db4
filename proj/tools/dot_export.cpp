#include "dot_export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dct::cli {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string fill_color(double t) {
  // t in [0, 1]: red -> green
  t = std::clamp(t, 0.0, 1.0);
  const auto r = static_cast<int>(std::lround(230.0 * (1.0 - t) + 26.0 * t));
  const auto g = static_cast<int>(std::lround(60.0 * (1.0 - t) + 170.0 * t));
  const auto b = static_cast<int>(std::lround(50.0 * (1.0 - t) + 80.0 * t));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string to_dot(const TreeDocument& doc) {
  const RegressionTree& tree = doc.tree.structure;
  const auto& est = doc.tree.estimates;
  if (est.size() != tree.size()) throw std::invalid_argument("to_dot: estimate count does not match node count");

  double lo = INFINITY, hi = -INFINITY;
  for (const auto& e : est) {
    if (!e.available) continue;
    lo = std::min(lo, e.tau_hat);
    hi = std::max(hi, e.tau_hat);
  }

  auto feature_name = [&](int f) {
    const auto k = static_cast<std::size_t>(f);
    return k < doc.feature_names.size() ? doc.feature_names[k] : "x" + std::to_string(f + 1);
  };

  std::ostringstream out;
  out << "digraph dct {\n";
  out << "  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n";
  out << "  edge [fontname=\"Helvetica\"];\n";
  for (std::size_t id = 0; id < tree.size(); ++id) {
    const TreeNode& n = tree.node(id);
    const LeafEstimate& e = est[id];
    std::string label = n.is_leaf() ? "leaf" : escape(feature_name(n.feature));
    std::string color = "#d0d0d0";
    double pen = 1.0;
    if (e.available) {
      label += "\\ntau = " + fixed(e.tau_hat) + (e.significant_95 ? "*" : "");
      label += "\\nse = " + (e.se_available ? fixed(e.se) : std::string("n/a"));
      const double t = hi > lo ? (e.tau_hat - lo) / (hi - lo) : 0.5;
      color = fill_color(t);
      if (e.significant_95) pen = 3.0;
    } else {
      label += "\\ntau = n/a";
    }
    label += "\\nn = " + std::to_string(e.n_node);
    out << "  n" << id << " [label=\"" << label << "\", fillcolor=\"" << color << "\", penwidth=" << fixed(pen, 1)
        << "];\n";
  }
  for (std::size_t id = 0; id < tree.size(); ++id) {
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) continue;
    char thr[64];
    std::snprintf(thr, sizeof thr, "%.4g", n.threshold);
    out << "  n" << id << " -> n" << n.left << " [label=\"<= " << thr << "\"];\n";
    out << "  n" << id << " -> n" << n.right << " [label=\"> " << thr << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace dct::cli
