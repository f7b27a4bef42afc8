// SPDX-License-Identifier: Apache-2.0

#include "spt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "spt/model.hpp"

namespace spt {

std::string eval_record_line(std::string_view phase, const EvalRecord& r) {
  nlohmann::json j{{"event", "eval"},
                   {"phase", phase},
                   {"epoch", r.epoch},
                   {"step", r.step},
                   {"train_loss", r.train_loss},
                   {"accuracy", r.accuracy},
                   {"lr", r.lr}};
  return j.dump();
}

void print_patterns(std::ostream& os, const PatternReport& report) {
  const auto old = os.flags();
  os << "top-" << report.tau << " connections by block\n";
  for (std::size_t b = 0; b < report.block.size(); ++b) {
    os << "  block" << std::left << std::setw(4) << b << std::right << std::setw(10) << report.block_counts[b]
       << std::setw(10) << std::fixed << std::setprecision(4) << report.block[b] << '\n';
  }
  std::size_t in_blocks = 0;
  for (std::size_t c : report.block_counts) in_blocks += c;
  os << "  outside blocks " << std::setw(8) << report.tau - std::min(report.tau, in_blocks) << '\n';
  os << "by role\n";
  for (std::size_t i = 0; i < report.role.size(); ++i) {
    os << "  " << std::left << std::setw(9) << kMatrixRoles[i] << std::right << std::setw(10)
       << report.role_counts[i] << std::setw(10) << std::fixed << std::setprecision(4) << report.role[i] << '\n';
  }
  os.flags(old);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void bars(std::ostringstream& svg, double x0, double y0, double w, double h, std::span<const double> values,
          std::span<const std::string> labels, const char* title, const char* colour) {
  svg << "<text x=\"" << fmt(x0) << "\" y=\"" << fmt(y0 - 8) << "\" font-size=\"13\">" << title << "</text>\n";
  svg << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
  if (values.empty()) return;
  const double slot = w / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double bh = std::clamp(values[i], 0.0, 1.0) * h;
    const double x = x0 + slot * static_cast<double>(i) + slot * 0.15;
    svg << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y0 + h - bh) << "\" width=\"" << fmt(slot * 0.7)
        << "\" height=\"" << fmt(bh) << "\" fill=\"" << colour << "\"/>\n";
    svg << "<text x=\"" << fmt(x + slot * 0.35) << "\" y=\"" << fmt(y0 + h + 14)
        << "\" font-size=\"10\" text-anchor=\"middle\">" << labels[i] << "</text>\n";
  }
}

}  // namespace

std::string render_svg(std::span<const EvalRecord> history, const PatternReport* patterns) {
  constexpr double kW = 900;
  constexpr double kH = 320;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // Accuracy curve.
  const double x0 = 50;
  const double y0 = 40;
  const double w = 360;
  const double h = 220;
  svg << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\" font-size=\"13\">validation accuracy</text>\n";
  svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (double tick : {0.0, 0.5, 1.0}) {
    svg << "<text x=\"" << x0 - 6 << "\" y=\"" << fmt(y0 + h - tick * h + 4)
        << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(tick) << "</text>\n";
  }
  if (!history.empty()) {
    const double last = static_cast<double>(std::max<std::size_t>(history.back().epoch, 1));
    svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (const auto& r : history) {
      const double x = x0 + w * static_cast<double>(r.epoch) / last;
      const double y = y0 + h - std::clamp(r.accuracy, 0.0, 1.0) * h;
      svg << fmt(x) << ',' << fmt(y) << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << x0 + w << "\" y=\"" << y0 + h + 16 << "\" font-size=\"10\" text-anchor=\"end\">epoch "
        << history.back().epoch << "</text>\n";
  }

  if (patterns != nullptr) {
    std::vector<std::string> block_labels;
    for (std::size_t b = 0; b < patterns->block.size(); ++b) block_labels.push_back(std::to_string(b));
    bars(svg, 470, 40, 190, 220, patterns->block, block_labels, "sensitive share per block", "#d62728");
    std::vector<std::string> role_labels(std::begin(kMatrixRoles), std::end(kMatrixRoles));
    bars(svg, 690, 40, 190, 220, patterns->role, role_labels, "per role", "#2ca02c");
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace spt
