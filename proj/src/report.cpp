#include "gaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "gaudit/errors.hpp"
#include "gaudit/ingest.hpp"

namespace gaudit::report {

namespace {

std::string num(double v) { return csv::fixed(v, 2); }

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string svg_open(double width, double height) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         num(width) + "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + " " +
         num(height) + "\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">\n"
         "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" fill=\"#ffffff\"/>\n";
}

std::string text(double x, double y, std::string_view body, std::string_view extra = "") {
  std::string out = "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"";
  if (!extra.empty()) {
    out += ' ';
    out += extra;
  }
  return out + ">" + xml_escape(body) + "</text>\n";
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

std::string format_dollars(double value) {
  const double rounded = std::round(value);
  const bool negative = rounded < 0.0;
  auto magnitude = static_cast<unsigned long long>(std::llround(std::abs(rounded)));
  std::string digits = std::to_string(magnitude);
  std::string out;
  const std::size_t lead = digits.size() % 3 == 0 ? 3 : digits.size() % 3;
  out += digits.substr(0, lead);
  for (std::size_t i = lead; i < digits.size(); i += 3) {
    out += ',';
    out += digits.substr(i, 3);
  }
  return negative ? "-" + out : out;
}

std::string render_dot_plot(const RankedGroups& groups, std::span<const std::string> labels,
                            std::string_view title) {
  if (groups.under.empty() && groups.over.empty()) {
    throw EmptyInput("dot_plot: no groups to draw");
  }
  std::set<int> used;
  double max_abs = 0.0;
  for (const auto* section : {&groups.under, &groups.over}) {
    for (const auto& g : *section) {
      for (const auto& c : g.signature.constraints()) used.insert(c.component);
      max_abs = std::max(max_abs, std::abs(g.overall_mean_predicted_residual));
    }
  }
  const std::vector<int> columns(used.begin(), used.end());

  constexpr double kMargin = 20.0;
  constexpr double kHeader = 110.0;  // rotated component labels
  constexpr double kRow = 22.0;
  constexpr double kSectionGap = 28.0;
  constexpr double kCol = 24.0;
  constexpr double kBarWidth = 260.0;
  constexpr double kLabelWidth = 90.0;
  const double dots_left = kMargin + 20.0;
  const double bar_left = dots_left + kCol * static_cast<double>(columns.size()) + 20.0;
  const double zero_x = bar_left + kBarWidth / 2.0;
  const double width = bar_left + kBarWidth + kLabelWidth + kMargin;
  const double title_h = title.empty() ? 0.0 : 24.0;
  const auto n_rows = static_cast<double>(groups.under.size() + groups.over.size());
  const double sections = (groups.under.empty() ? 0.0 : 1.0) + (groups.over.empty() ? 0.0 : 1.0);
  const double height = kMargin + title_h + kHeader + sections * kSectionGap + n_rows * kRow + kMargin;
  const double scale = max_abs > 0.0 ? (kBarWidth / 2.0 - 4.0) / max_abs : 0.0;

  std::string svg = svg_open(width, height);
  double y = kMargin;
  if (!title.empty()) {
    svg += text(width / 2.0, y + 12.0, title, "text-anchor=\"middle\" font-size=\"14\"");
    y += title_h;
  }
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const double x = dots_left + kCol * (static_cast<double>(k) + 0.5);
    const double ly = y + kHeader - 8.0;
    svg += "<text x=\"" + num(x) + "\" y=\"" + num(ly) + "\" transform=\"rotate(-60 " + num(x) +
           " " + num(ly) + ")\">" + xml_escape(labels[static_cast<std::size_t>(columns[k])]) +
           "</text>\n";
  }
  svg += text(zero_x, y + kHeader - 8.0, "Mean predicted residual ($)",
              "text-anchor=\"middle\"");
  y += kHeader;

  auto draw_section = [&](const std::vector<GroupStats>& rows, std::string_view heading) {
    if (rows.empty()) return;
    svg += "<line class=\"section-rule\" x1=\"" + num(kMargin) + "\" y1=\"" + num(y + 4.0) +
           "\" x2=\"" + num(width - kMargin) + "\" y2=\"" + num(y + 4.0) +
           "\" stroke=\"#999999\" stroke-width=\"1\"/>\n";
    svg += text(kMargin, y + 20.0, heading, "font-weight=\"bold\"");
    y += kSectionGap;
    for (const auto& g : rows) {
      const double cy = y + kRow / 2.0;
      for (std::size_t k = 0; k < columns.size(); ++k) {
        const auto state = g.signature.constraint_on(columns[k]);
        if (!state) continue;
        const double cx = dots_left + kCol * (static_cast<double>(k) + 0.5);
        if (*state) {
          svg += "<circle class=\"present\" cx=\"" + num(cx) + "\" cy=\"" + num(cy) +
                 "\" r=\"6.00\" fill=\"#1f3b73\" stroke=\"#1f3b73\" stroke-width=\"1.5\"/>\n";
        } else {
          svg += "<circle class=\"absent\" cx=\"" + num(cx) + "\" cy=\"" + num(cy) +
                 "\" r=\"6.00\" fill=\"#ffffff\" stroke=\"#1f3b73\" stroke-width=\"1.5\"/>\n";
        }
      }
      const double v = g.overall_mean_predicted_residual;
      const double bar_end = zero_x + v * scale;
      const double x0 = std::min(zero_x, bar_end);
      svg += "<rect class=\"bar\" x=\"" + num(x0) + "\" y=\"" + num(cy - 6.0) + "\" width=\"" +
             num(std::abs(bar_end - zero_x)) + "\" height=\"12.00\" fill=\"" +
             (v < 0.0 ? "#b2182b" : "#2166ac") + "\"/>\n";
      svg += text(bar_left + kBarWidth + 6.0, cy + 4.0, format_dollars(v), "class=\"value\"");
      y += kRow;
    }
  };
  const double axis_top = y;
  draw_section(groups.under, "Undercompensated");
  draw_section(groups.over, "Overcompensated");
  svg += "<line class=\"zero\" x1=\"" + num(zero_x) + "\" y1=\"" + num(axis_top) + "\" x2=\"" +
         num(zero_x) + "\" y2=\"" + num(y) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  svg += "</svg>\n";
  return svg;
}

void dot_plot(const RankedGroups& groups, std::span<const std::string> labels,
              const std::filesystem::path& path, std::string_view title) {
  csv::write_file(path, render_dot_plot(groups, labels, title));
}

std::string render_scatter(std::span<const GroupStats> groups, std::string_view title) {
  struct Point {
    double x, y;
    int year;
  };
  std::vector<Point> points;
  for (const auto& g : groups) {
    for (const auto& [year, ys] : g.per_year) {
      if (ys.observed) points.push_back({ys.mean_predicted_residual, ys.observed_mean_residual, year});
    }
  }
  if (points.empty()) throw EmptyInput("scatter: no group-year has an observed mean");

  double lo = 0.0;
  double hi = 0.0;
  for (const auto& p : points) {
    lo = std::min({lo, p.x, p.y});
    hi = std::max({hi, p.x, p.y});
  }
  const double pad = std::max(1.0, 0.05 * (hi - lo));
  lo -= pad;
  hi += pad;

  constexpr double kPlot = 400.0;
  constexpr double kLeft = 80.0;
  constexpr double kTop = 40.0;
  const double width = kLeft + kPlot + 30.0;
  const double height = kTop + kPlot + 60.0;
  auto sx = [&](double v) { return kLeft + (v - lo) / (hi - lo) * kPlot; };
  auto sy = [&](double v) { return kTop + kPlot - (v - lo) / (hi - lo) * kPlot; };

  std::map<int, std::string> year_colors;
  static const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};
  for (const auto& p : points) year_colors.emplace(p.year, "");
  std::size_t k = 0;
  for (auto& [_, color] : year_colors) color = kPalette[k++ % std::size(kPalette)];

  std::string svg = svg_open(width, height);
  if (!title.empty()) svg += text(width / 2.0, 20.0, title, "text-anchor=\"middle\" font-size=\"14\"");
  svg += "<rect class=\"frame\" x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" +
         num(kPlot) + "\" height=\"" + num(kPlot) + "\" fill=\"none\" stroke=\"#333333\"/>\n";
  svg += "<line class=\"identity\" x1=\"" + num(sx(lo)) + "\" y1=\"" + num(sy(lo)) + "\" x2=\"" +
         num(sx(hi)) + "\" y2=\"" + num(sy(hi)) +
         "\" stroke=\"#888888\" stroke-dasharray=\"4,3\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg += text(sx(v), kTop + kPlot + 16.0, format_dollars(v), "text-anchor=\"middle\" font-size=\"10\"");
    svg += text(kLeft - 6.0, sy(v) + 4.0, format_dollars(v), "text-anchor=\"end\" font-size=\"10\"");
  }
  svg += text(kLeft + kPlot / 2.0, kTop + kPlot + 36.0, "Predicted mean residual ($)",
              "text-anchor=\"middle\"");
  svg += text(16.0, kTop + kPlot / 2.0, "Observed mean residual ($)",
              "text-anchor=\"middle\" transform=\"rotate(-90 16.00 " + num(kTop + kPlot / 2.0) + ")\"");
  for (const auto& p : points) {
    svg += "<circle class=\"point\" data-year=\"" + std::to_string(p.year) + "\" cx=\"" +
           num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) + "\" r=\"4.00\" fill=\"" +
           year_colors[p.year] + "\" fill-opacity=\"0.8\"/>\n";
  }
  double ly = kTop + 12.0;
  for (const auto& [year, color] : year_colors) {
    svg += "<rect class=\"legend\" x=\"" + num(kLeft + 10.0) + "\" y=\"" + num(ly - 8.0) +
           "\" width=\"8.00\" height=\"8.00\" fill=\"" + color + "\"/>\n";
    svg += text(kLeft + 22.0, ly, std::to_string(year), "font-size=\"10\"");
    ly += 14.0;
  }
  svg += "</svg>\n";
  return svg;
}

void scatter_obs_vs_pred(std::span<const GroupStats> groups, const std::filesystem::path& path,
                         std::string_view title) {
  csv::write_file(path, render_scatter(groups, title));
}

std::string prevalence_table_text(std::span<const PrevalenceRow> rows,
                                  const FormulaProfile& profile) {
  std::set<int> years;
  std::map<std::pair<int, int>, double> value;
  std::map<int, std::int64_t> n;
  for (const auto& r : rows) {
    years.insert(r.year);
    value[{r.component, r.year}] = r.fraction;
    n[r.year] = r.rows;
  }
  std::size_t label_w = 12;
  for (const auto& l : profile.component_labels) label_w = std::max(label_w, l.size() + 2);
  std::string out = pad_right("Component (%)", label_w);
  for (int y : years) out += pad_left(std::to_string(y), 12);
  out += '\n';
  for (int c = 0; c < profile.component_count(); ++c) {
    out += pad_right(profile.component_labels[static_cast<std::size_t>(c)], label_w);
    for (int y : years) {
      auto it = value.find({c, y});
      out += pad_left(it == value.end() ? "" : csv::fixed(100.0 * it->second, 1), 12);
    }
    out += '\n';
  }
  out += pad_right("N", label_w);
  for (int y : years) out += pad_left(format_dollars(static_cast<double>(n[y])), 12);
  out += '\n';
  return out;
}

std::string prevalence_table_csv(std::span<const PrevalenceRow> rows,
                                 const FormulaProfile& profile) {
  std::set<int> years;
  std::map<std::pair<int, int>, double> value;
  for (const auto& r : rows) {
    years.insert(r.year);
    value[{r.component, r.year}] = r.fraction;
  }
  std::string out = "component";
  for (int y : years) out += ",percent_" + std::to_string(y);
  out += '\n';
  for (int c = 0; c < profile.component_count(); ++c) {
    out += csv::quote(profile.component_labels[static_cast<std::size_t>(c)]);
    for (int y : years) {
      auto it = value.find({c, y});
      out += ',' + (it == value.end() ? std::string{} : csv::fixed(100.0 * it->second, 1));
    }
    out += '\n';
  }
  return out;
}

std::string residual_table_text(std::span<const ConditionResidualRow> rows,
                                const FormulaProfile& profile) {
  std::set<int> years;
  std::set<int> components;
  std::map<std::pair<int, int>, const ConditionResidualRow*> cell;
  for (const auto& r : rows) {
    years.insert(r.year);
    components.insert(r.component);
    cell[{r.component, r.year}] = &r;
  }
  std::size_t label_w = 18;
  for (const auto& l : profile.component_labels) label_w = std::max(label_w, l.size() + 2);
  std::string out = pad_right("", label_w);
  for (int y : years) out += pad_left(std::to_string(y), 20);
  out += '\n' + pad_right("Chronic condition", label_w);
  for (std::size_t i = 0; i < years.size(); ++i) out += pad_left("No", 10) + pad_left("Yes", 10);
  out += '\n';
  for (int c : components) {
    out += pad_right(profile.component_labels.at(static_cast<std::size_t>(c)), label_w);
    for (int y : years) {
      auto it = cell.find({c, y});
      if (it == cell.end()) {
        out += pad_left("", 20);
        continue;
      }
      out += pad_left(format_dollars(it->second->mean_absent), 10) +
             pad_left(format_dollars(it->second->mean_present), 10);
    }
    out += '\n';
  }
  return out;
}

std::string residual_table_csv(std::span<const ConditionResidualRow> rows,
                               const FormulaProfile& profile) {
  std::string out = "year,condition,mean_absent,mean_present,n_absent,n_present\n";
  for (const auto& r : rows) {
    out += std::to_string(r.year) + ',' +
           csv::quote(profile.component_labels.at(static_cast<std::size_t>(r.component))) + ',' +
           csv::fixed(r.mean_absent, 2) + ',' + csv::fixed(r.mean_present, 2) + ',' +
           std::to_string(r.n_absent) + ',' + std::to_string(r.n_present) + '\n';
  }
  return out;
}

}  // namespace gaudit::report
