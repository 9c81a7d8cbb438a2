#include <regex>

#include "doctest.h"
#include "gaudit/errors.hpp"
#include "gaudit/report.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gaudit;
using gaudit::testing::sig;

namespace {

const auto kProfile = FormulaProfile::marketplaces();
const auto& kLabels = kProfile.component_labels;

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

GroupStats group(GroupSignature s, double overall) {
  GroupStats g;
  g.signature = std::move(s);
  g.per_year[2016] = {10, 0.01, overall, 0.0, 0, false};
  g.overall_mean_predicted_residual = overall;
  return g;
}

GroupStats observed_group(GroupSignature s, std::vector<std::pair<double, double>> pred_obs) {
  GroupStats g;
  g.signature = std::move(s);
  int year = 2016;
  for (auto [p, o] : pred_obs) g.per_year[year++] = {10, 0.01, p, o, 100, true};
  return g;
}

struct Pt {
  double x, y;
};

std::vector<Pt> points_in(const std::string& svg) {
  std::vector<Pt> out;
  const std::regex re("<circle class=\"point\"[^>]*cx=\"([-0-9.]+)\" cy=\"([-0-9.]+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back({std::stod((*it)[1]), std::stod((*it)[2])});
  }
  return out;
}

}  // namespace

TEST_CASE("dollar formatting") {
  CHECK(report::format_dollars(-5000) == "-5,000");
  CHECK(report::format_dollars(29600) == "29,600");
  CHECK(report::format_dollars(-1234567.4) == "-1,234,567");
  CHECK(report::format_dollars(999.5) == "1,000");
  CHECK(report::format_dollars(0) == "0");
  CHECK(report::format_dollars(-0.3) == "0");
  CHECK(report::format_dollars(100) == "100");
}

TEST_CASE("a single present constraint draws one filled circle") {
  RankedGroups r;
  r.under.push_back(group(sig({{kProfile.component_index("asthma"), true}}), -5000.0));
  const auto svg = report::render_dot_plot(r, kLabels, "");
  CHECK(count_of(svg, "<circle class=\"present\"") == 1);
  CHECK(count_of(svg, "<circle class=\"absent\"") == 0);
  CHECK(count_of(svg, "<circle") == 1);
  CHECK(svg.find(">-5,000</text>") != std::string::npos);
  CHECK(svg.find(">asthma</text>") != std::string::npos);
  std::string why;
  CHECK_MESSAGE(oracle::well_formed_xml(svg, &why), why);
}

TEST_CASE("absent constraints draw unfilled circles") {
  RankedGroups r;
  r.under.push_back(group(sig({{kProfile.component_index("asthma"), true},
                               {kProfile.component_index("heart"), false}}),
                          -1200.0));
  const auto svg = report::render_dot_plot(r, kLabels, "t");
  CHECK(count_of(svg, "<circle class=\"absent\"") == 1);
  CHECK(svg.find("class=\"absent\" cx=\"") != std::string::npos);
  CHECK(svg.find("fill=\"#ffffff\" stroke=\"#1f3b73\"") != std::string::npos);
}

TEST_CASE("ten under and seven over groups give seventeen rows in two sections") {
  RankedGroups r;
  for (int i = 0; i < 10; ++i) r.under.push_back(group(sig({{6 + i, true}}), -1000.0 * (10 - i)));
  for (int i = 0; i < 7; ++i) r.over.push_back(group(sig({{i, false}, {17, true}}), 100.0 * (7 - i)));
  const auto svg = report::render_dot_plot(r, kLabels, "Top groups");
  CHECK(count_of(svg, "<rect class=\"bar\"") == 17);
  CHECK(count_of(svg, "class=\"value\"") == 17);
  const auto under = svg.find(">Undercompensated<");
  const auto over = svg.find(">Overcompensated<");
  REQUIRE(under != std::string::npos);
  REQUIRE(over != std::string::npos);
  CHECK(under < over);
  CHECK(count_of(svg, "class=\"section-rule\"") == 2);
  // Every undercompensated bar precedes the overcompensated heading.
  CHECK(count_of(svg.substr(0, over), "<rect class=\"bar\"") == 10);
  CHECK(oracle::well_formed_xml(svg));
}

TEST_CASE("only constrained components get a column") {
  RankedGroups r;
  r.under.push_back(group(sig({{7, true}, {10, true}}), -8000.0));
  r.over.push_back(group(sig({{12, false}}), 300.0));
  const auto svg = report::render_dot_plot(r, kLabels, "");
  for (const char* shown : {">asthma<", ">heart<", ">kidney<"}) CHECK(svg.find(shown) != std::string::npos);
  for (const char* hidden : {">female<", ">cancer<", ">viral<"}) CHECK(svg.find(hidden) == std::string::npos);
}

TEST_CASE("dot plot rejects empty input and escapes text") {
  CHECK_THROWS_AS(report::render_dot_plot({}, kLabels, ""), EmptyInput);
  RankedGroups r;
  r.under.push_back(group(sig({{0, true}}), -1.0));
  const std::vector<std::string> odd{"a<b&c"};
  const auto svg = report::render_dot_plot(r, odd, "R & D \"quotes\"");
  CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
  CHECK(oracle::well_formed_xml(svg));
}

TEST_CASE("matching observed and predicted means sit on the identity line") {
  std::vector<GroupStats> groups{
      observed_group(sig({{7, true}}), {{-5000, -5000}, {-4000, -4000}, {-6000, -6000}}),
      observed_group(sig({{8, true}}), {{300, 300}, {1200, 1200}}),
  };
  const auto svg = report::render_scatter(groups, "Observed vs predicted");
  const auto pts = points_in(svg);
  REQUIRE(pts.size() == 5);
  const std::regex line_re(
      "class=\"identity\" x1=\"([-0-9.]+)\" y1=\"([-0-9.]+)\" x2=\"([-0-9.]+)\" y2=\"([-0-9.]+)\"");
  std::smatch m;
  REQUIRE(std::regex_search(svg, m, line_re));
  const double x1 = std::stod(m[1]), y1 = std::stod(m[2]), x2 = std::stod(m[3]), y2 = std::stod(m[4]);
  for (const auto& p : pts) {
    // Distance from the identity segment's supporting line, in pixels.
    const double cross = (x2 - x1) * (p.y - y1) - (y2 - y1) * (p.x - x1);
    const double len = std::hypot(x2 - x1, y2 - y1);
    CHECK(std::abs(cross) / len < 0.02);
  }
  CHECK(oracle::well_formed_xml(svg));
}

TEST_CASE("one group over three years gives three points") {
  std::vector<GroupStats> groups{observed_group(sig({{7, true}}), {{-10, -20}, {-30, -5}, {0, 4}})};
  const auto svg = report::render_scatter(groups, "");
  CHECK(points_in(svg).size() == 3);
  CHECK(count_of(svg, "data-year=\"2016\"") == 1);
  CHECK(count_of(svg, "data-year=\"2018\"") == 1);
  // Observed -20 against predicted -10 plots below the diagonal, which is
  // further down the page in SVG coordinates.
  const auto pts = points_in(svg);
  const std::regex line_re(
      "class=\"identity\" x1=\"([-0-9.]+)\" y1=\"([-0-9.]+)\" x2=\"([-0-9.]+)\" y2=\"([-0-9.]+)\"");
  std::smatch m;
  REQUIRE(std::regex_search(svg, m, line_re));
  const double x1 = std::stod(m[1]), y1 = std::stod(m[2]), x2 = std::stod(m[3]), y2 = std::stod(m[4]);
  const double diag_y = y1 + (pts[0].x - x1) * (y2 - y1) / (x2 - x1);
  CHECK(pts[0].y > diag_y);
  const double diag_y1 = y1 + (pts[1].x - x1) * (y2 - y1) / (x2 - x1);
  CHECK(pts[1].y < diag_y1);
}

TEST_CASE("scatter needs observed means") {
  std::vector<GroupStats> groups{group(sig({{7, true}}), -100.0)};
  CHECK_THROWS_AS(report::render_scatter(groups, ""), EmptyInput);
  CHECK_THROWS_AS(report::render_scatter({}, ""), EmptyInput);
}

TEST_CASE("rendering is byte-deterministic") {
  RankedGroups r;
  r.under.push_back(group(sig({{7, true}, {10, true}}), -6393.09));
  r.over.push_back(group(sig({{1, false}}), 12.5));
  CHECK(report::render_dot_plot(r, kLabels, "x") == report::render_dot_plot(r, kLabels, "x"));
  std::vector<GroupStats> groups{observed_group(sig({{7, true}}), {{-1, -2}, {-3, -4}})};
  CHECK(report::render_scatter(groups, "y") == report::render_scatter(groups, "y"));
}

TEST_CASE("prevalence tables") {
  const std::vector<PrevalenceRow> rows{{2016, 5, 523, 1000, 0.523}, {2017, 5, 522, 1000, 0.522},
                                        {2016, 11, 141, 1000, 0.141}};
  const auto txt = report::prevalence_table_text(rows, kProfile);
  CHECK(txt.find("female") != std::string::npos);
  CHECK(txt.find("52.3") != std::string::npos);
  CHECK(txt.find("52.2") != std::string::npos);
  CHECK(txt.find("14.1") != std::string::npos);
  CHECK(txt.find("1,000") != std::string::npos);
  const auto csv = report::prevalence_table_csv(rows, kProfile);
  CHECK(csv.rfind("component,percent_2016,percent_2017\n", 0) == 0);
  CHECK(csv.find("\nfemale,52.3,52.2\n") != std::string::npos);
  CHECK(csv.find("\nhypertension,14.1,\n") != std::string::npos);
}

TEST_CASE("residual tables") {
  const std::vector<ConditionResidualRow> rows{{2016, 6, 10.0, -100.0, 6, 4},
                                               {2017, 6, 12.0, -2950.4, 6, 4}};
  const auto csv = report::residual_table_csv(rows, kProfile);
  CHECK(csv.find("arthritis") != std::string::npos);
  CHECK(csv.find("-100") != std::string::npos);
  const auto txt = report::residual_table_text(rows, kProfile);
  CHECK(txt.find("arthritis") != std::string::npos);
  CHECK(txt.find("-2,950") != std::string::npos);
}
