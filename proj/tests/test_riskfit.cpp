#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "gaudit/errors.hpp"
#include "gaudit/riskfit.hpp"
#include "gaudit/synthgen.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gaudit;
using gaudit::testing::make_row;

namespace {

// One age band, one condition driving one HCC.
FormulaProfile tiny_profile() {
  return FormulaProfile::make("custom", {"18-64"}, {"asthma"}, 1, false, "market");
}

// Random panel with noise over a few markets, marketplaces layout.
Panel noisy_panel(std::mt19937_64& gen, std::size_t n, int markets) {
  auto spec = GeneratorSpec::calibrated(FormulaProfile::marketplaces(), {2016}, static_cast<int>(n),
                                        gen());
  spec.market_count = markets;
  spec.noise_scale = 2000.0;
  spec.noise_family = NoiseFamily::kGaussian;
  // Raise the rare conditions so small samples keep every HCC column.
  for (auto& [label, p] : spec.prevalence_by_year[2016]) {
    if (spec.profile.component_index(label) >= spec.profile.first_condition()) p = std::max(p, 0.2);
  }
  return generate(spec).at(2016);
}

// Within-market demeaned copy of design column `col`.
std::vector<double> demeaned_column(const Panel& panel, const FormulaProfile& profile, int col) {
  auto value = [&](const PersonYear& r) {
    if (col < profile.cell_count()) return profile.cell_of(r) == col ? 1.0 : 0.0;
    return r.hcc.test(col - profile.cell_count()) ? 1.0 : 0.0;
  };
  std::map<int, std::pair<double, int>> sums;
  for (const auto& r : panel) {
    sums[r.market].first += value(r);
    ++sums[r.market].second;
  }
  std::vector<double> out;
  for (const auto& r : panel) out.push_back(value(r) - sums[r.market].first / sums[r.market].second);
  return out;
}

}  // namespace

TEST_CASE("design columns follow the profile") {
  const auto d = DesignSpec::for_profile(FormulaProfile::marketplaces());
  CHECK(d.cell_count == 10);
  CHECK(d.hcc_count == 12);
  CHECK(d.column_count() == 22);
  CHECK(d.column_names.front() == "cell_male_21-29");
  CHECK(d.column_names[1] == "cell_female_21-29");
  CHECK(d.column_names.back() == "hcc_11");
}

TEST_CASE("zero-noise linear panel is fitted exactly") {
  auto spec = GeneratorSpec::calibrated(FormulaProfile::marketplaces(), {2016}, 20000, 8);
  spec.market_count = 25;
  const auto panel = generate(spec).at(2016);
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(spec.profile));
  double worst = 0.0;
  for (double r : fit.residuals) worst = std::max(worst, std::abs(r));
  CHECK(worst < 1e-6);
  CHECK(fit.r_squared == doctest::Approx(1.0));
  // Condition effects are recovered as HCC coefficients.
  CHECK(fit.beta[10 + 1] == doctest::Approx(3000.0));  // asthma
  CHECK(fit.beta[10 + 6] == doctest::Approx(9000.0));  // kidney
}

TEST_CASE("six hand-built rows match the hand-solved normal equations") {
  const auto profile = tiny_profile();
  // (female, asthma, spend); one market.
  const std::vector<std::tuple<bool, bool, double>> data{
      {false, false, 100}, {false, true, 400}, {true, false, 150},
      {true, true, 380},   {false, false, 90}, {true, false, 220}};
  Panel panel;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto [female, asthma, spend] = data[i];
    panel.push_back(make_row(profile, "r" + std::to_string(i), 2016, 0,
                             female ? Sex::kFemale : Sex::kMale, 0,
                             asthma ? std::vector<int>{0} : std::vector<int>{}, spend));
  }
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(profile));
  // The two cells sum to the market dummy, so the later one goes.
  CHECK(fit.retained_columns == std::vector<int>{0, 2});
  CHECK(fit.dropped_columns == std::vector<int>{1});

  // Independent solve: center male, asthma and spend, then Cramer's rule.
  double mx = 0, ma = 0, my = 0;
  for (auto [female, asthma, spend] : data) {
    mx += !female;
    ma += asthma;
    my += spend;
  }
  mx /= 6, ma /= 6, my /= 6;
  double sxx = 0, saa = 0, sxa = 0, sxy = 0, say = 0;
  for (auto [female, asthma, spend] : data) {
    const double x = (!female) - mx, a = asthma - ma, y = spend - my;
    sxx += x * x, saa += a * a, sxa += x * a, sxy += x * y, say += a * y;
  }
  const double det = sxx * saa - sxa * sxa;
  const double b_male = (sxy * saa - sxa * say) / det;
  const double b_asthma = (sxx * say - sxa * sxy) / det;
  CHECK(fit.beta[0] == doctest::Approx(b_male).epsilon(1e-12));
  CHECK(fit.beta[2] == doctest::Approx(b_asthma).epsilon(1e-12));
  CHECK(fit.beta[1] == 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto [female, asthma, spend] = data[i];
    const double pred = my + b_male * ((!female) - mx) + b_asthma * (asthma - ma);
    CHECK(fit.predictions[i] == doctest::Approx(pred).epsilon(1e-12));
    CHECK(fit.residuals[i] == doctest::Approx(pred - spend).epsilon(1e-12));
  }
}

TEST_CASE("constant spend gives exact predictions and zero residuals") {
  std::mt19937_64 gen(3);
  auto panel = noisy_panel(gen, 800, 4);
  for (auto& r : panel) r.spend = 4321.0;
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(FormulaProfile::marketplaces()));
  for (std::size_t i = 0; i < panel.size(); ++i) {
    CHECK(fit.predictions[i] == doctest::Approx(4321.0).epsilon(1e-12));
    CHECK(std::abs(fit.residuals[i]) < 1e-8);
  }
}

TEST_CASE("residuals are orthogonal to the design and average zero per market") {
  std::mt19937_64 gen(17);
  const auto profile = FormulaProfile::marketplaces();
  for (int trial = 0; trial < 5; ++trial) {
    const auto panel = noisy_panel(gen, 3000, 1 + trial * 7);
    const auto fit = gaudit::fit(panel, DesignSpec::for_profile(profile));
    double rnorm = 0;
    for (double r : fit.residuals) rnorm += r * r;
    rnorm = std::sqrt(rnorm);
    for (int col : fit.retained_columns) {
      const auto x = demeaned_column(panel, profile, col);
      double dot = 0, xnorm = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * fit.residuals[i];
        xnorm += x[i] * x[i];
      }
      CHECK(std::abs(dot) / (std::sqrt(xnorm) * rnorm + 1e-300) < 1e-8);
    }
    std::map<int, std::pair<double, int>> by_market;
    for (std::size_t i = 0; i < panel.size(); ++i) {
      by_market[panel[i].market].first += fit.residuals[i];
      ++by_market[panel[i].market].second;
    }
    for (const auto& [_, s] : by_market) CHECK(std::abs(s.first / s.second) < 1e-6);
    for (std::size_t i = 0; i < panel.size(); ++i) {
      REQUIRE(fit.residuals[i] == fit.predictions[i] - panel[i].spend);
    }
  }
}

TEST_CASE("absorbed fixed effects match explicit market dummies") {
  std::mt19937_64 gen(23);
  const auto profile = FormulaProfile::marketplaces();
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 200 + gen() % 301;
    const int markets = 1 + static_cast<int>(gen() % 5);
    const auto panel = noisy_panel(gen, n, markets);
    const auto fit = gaudit::fit(panel, DesignSpec::for_profile(profile));

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(fit.retained_columns.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    std::vector<int> market_of;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = panel[i];
      for (std::size_t k = 0; k < fit.retained_columns.size(); ++k) {
        const int col = fit.retained_columns[k];
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            col < profile.cell_count() ? (profile.cell_of(r) == col)
                                       : r.hcc.test(col - profile.cell_count());
      }
      y(static_cast<Eigen::Index>(i)) = r.spend;
      market_of.push_back(r.market);
    }
    const auto oracle = oracle::dummy_ols(x, market_of, y);
    for (std::size_t k = 0; k < fit.retained_columns.size(); ++k) {
      const double want = oracle.beta(static_cast<Eigen::Index>(k));
      CHECK(std::abs(fit.beta[static_cast<std::size_t>(fit.retained_columns[k])] - want) <=
            1e-8 * std::max(1.0, std::abs(want)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(fit.residuals[i] - oracle.residuals(static_cast<Eigen::Index>(i))) < 1e-6);
    }
  }
}

TEST_CASE("sign convention: underpaid people carry negative residuals") {
  const auto profile = tiny_profile();
  Panel panel{make_row(profile, "low", 2016, 0, Sex::kMale, 0, {}, 3000.0),
              make_row(profile, "high", 2016, 0, Sex::kMale, 0, {}, 7000.0),
              make_row(profile, "f", 2016, 0, Sex::kFemale, 0, {}, 1000.0)};
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(profile));
  CHECK(fit.predictions[1] == doctest::Approx(5000.0));
  CHECK(fit.residuals[1] == doctest::Approx(-2000.0));
  CHECK(fit.residuals[0] == doctest::Approx(2000.0));
}

TEST_CASE("empty HCC columns are dropped and reported") {
  std::mt19937_64 gen(4);
  auto panel = noisy_panel(gen, 2000, 3);
  const auto profile = FormulaProfile::marketplaces();
  for (auto& r : panel) {
    r.hcc.set(6, false);
    r.components.set(profile.first_condition() + 6, false);
  }
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(profile));
  CHECK(std::find(fit.dropped_columns.begin(), fit.dropped_columns.end(), 10 + 6) !=
        fit.dropped_columns.end());
  CHECK(fit.beta[16] == 0.0);
  CHECK(fit.retained_columns.size() + fit.dropped_columns.size() == 22);
}

TEST_CASE("singleton markets are kept with a zero residual") {
  std::mt19937_64 gen(6);
  auto panel = noisy_panel(gen, 500, 2);
  panel[7].market = 99;
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(FormulaProfile::marketplaces()));
  CHECK(fit.singleton_markets == 1);
  CHECK(fit.market_count == 3);
  CHECK(std::abs(fit.residuals[7]) < 1e-9);
}

TEST_CASE("fit results do not depend on the thread count") {
  std::mt19937_64 gen(8);
  const auto panel = noisy_panel(gen, 40000, 30);
  const auto design = DesignSpec::for_profile(FormulaProfile::marketplaces());
  const auto a = gaudit::fit(panel, design, 1);
  const auto b = gaudit::fit(panel, design, 8);
  CHECK(a.beta == b.beta);
  CHECK(a.residuals == b.residuals);
}

TEST_CASE("fit input errors") {
  const auto profile = tiny_profile();
  const auto design = DesignSpec::for_profile(profile);
  CHECK_THROWS_AS(gaudit::fit({}, design), EmptyPanel);

  Panel mixed{make_row(profile, "a", 2016, 0, Sex::kMale, 0, {}, 1.0),
              make_row(profile, "b", 2017, 0, Sex::kMale, 0, {}, 2.0)};
  CHECK_THROWS_AS(gaudit::fit(mixed, design), YearMismatch);

  // Everyone identical: no column varies within the market.
  Panel flat{make_row(profile, "a", 2016, 0, Sex::kMale, 0, {}, 1.0),
             make_row(profile, "b", 2016, 0, Sex::kMale, 0, {}, 2.0)};
  CHECK_THROWS_AS(gaudit::fit(flat, design), DegenerateDesign);

  CHECK_THROWS_AS(gaudit::fit(flat, DesignSpec::for_profile(FormulaProfile::marketplaces())),
                  Misalignment);
}

TEST_CASE("residual by condition: direct means") {
  const auto profile = FormulaProfile::marketplaces();
  Panel panel;
  FitResult fit;
  for (int i = 0; i < 10; ++i) {
    const bool arthritis = i % 3 == 0;
    panel.push_back(make_row(profile, std::to_string(i), 2016, i % 5, Sex::kMale, 0,
                             arthritis ? std::vector<int>{0} : std::vector<int>{}, 1.0));
    fit.person_ids.push_back(std::to_string(i));
    fit.residuals.push_back(arthritis ? -100.0 : 10.0);
  }
  fit.year = 2016;
  const auto table = residual_by_condition(fit, panel, profile);
  REQUIRE(table.size() == 12);
  CHECK(table[0].component == profile.component_index("arthritis"));
  CHECK(table[0].mean_absent == 10.0);
  CHECK(table[0].mean_present == -100.0);
  CHECK(table[0].n_present == 4);
  CHECK(table[0].n_absent == 6);
  // A condition nobody has: the present side is empty.
  CHECK(table[1].n_present == 0);
  CHECK(table[1].mean_absent == doctest::Approx(-34.0));

  for (auto& r : fit.residuals) r = 0.0;
  for (const auto& row : residual_by_condition(fit, panel, profile)) {
    CHECK(row.mean_absent == 0.0);
    CHECK(row.mean_present == 0.0);
  }

  fit.residuals.pop_back();
  fit.person_ids.pop_back();
  CHECK_THROWS_AS(residual_by_condition(fit, panel, profile), Misalignment);
}

TEST_CASE("residual by condition agrees with a second scan on a planted panel") {
  auto spec = GeneratorSpec::calibrated(FormulaProfile::marketplaces(), {2017}, 30000, 12);
  spec.noise_scale = 1500.0;
  spec.planted_interactions.push_back(
      {gaudit::testing::sig({{spec.profile.component_index("asthma"), true},
                             {spec.profile.component_index("heart"), true}}),
       8000.0});
  const auto panel = generate(spec).at(2017);
  const auto fit = gaudit::fit(panel, DesignSpec::for_profile(spec.profile));
  const auto table = residual_by_condition(fit, panel, spec.profile);
  for (const auto& row : table) {
    double s[2] = {0, 0};
    std::int64_t n[2] = {0, 0};
    for (std::size_t i = 0; i < panel.size(); ++i) {
      const int k = panel[i].components.test(row.component);
      s[k] += fit.residuals[i];
      ++n[k];
    }
    CHECK(row.n_absent == n[0]);
    CHECK(row.n_present == n[1]);
    CHECK(row.mean_absent == doctest::Approx(s[0] / n[0]).epsilon(1e-9));
    CHECK(row.mean_present == doctest::Approx(s[1] / n[1]).epsilon(1e-9));
  }
}
