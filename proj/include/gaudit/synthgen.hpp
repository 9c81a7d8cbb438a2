#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gaudit/domain.hpp"

namespace gaudit {

enum class NoiseFamily { kGaussian, kLognormal };

// Extra spend added to every person satisfying all constraints of
// `signature`. The audited formula has no column for it, so it surfaces in
// the residuals as undercompensation of roughly -extra_spend.
struct PlantedInteraction {
  GroupSignature signature;
  double extra_spend = 0.0;
};

using PrevalenceTable = std::map<std::string, double>;  // component label -> probability

struct GeneratorSpec {
  FormulaProfile profile = FormulaProfile::marketplaces();
  int n_persons = 100'000;  // per year
  std::vector<int> years{2016, 2017, 2018};

  // Keys are component labels. Age-band entries form one categorical
  // distribution (they must sum to 1 within 0.005 and are renormalized);
  // every other component is an independent Bernoulli draw. Years missing
  // from `prevalence_by_year` use `prevalence`.
  PrevalenceTable prevalence;
  std::map<int, PrevalenceTable> prevalence_by_year;

  int market_count = 50;
  // Dollars per market. When empty, effects are drawn uniformly from
  // [-market_spread, market_spread] (whole dollars) using the seed.
  std::vector<double> market_effects;
  double market_spread = 500.0;

  double base_spend = 3000.0;
  std::vector<double> cell_effects;              // per Age×Sex cell; empty = zeros
  std::map<std::string, double> condition_effects;  // per condition label

  std::vector<PlantedInteraction> planted_interactions;

  NoiseFamily noise_family = NoiseFamily::kLognormal;
  double noise_scale = 0.0;      // standard deviation of the additive noise
  double lognormal_sigma = 1.0;  // shape of the lognormal family

  // hcc_map[j] = condition index (0-based within condition_labels) that
  // drives HCC column j. Empty means HCC_j = condition_j.
  std::vector<int> hcc_map;

  std::uint64_t seed = 20210601;

  // Published prevalences for the profile (marketplaces or medicare), default
  // effects, no planted interactions, no noise. For the prospective profile
  // the table year is the spend year, so it is keyed on feature_year + 1.
  static GeneratorSpec calibrated(const FormulaProfile& profile, std::vector<int> years,
                                  int n_persons, std::uint64_t seed);

  const PrevalenceTable& prevalence_for(int year) const;
  double prevalence_of(int year, int component) const;

  // Throws InvalidSpec naming the offending field.
  void validate() const;
};

using PanelSet = std::map<int, Panel>;  // feature_year -> rows

// Deterministic given the spec: person i of year y draws only from its own
// substream (seed, y, i), so the thread count does not affect the output.
PanelSet generate(const GeneratorSpec& spec, int threads = 1);

// Market effects actually used by `generate` (explicit or seed-derived).
std::vector<double> resolved_market_effects(const GeneratorSpec& spec);

struct PrevalenceRow {
  int year = 0;
  int component = 0;
  std::int64_t count = 0;
  std::int64_t rows = 0;
  double fraction = 0.0;
};

// One row per component per feature year, years ascending. Throws
// EmptyPanel when there are no rows.
std::vector<PrevalenceRow> prevalence_report(const Panel& panel, const FormulaProfile& profile);

}  // namespace gaudit
