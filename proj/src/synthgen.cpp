#include "gaudit/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "gaudit/errors.hpp"
#include "gaudit/parallel.hpp"
#include "gaudit/rng.hpp"

namespace gaudit {

namespace {

// Percent columns of the sample-characteristics tables, keyed by table year.
// Row order: female, age bands..., then the twelve conditions in profile order.
struct CalibrationColumn {
  int year;
  std::vector<double> percents;
};

const std::vector<CalibrationColumn>& marketplaces_table() {
  static const std::vector<CalibrationColumn> table{
      {2016, {52.3, 17.9, 20.4, 23.7, 27.2, 10.8, 4.5, 10.6, 7.1, 8.9, 9.1, 14.1, 0.6, 10.2, 11.1,
              0.7, 0.6, 0.4}},
      {2017, {52.2, 17.9, 20.6, 23.7, 26.9, 10.8, 4.5, 10.7, 7.0, 9.0, 9.1, 13.9, 0.6, 9.7, 11.7,
              0.7, 0.6, 0.4}},
      {2018, {51.6, 18.0, 21.0, 23.7, 26.6, 10.7, 4.5, 10.8, 6.8, 8.9, 9.3, 13.7, 0.6, 9.5, 12.6,
              0.7, 0.6, 0.4}},
  };
  return table;
}

const std::vector<CalibrationColumn>& medicare_table() {
  static const std::vector<CalibrationColumn> table{
      {2016, {55.2, 27.9, 45.1, 22.1, 4.9, 28.9, 37.4, 33.0, 35.7, 45.6, 68.6, 11.6, 65.7, 34.2,
              6.8, 11.1, 0.4}},
      {2017, {55.1, 27.6, 46.2, 21.3, 4.8, 30.1, 37.4, 33.3, 37.2, 45.3, 68.5, 12.2, 65.4, 35.6,
              7.3, 10.8, 0.4}},
      {2018, {55.0, 26.6, 47.6, 21.0, 4.7, 30.7, 38.8, 33.9, 38.3, 45.8, 68.3, 12.8, 66.0, 37.7,
              7.5, 11.0, 0.4}},
  };
  return table;
}

PrevalenceTable to_prevalence(const FormulaProfile& profile, const CalibrationColumn& column) {
  PrevalenceTable out;
  std::size_t k = 0;
  out["female"] = column.percents[k++] / 100.0;
  for (int b = 0; b < profile.band_count(); ++b) {
    out[profile.component_labels[b]] = column.percents[k++] / 100.0;
  }
  for (const auto& c : profile.condition_labels) out[c] = column.percents[k++] / 100.0;
  return out;
}

double lognormal_shift(double sigma) { return std::exp(0.5 * sigma * sigma); }

double lognormal_sd(double sigma) {
  const double s2 = sigma * sigma;
  return std::sqrt((std::exp(s2) - 1.0) * std::exp(s2));
}

}  // namespace

GeneratorSpec GeneratorSpec::calibrated(const FormulaProfile& profile, std::vector<int> years,
                                        int n_persons, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.profile = profile;
  spec.years = std::move(years);
  spec.n_persons = n_persons;
  spec.seed = seed;

  const std::vector<CalibrationColumn>* table = nullptr;
  if (profile.name == "marketplaces") table = &marketplaces_table();
  if (profile.name == "medicare") table = &medicare_table();

  if (table != nullptr) {
    spec.prevalence = to_prevalence(profile, table->front());
    for (int y : spec.years) {
      const int table_year = profile.spend_year_for(y);
      for (const auto& column : *table) {
        if (column.year == table_year) spec.prevalence_by_year[y] = to_prevalence(profile, column);
      }
    }
  } else {
    for (int b = 0; b < profile.band_count(); ++b) {
      spec.prevalence[profile.component_labels[b]] = 1.0 / profile.band_count();
    }
    spec.prevalence["female"] = 0.5;
    for (const auto& c : profile.condition_labels) spec.prevalence[c] = 0.1;
  }

  // Per-condition main effects in dollars; only their linear part matters to
  // the audit, since the formula's HCC columns capture them exactly.
  static const std::map<std::string, double> kEffects{
      {"arthritis", 6000}, {"asthma", 3000},       {"cancer", 8000},  {"diabetes", 4000},
      {"heart", 5000},     {"hypertension", 2000}, {"kidney", 9000},  {"lipid", 1500},
      {"mental", 3500},    {"nervous", 7000},      {"osteoporosis", 2500}, {"viral", 5000}};
  for (const auto& c : profile.condition_labels) {
    auto it = kEffects.find(c);
    spec.condition_effects[c] = it != kEffects.end() ? it->second : 3000.0;
  }
  spec.cell_effects.resize(static_cast<std::size_t>(profile.cell_count()));
  for (int cell = 0; cell < profile.cell_count(); ++cell) {
    const int band = cell / 2;
    const bool female = cell % 2 == 1;
    spec.cell_effects[static_cast<std::size_t>(cell)] = 400.0 * band + (female ? 300.0 : 0.0);
  }
  return spec;
}

const PrevalenceTable& GeneratorSpec::prevalence_for(int year) const {
  auto it = prevalence_by_year.find(year);
  return it != prevalence_by_year.end() ? it->second : prevalence;
}

double GeneratorSpec::prevalence_of(int year, int component) const {
  const auto& table = prevalence_for(year);
  auto it = table.find(profile.component_labels.at(static_cast<std::size_t>(component)));
  if (it == table.end()) {
    throw InvalidSpec("prevalence: missing entry for component '" +
                      profile.component_labels[static_cast<std::size_t>(component)] + "'");
  }
  return it->second;
}

void GeneratorSpec::validate() const {
  if (n_persons < 1) throw InvalidSpec("n_persons: must be >= 1");
  if (years.empty()) throw InvalidSpec("years: must not be empty");
  if (market_count < 1) throw InvalidSpec("market_count: must be >= 1");
  if (!market_effects.empty() && static_cast<int>(market_effects.size()) != market_count) {
    throw InvalidSpec("market_effects: expected " + std::to_string(market_count) + " entries");
  }
  if (!(market_spread >= 0.0)) throw InvalidSpec("market_spread: must be >= 0");
  if (!(noise_scale >= 0.0)) throw InvalidSpec("noise_scale: must be >= 0");
  if (!(lognormal_sigma > 0.0)) throw InvalidSpec("lognormal_sigma: must be > 0");
  if (!cell_effects.empty() && static_cast<int>(cell_effects.size()) != profile.cell_count()) {
    throw InvalidSpec("cell_effects: expected " + std::to_string(profile.cell_count()) +
                      " entries");
  }
  for (const auto& [label, _] : condition_effects) {
    bool known = false;
    for (const auto& c : profile.condition_labels) known = known || c == label;
    if (!known) throw InvalidSpec("condition_effects: unknown condition '" + label + "'");
  }
  if (!hcc_map.empty() && static_cast<int>(hcc_map.size()) != profile.hcc_count) {
    throw InvalidSpec("hcc_map: expected " + std::to_string(profile.hcc_count) + " entries");
  }
  if (hcc_map.empty() && profile.hcc_count > profile.condition_count()) {
    throw InvalidSpec("hcc_map: required when hcc_count exceeds the condition count");
  }
  for (int c : hcc_map) {
    if (c < 0 || c >= profile.condition_count()) {
      throw InvalidSpec("hcc_map: condition index " + std::to_string(c) + " out of range");
    }
  }
  for (const auto& planted : planted_interactions) {
    if (planted.signature.size() == 0) throw InvalidSpec("planted_interactions: empty signature");
    if (planted.signature.constraints().back().component >= profile.component_count()) {
      throw InvalidSpec("planted_interactions: component index out of range");
    }
  }
  std::vector<int> check_years = years;
  for (int y : check_years) {
    for (const auto& [label, p] : prevalence_for(y)) {
      profile.component_index(label);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidSpec("prevalence[" + label + "] for " + std::to_string(y) +
                          ": must be in [0, 1]");
      }
    }
    double age_total = 0.0;
    for (int c = 0; c < profile.component_count(); ++c) {
      const double p = prevalence_of(y, c);
      if (c < profile.band_count()) age_total += p;
    }
    if (std::abs(age_total - 1.0) > 0.005) {
      throw InvalidSpec("prevalence: age bands for " + std::to_string(y) + " sum to " +
                        std::to_string(age_total) + ", expected 1");
    }
  }
}

std::vector<double> resolved_market_effects(const GeneratorSpec& spec) {
  if (!spec.market_effects.empty()) return spec.market_effects;
  std::vector<double> effects(static_cast<std::size_t>(spec.market_count));
  for (int m = 0; m < spec.market_count; ++m) {
    rng::Stream stream(spec.seed, rng::Purpose::kMarketEffects, 0, static_cast<std::uint64_t>(m));
    effects[static_cast<std::size_t>(m)] =
        std::round((2.0 * stream.uniform() - 1.0) * spec.market_spread);
  }
  return effects;
}

PanelSet generate(const GeneratorSpec& spec, int threads) {
  spec.validate();
  const FormulaProfile& profile = spec.profile;
  const int s = profile.component_count();
  const auto market_effects = resolved_market_effects(spec);

  std::vector<int> hcc_map = spec.hcc_map;
  if (hcc_map.empty()) {
    hcc_map.resize(static_cast<std::size_t>(profile.hcc_count));
    std::iota(hcc_map.begin(), hcc_map.end(), 0);
  }
  std::vector<double> condition_effect(static_cast<std::size_t>(profile.condition_count()), 0.0);
  for (int c = 0; c < profile.condition_count(); ++c) {
    auto it = spec.condition_effects.find(profile.condition_labels[static_cast<std::size_t>(c)]);
    if (it != spec.condition_effects.end()) condition_effect[static_cast<std::size_t>(c)] = it->second;
  }

  const double ln_shift = lognormal_shift(spec.lognormal_sigma);
  const double ln_sd = lognormal_sd(spec.lognormal_sigma);

  PanelSet panels;
  for (int year : spec.years) {
    std::vector<double> probs(static_cast<std::size_t>(s));
    double age_total = 0.0;
    for (int c = 0; c < s; ++c) {
      probs[static_cast<std::size_t>(c)] = spec.prevalence_of(year, c);
      if (c < profile.band_count()) age_total += probs[static_cast<std::size_t>(c)];
    }
    for (int b = 0; b < profile.band_count(); ++b) probs[static_cast<std::size_t>(b)] /= age_total;

    Panel rows(static_cast<std::size_t>(spec.n_persons));
    constexpr std::size_t kChunk = 4096;
    const std::size_t n = rows.size();
    parallel_for((n + kChunk - 1) / kChunk, threads, [&](std::size_t chunk) {
      const std::size_t end = std::min(n, (chunk + 1) * kChunk);
      for (std::size_t i = chunk * kChunk; i < end; ++i) {
        rng::Stream stream(spec.seed, rng::Purpose::kPerson, year, i);
        PersonYear& row = rows[i];
        char id[32];
        std::snprintf(id, sizeof id, "%d-%08zu", year, i);
        row.person_id = id;
        row.feature_year = year;
        row.spend_year = profile.spend_year_for(year);

        Indicators comps(s);
        double u = stream.uniform();
        int band = profile.band_count() - 1;
        for (int b = 0; b < profile.band_count(); ++b) {
          if (u < probs[static_cast<std::size_t>(b)]) {
            band = b;
            break;
          }
          u -= probs[static_cast<std::size_t>(b)];
        }
        row.age_band = band;
        comps.set(band);
        row.sex = stream.bernoulli(probs[static_cast<std::size_t>(profile.female_component())])
                      ? Sex::kFemale
                      : Sex::kMale;
        comps.set(profile.female_component(), row.sex == Sex::kFemale);
        for (int c = profile.first_condition(); c < s; ++c) {
          comps.set(c, stream.bernoulli(probs[static_cast<std::size_t>(c)]));
        }
        row.components = comps;
        row.market = static_cast<int>(stream.below(static_cast<std::uint64_t>(spec.market_count)));

        Indicators hcc(profile.hcc_count);
        for (int j = 0; j < profile.hcc_count; ++j) {
          hcc.set(j, comps.test(profile.first_condition() + hcc_map[static_cast<std::size_t>(j)]));
        }
        row.hcc = hcc;

        double spend = spec.base_spend + market_effects[static_cast<std::size_t>(row.market)];
        if (!spec.cell_effects.empty()) {
          spend += spec.cell_effects[static_cast<std::size_t>(profile.cell_of(row))];
        }
        for (int c = 0; c < profile.condition_count(); ++c) {
          if (comps.test(profile.first_condition() + c)) {
            spend += condition_effect[static_cast<std::size_t>(c)];
          }
        }
        for (const auto& planted : spec.planted_interactions) {
          if (planted.signature.matches(comps)) spend += planted.extra_spend;
        }
        if (spec.noise_scale > 0.0) {
          const double z = stream.normal();
          if (spec.noise_family == NoiseFamily::kGaussian) {
            spend += spec.noise_scale * z;
          } else {
            spend += spec.noise_scale *
                     (std::exp(spec.lognormal_sigma * z) - ln_shift) / ln_sd;
          }
        }
        row.spend = std::max(0.0, std::round(spend * 100.0) / 100.0);
      }
    });
    panels.emplace(year, std::move(rows));
  }
  return panels;
}

std::vector<PrevalenceRow> prevalence_report(const Panel& panel, const FormulaProfile& profile) {
  if (panel.empty()) throw EmptyPanel("prevalence_report: panel has no rows");
  const int s = profile.component_count();
  std::map<int, std::pair<std::int64_t, std::vector<std::int64_t>>> by_year;
  for (const auto& row : panel) {
    auto& [rows, counts] = by_year[row.feature_year];
    if (counts.empty()) counts.assign(static_cast<std::size_t>(s), 0);
    ++rows;
    for (int c = 0; c < s; ++c) counts[static_cast<std::size_t>(c)] += row.components.test(c);
  }
  std::vector<PrevalenceRow> out;
  for (const auto& [year, entry] : by_year) {
    const auto& [rows, counts] = entry;
    for (int c = 0; c < s; ++c) {
      const auto count = counts[static_cast<std::size_t>(c)];
      out.push_back({year, c, count, rows, static_cast<double>(count) / static_cast<double>(rows)});
    }
  }
  return out;
}

}  // namespace gaudit
