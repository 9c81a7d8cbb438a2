#include "gaudit/pipeline.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "gaudit/aggregate.hpp"
#include "gaudit/errors.hpp"
#include "gaudit/gforest.hpp"
#include "gaudit/ingest.hpp"
#include "gaudit/report.hpp"
#include "gaudit/riskfit.hpp"

namespace gaudit {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Field-path aware accessors so config errors name the offending key.
class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(std::string_view field, std::string_view detail) const {
    throw ConfigError(source_ + ": " + std::string(field) + ": " + std::string(detail));
  }

  void only_keys(const json& obj, std::string_view where, std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) fail(where.empty() ? "<root>" : where, "expected an object");
    for (const auto& [key, _] : obj.items()) {
      bool ok = false;
      for (const char* k : keys) ok = ok || key == k;
      if (!ok) fail(join(where, key), "unknown key");
    }
  }

  template <typename T>
  void get(const json& obj, std::string_view where, const char* key, T& out) const {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) fail(join(where, key), "expected a non-negative integer");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) fail(join(where, key), "expected an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) fail(join(where, key), "expected a number");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      fail(join(where, key), e.what());
    }
  }

  static std::string join(std::string_view where, std::string_view key) {
    return where.empty() ? std::string(key) : std::string(where) + "." + std::string(key);
  }

 private:
  std::string source_;
};

FormulaProfile parse_profile(const ConfigReader& cr, const json& node) {
  if (node.is_string()) return FormulaProfile::by_name(node.get<std::string>());
  cr.only_keys(node, "profile",
               {"name", "age_bands", "conditions", "hcc_count", "prospective", "market_role"});
  std::string name = "custom";
  std::vector<std::string> bands;
  std::vector<std::string> conditions;
  int hcc_count = -1;
  bool prospective = false;
  std::string market_role = "MSA";
  cr.get(node, "profile", "name", name);
  cr.get(node, "profile", "age_bands", bands);
  cr.get(node, "profile", "conditions", conditions);
  cr.get(node, "profile", "hcc_count", hcc_count);
  cr.get(node, "profile", "prospective", prospective);
  cr.get(node, "profile", "market_role", market_role);
  if (hcc_count < 0) hcc_count = static_cast<int>(conditions.size());
  try {
    return FormulaProfile::make(name, bands, conditions, hcc_count, prospective, market_role);
  } catch (const ConfigError& e) {
    cr.fail("profile", e.what());
  }
}

void parse_generator(const ConfigReader& cr, const json& node, GeneratorSpec& gen) {
  const std::string_view where = "generator";
  cr.only_keys(node, where,
               {"market_count", "market_spread", "market_effects", "base_spend", "cell_effects",
                "condition_effects", "prevalence", "prevalence_by_year", "noise", "planted",
                "hcc_map"});
  cr.get(node, where, "market_count", gen.market_count);
  cr.get(node, where, "market_spread", gen.market_spread);
  cr.get(node, where, "market_effects", gen.market_effects);
  cr.get(node, where, "base_spend", gen.base_spend);
  cr.get(node, where, "cell_effects", gen.cell_effects);
  cr.get(node, where, "hcc_map", gen.hcc_map);
  if (auto it = node.find("condition_effects"); it != node.end()) {
    std::map<std::string, double> effects;
    cr.get(node, where, "condition_effects", effects);
    for (const auto& [k, v] : effects) gen.condition_effects[k] = v;
  }
  if (auto it = node.find("prevalence"); it != node.end()) {
    PrevalenceTable table;
    cr.get(node, where, "prevalence", table);
    // Explicit prevalences override the calibrated table in every year.
    for (const auto& [k, v] : table) {
      gen.prevalence[k] = v;
      for (auto& [_, by_year] : gen.prevalence_by_year) by_year[k] = v;
    }
  }
  if (auto it = node.find("prevalence_by_year"); it != node.end()) {
    if (!it->is_object()) cr.fail("generator.prevalence_by_year", "expected an object");
    for (const auto& [year_text, table_node] : it->items()) {
      int year = 0;
      try {
        year = std::stoi(year_text);
      } catch (...) {
        cr.fail("generator.prevalence_by_year." + year_text, "key must be a year");
      }
      PrevalenceTable table;
      try {
        table = table_node.get<PrevalenceTable>();
      } catch (const json::exception& e) {
        cr.fail("generator.prevalence_by_year." + year_text, e.what());
      }
      auto& target = gen.prevalence_by_year[year];
      if (target.empty()) target = gen.prevalence;
      for (const auto& [k, v] : table) target[k] = v;
    }
  }
  if (auto it = node.find("noise"); it != node.end()) {
    cr.only_keys(*it, "generator.noise", {"family", "scale", "sigma"});
    std::string family = "lognormal";
    cr.get(*it, "generator.noise", "family", family);
    if (family == "lognormal") {
      gen.noise_family = NoiseFamily::kLognormal;
    } else if (family == "gaussian") {
      gen.noise_family = NoiseFamily::kGaussian;
    } else {
      cr.fail("generator.noise.family", "expected gaussian or lognormal");
    }
    cr.get(*it, "generator.noise", "scale", gen.noise_scale);
    cr.get(*it, "generator.noise", "sigma", gen.lognormal_sigma);
  }
  if (auto it = node.find("planted"); it != node.end()) {
    if (!it->is_array()) cr.fail("generator.planted", "expected an array");
    gen.planted_interactions.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto field = "generator.planted[" + std::to_string(i) + "]";
      const json& p = (*it)[i];
      cr.only_keys(p, field, {"signature", "extra_spend"});
      std::string sig;
      PlantedInteraction planted;
      cr.get(p, field, "signature", sig);
      cr.get(p, field, "extra_spend", planted.extra_spend);
      try {
        planted.signature = GroupSignature::decode(sig, gen.profile.component_labels);
      } catch (const Error& e) {
        cr.fail(field + ".signature", e.what());
      }
      gen.planted_interactions.push_back(std::move(planted));
    }
  }
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  long long ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

fs::path panel_path(const fs::path& dir, int year) {
  return dir / ("panel_" + std::to_string(year) + ".csv");
}
fs::path residuals_path(const fs::path& dir, int year) {
  return dir / ("residuals_" + std::to_string(year) + ".csv");
}

PanelSet load_panels(const PipelineConfig& cfg, const fs::path& dir) {
  PanelSet panels;
  for (int y : cfg.audit.years) panels.emplace(y, read_panel(panel_path(dir, y), cfg.audit.profile));
  return panels;
}

FitsByYear load_fits(const PipelineConfig& cfg, const fs::path& dir, const PanelSet& panels) {
  FitsByYear fits;
  for (int y : cfg.audit.years) {
    auto fit = read_residuals(residuals_path(dir, y), y);
    const auto& panel = panels.at(y);
    if (fit.residuals.size() != panel.size()) {
      throw Misalignment(residuals_path(dir, y).string() + ": " +
                         std::to_string(fit.residuals.size()) + " rows, panel has " +
                         std::to_string(panel.size()));
    }
    for (std::size_t i = 0; i < panel.size(); ++i) {
      if (fit.person_ids[i] != panel[i].person_id) {
        throw Misalignment(residuals_path(dir, y).string() + ": row " + std::to_string(i + 2) +
                           " is person " + fit.person_ids[i] + ", panel has " +
                           panel[i].person_id);
      }
    }
    fits.emplace(y, std::move(fit));
  }
  return fits;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path PipelineConfig::run_dir() const {
  return out_root / ("run-" + fnv1a_hex(canonical_json).substr(0, 12) + "-seed" +
                     std::to_string(audit.master_seed));
}

PipelineConfig parse_config(std::string_view json_text, std::string_view source,
                            const RunOverrides& overrides) {
  const ConfigReader cr{std::string(source)};
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  cr.only_keys(root, "",
               {"profile", "years", "sample_size", "seed", "out_dir", "forest", "generator"});

  // Overrides are written into the document so the canonical form (and the
  // run directory) reflects what actually runs.
  if (overrides.seed) root["seed"] = *overrides.seed;
  if (overrides.profile) root["profile"] = *overrides.profile;

  PipelineConfig cfg;
  AuditConfig& audit = cfg.audit;
  if (auto it = root.find("profile"); it != root.end()) audit.profile = parse_profile(cr, *it);
  if (audit.profile.prospective && root.find("years") == root.end()) {
    audit.years = {2015, 2016, 2017};
  }
  cr.get(root, "", "years", audit.years);
  cr.get(root, "", "sample_size", audit.sample_size);
  cr.get(root, "", "seed", audit.master_seed);
  std::string out_dir = "runs";
  cr.get(root, "", "out_dir", out_dir);
  cfg.out_root = overrides.out ? *overrides.out : fs::path(out_dir);

  cfg.settings = AuditConfig::preset_grid();
  if (auto it = root.find("forest"); it != root.end()) {
    cr.only_keys(*it, "forest",
                 {"n_trees", "mtry", "tree_fraction_threshold", "top_k", "settings", "dump_forest"});
    cr.get(*it, "forest", "n_trees", audit.n_trees);
    cr.get(*it, "forest", "mtry", audit.mtry);
    cr.get(*it, "forest", "tree_fraction_threshold", audit.tree_fraction_threshold);
    cr.get(*it, "forest", "top_k", audit.top_k);
    cr.get(*it, "forest", "dump_forest", cfg.dump_forest);
    if (auto s = it->find("settings"); s != it->end()) {
      std::vector<std::string> texts;
      cr.get(*it, "forest", "settings", texts);
      cfg.settings.clear();
      for (const auto& t : texts) {
        try {
          cfg.settings.push_back(ForestSetting::parse(t));
        } catch (const ConfigError& e) {
          cr.fail("forest.settings", e.what());
        }
      }
    }
  }
  if (cfg.settings.empty()) cr.fail("forest.settings", "must not be empty");
  if (overrides.setting) cfg.settings = {*overrides.setting};
  audit.min_node_size = cfg.settings.front().min_node_size;
  audit.max_leaf_nodes = cfg.settings.front().max_leaf_nodes;
  try {
    audit.validate();
    for (const auto& s : cfg.settings) audit.with_setting(s).validate();
  } catch (const ConfigError& e) {
    cr.fail("config", e.what());
  }

  cfg.generator = GeneratorSpec::calibrated(audit.profile, audit.years, audit.sample_size,
                                            audit.master_seed);
  if (auto it = root.find("generator"); it != root.end()) parse_generator(cr, *it, cfg.generator);
  try {
    cfg.generator.validate();
  } catch (const InvalidSpec& e) {
    cr.fail("generator", e.what());
  }

  json canonical = root;
  canonical.erase("out_dir");
  cfg.canonical_json = canonical.dump();
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const RunOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), overrides);
}

Pipeline::Pipeline(PipelineConfig config, int threads, std::ostream& log)
    : config_(std::move(config)), threads_(std::max(1, threads)), log_(log) {}

void Pipeline::synth() {
  Stopwatch sw;
  const auto dir = run_dir();
  fs::create_directories(dir);
  csv::write_file(dir / "config.json", config_.canonical_json + "\n");
  const auto panels = generate(config_.generator, threads_);
  Panel all_rows;
  for (const auto& [year, panel] : panels) {
    write_panel(panel, panel_path(dir, year), config_.audit.profile);
    log_ << "stage=synth year=" << year << " rows=" << panel.size() << "\n";
    all_rows.insert(all_rows.end(), panel.begin(), panel.end());
  }
  write_prevalence(prevalence_report(all_rows, config_.audit.profile), config_.audit.profile,
                   dir / "prevalence.csv");
  log_ << "stage=synth years=" << panels.size() << " dir=" << dir.string() << " ms=" << sw.ms()
       << "\n";
}

void Pipeline::fit() {
  Stopwatch sw;
  const auto dir = run_dir();
  const auto design = DesignSpec::for_profile(config_.audit.profile);
  for (int y : config_.audit.years) {
    const auto panel = read_panel(panel_path(dir, y), config_.audit.profile);
    const auto result = gaudit::fit(panel, design, threads_);
    write_residuals(result, residuals_path(dir, y));
    write_fit(result, dir / ("fit_" + std::to_string(y) + ".csv"));
    log_ << "stage=fit year=" << y << " rows=" << panel.size()
         << " retained=" << result.retained_columns.size()
         << " dropped=" << result.dropped_columns.size() << " markets=" << result.market_count
         << " singleton_markets=" << result.singleton_markets
         << " r2=" << csv::fixed(result.r_squared, 4) << "\n";
  }
  log_ << "stage=fit ms=" << sw.ms() << "\n";
}

void Pipeline::audit() {
  Stopwatch sw;
  const auto dir = run_dir();
  const auto& profile = config_.audit.profile;
  const auto& years = config_.audit.years;
  const PanelSet panels = load_panels(config_, dir);
  const FitsByYear fits = load_fits(config_, dir, panels);
  std::map<int, ResidualTable> tables;
  for (int y : years) {
    tables.emplace(y, ResidualTable::from(panels.at(y), fits.at(y), profile.component_count()));
  }

  for (const auto& setting : config_.settings) {
    Stopwatch ssw;
    const AuditConfig cfg = config_.audit.with_setting(setting);
    cfg.validate();
    const auto sdir = dir / setting.label();
    fs::create_directories(sdir);

    ForestsByYear forests;
    for (int y : years) {
      auto forest = grow_forest(tables.at(y), cfg, y, threads_);
      double leaves = 0.0;
      for (const auto& t : forest) leaves += static_cast<double>(t.leaves.size());
      if (config_.dump_forest) {
        write_forest(forest, profile.component_labels, sdir / ("forest_" + std::to_string(y) + ".csv"));
      }
      log_ << "stage=audit setting=" << setting.label() << " year=" << y
           << " trees=" << forest.size()
           << " mean_leaves=" << csv::fixed(leaves / static_cast<double>(forest.size()), 2) << "\n";
      forests.emplace(y, std::move(forest));
    }

    const StatsMap stats = collect(forests, cfg.n_trees, years);
    const StatsMap filtered =
        observed_residuals(persistence_filter(stats, cfg.tree_fraction_threshold, years), panels, fits);
    const RankedGroups top = rank(filtered, cfg.top_k);
    write_groups(group_rows(stats), years, profile.component_labels, sdir / "groups_all.csv");
    write_groups(group_rows(filtered), years, profile.component_labels, sdir / "groups_filtered.csv");
    write_groups(group_rows(top), years, profile.component_labels, sdir / "groups_top.csv");

    for (int y : years) {
      const std::vector<int> one{y};
      const StatsMap year_stats = observed_residuals(
          persistence_filter_year(stats, cfg.tree_fraction_threshold, y), panels, fits);
      write_groups(group_rows(rank(year_stats, cfg.top_k)), one, profile.component_labels,
                   sdir / ("groups_top_" + std::to_string(y) + ".csv"));
    }
    log_ << "stage=audit setting=" << setting.label() << " groups=" << stats.size()
         << " filtered=" << filtered.size() << " under=" << top.under.size()
         << " over=" << top.over.size() << " ms=" << ssw.ms() << "\n";
  }
  log_ << "stage=audit settings=" << config_.settings.size() << " ms=" << sw.ms() << "\n";
}

void Pipeline::report() {
  Stopwatch sw;
  const auto dir = run_dir();
  const auto& profile = config_.audit.profile;
  const PanelSet panels = load_panels(config_, dir);
  const FitsByYear fits = load_fits(config_, dir, panels);

  Panel all_rows;
  std::vector<ConditionResidualRow> residual_rows;
  for (const auto& [year, panel] : panels) {
    all_rows.insert(all_rows.end(), panel.begin(), panel.end());
    const auto rows = residual_by_condition(fits.at(year), panel, profile);
    residual_rows.insert(residual_rows.end(), rows.begin(), rows.end());
  }
  const auto prevalence = prevalence_report(all_rows, profile);
  csv::write_file(dir / "table_prevalence.txt", report::prevalence_table_text(prevalence, profile));
  csv::write_file(dir / "table_prevalence.csv", report::prevalence_table_csv(prevalence, profile));
  csv::write_file(dir / "table_residuals.txt", report::residual_table_text(residual_rows, profile));
  csv::write_file(dir / "table_residuals.csv", report::residual_table_csv(residual_rows, profile));

  for (const auto& setting : config_.settings) {
    const auto sdir = dir / setting.label();
    const auto rows = read_groups(sdir / "groups_top.csv", profile.component_labels);
    RankedGroups top;
    std::vector<GroupStats> all_groups;
    for (const auto& row : rows) {
      (row.section == GroupSection::kOver ? top.over : top.under).push_back(row.stats);
      all_groups.push_back(row.stats);
    }
    if (all_groups.empty()) {
      log_ << "stage=report setting=" << setting.label() << " groups=0 figures=skipped\n";
      continue;
    }
    const std::string suffix = " (minimum node size: " + report::format_dollars(setting.min_node_size) +
                               ", maximum nodes: " + std::to_string(setting.max_leaf_nodes) + ")";
    report::dot_plot(top, profile.component_labels, sdir / "dotplot.svg",
                     "Top under- and overcompensated groups" + suffix);
    report::scatter_obs_vs_pred(all_groups, sdir / "obs_vs_pred.svg",
                                "Observed vs predicted residuals" + suffix);
    log_ << "stage=report setting=" << setting.label() << " under=" << top.under.size()
         << " over=" << top.over.size() << "\n";
  }
  log_ << "stage=report ms=" << sw.ms() << "\n";
}

void Pipeline::all() {
  synth();
  fit();
  audit();
  report();
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audit a risk-adjustment formula for persistently under- and overcompensated groups",
               "group-audit"};
  std::string subcommand;
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string setting;
  std::string profile;
  std::string out_dir;
  app.add_option("subcommand", subcommand, "synth | fit | audit | report | all")->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  auto* seed_opt = app.add_option("--seed", seed, "master seed for every stage");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);
  auto* setting_opt = app.add_option("--setting", setting, "run one MINxMAX setting, e.g. 100x8");
  auto* profile_opt =
      app.add_option("--profile", profile, "formula profile")->check(CLI::IsMember({"marketplaces", "medicare"}));
  auto* out_opt = app.add_option("--out", out_dir, "output root directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }
  static const std::set<std::string> kStages{"synth", "fit", "audit", "report", "all"};
  if (!kStages.count(subcommand)) {
    err << "group-audit: unknown subcommand '" << subcommand << "'\n" << app.help();
    return 2;
  }

  try {
    RunOverrides overrides;
    if (*seed_opt) overrides.seed = seed;
    if (*setting_opt) overrides.setting = ForestSetting::parse(setting);
    if (*profile_opt) overrides.profile = profile;
    if (*out_opt) overrides.out = out_dir;
    Pipeline pipeline(load_config(config_path, overrides), threads, err);
    if (subcommand == "synth") pipeline.synth();
    if (subcommand == "fit") pipeline.fit();
    if (subcommand == "audit") pipeline.audit();
    if (subcommand == "report") pipeline.report();
    if (subcommand == "all") pipeline.all();
    out << pipeline.run_dir().string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "group-audit: error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kConfig:
        return 2;
      case ErrorKind::kData:
        return 3;
      case ErrorKind::kInternal:
        return 1;
    }
    return 1;
  } catch (const std::exception& e) {
    err << "group-audit: internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gaudit
