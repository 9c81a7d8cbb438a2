#include "gaudit/domain.hpp"

#include <algorithm>
#include <charconv>

#include "gaudit/errors.hpp"

namespace gaudit {

Indicators::Indicators(int size, std::uint64_t bits) : bits_(bits), size_(size) {
  if (size < 0 || size > kMaxSize) {
    throw InvalidSpec("indicator vector length " + std::to_string(size) + " outside [0, 64]");
  }
  if (size < kMaxSize && (bits >> size) != 0) {
    throw InvalidSpec("indicator bits set beyond length " + std::to_string(size));
  }
}

namespace {

std::string component_label_for_band(std::string_view band) {
  std::string out = "age_";
  for (char c : band) {
    if (c == '-') {
      out += '_';
    } else if (c == '+') {
      out += "_plus";
    } else {
      out += c;
    }
  }
  return out;
}

const std::vector<std::string>& twelve_conditions() {
  static const std::vector<std::string> labels{
      "arthritis", "asthma", "cancer",  "diabetes", "heart",        "hypertension",
      "kidney",    "lipid",  "mental",  "nervous",  "osteoporosis", "viral"};
  return labels;
}

}  // namespace

FormulaProfile FormulaProfile::make(std::string name, std::vector<std::string> age_bands,
                                    std::vector<std::string> condition_labels, int hcc_count,
                                    bool prospective, std::string market_role) {
  FormulaProfile p;
  p.name = std::move(name);
  p.age_bands = std::move(age_bands);
  p.condition_labels = std::move(condition_labels);
  p.hcc_count = hcc_count;
  p.prospective = prospective;
  p.market_role = std::move(market_role);
  if (p.age_bands.empty()) throw ConfigError("profile.age_bands: must not be empty");
  if (hcc_count < 0 || hcc_count > Indicators::kMaxSize) {
    throw ConfigError("profile.hcc_count: must be in [0, 64]");
  }
  for (const auto& band : p.age_bands) p.component_labels.push_back(component_label_for_band(band));
  p.component_labels.emplace_back("female");
  for (const auto& c : p.condition_labels) p.component_labels.push_back(c);
  if (p.component_count() > Indicators::kMaxSize) {
    throw ConfigError("profile: at most 64 components are supported");
  }
  auto sorted = p.component_labels;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("profile: component labels must be unique");
  }
  return p;
}

FormulaProfile FormulaProfile::marketplaces() {
  return make("marketplaces", {"21-29", "30-39", "40-49", "50-59", "60-65"}, twelve_conditions(),
              12, false, "MSA");
}

FormulaProfile FormulaProfile::medicare() {
  return make("medicare", {"65-69", "70-79", "80-89", "90+"}, twelve_conditions(), 12, true,
              "county");
}

FormulaProfile FormulaProfile::by_name(std::string_view name) {
  if (name == "marketplaces") return marketplaces();
  if (name == "medicare") return medicare();
  throw ConfigError("profile: unknown profile '" + std::string(name) +
                    "' (expected marketplaces or medicare)");
}

int FormulaProfile::component_index(std::string_view label) const {
  auto it = std::find(component_labels.begin(), component_labels.end(), label);
  if (it == component_labels.end()) {
    throw ConfigError("unknown component label '" + std::string(label) + "' for profile " + name);
  }
  return static_cast<int>(it - component_labels.begin());
}

std::string FormulaProfile::cell_label(int cell) const {
  const int band = cell / 2;
  return std::string(cell % 2 == 0 ? "male_" : "female_") + age_bands.at(band);
}

void FormulaProfile::validate(const PersonYear& row) const {
  if (!(row.spend >= 0.0)) throw InvalidSpec("spend must be non-negative");
  if (row.spend_year != spend_year_for(row.feature_year)) {
    throw InvalidSpec(prospective ? "spend_year must equal feature_year + 1"
                                  : "spend_year must equal feature_year");
  }
  if (row.age_band < 0 || row.age_band >= band_count()) {
    throw InvalidSpec("age_band outside profile bands");
  }
  if (row.components.size() != component_count()) {
    throw InvalidSpec("component vector length differs from profile");
  }
  if (row.hcc.size() != hcc_count) throw InvalidSpec("hcc vector length differs from profile");
  for (int b = 0; b < band_count(); ++b) {
    if (row.components.test(b) != (b == row.age_band)) {
      throw InvalidSpec("age components disagree with age_band");
    }
  }
  if (row.components.test(female_component()) != (row.sex == Sex::kFemale)) {
    throw InvalidSpec("female component disagrees with sex");
  }
}

std::optional<bool> GroupSignature::constraint_on(int component) const noexcept {
  if (!constrains(component)) return std::nullopt;
  return ((value_ >> component) & 1u) != 0;
}

std::string GroupSignature::encode(std::span<const std::string> labels) const {
  std::string out;
  for (const auto& c : constraints_) {
    if (!out.empty()) out += '&';
    out += labels[static_cast<std::size_t>(c.component)];
    out += c.present ? ":+" : ":-";
  }
  return out;
}

GroupSignature GroupSignature::decode(std::string_view text,
                                      std::span<const std::string> labels) {
  std::vector<Constraint> raw;
  while (!text.empty()) {
    const auto amp = text.find('&');
    const auto token = text.substr(0, amp);
    text = amp == std::string_view::npos ? std::string_view{} : text.substr(amp + 1);
    if (token.size() < 3 || token[token.size() - 2] != ':' ||
        (token.back() != '+' && token.back() != '-')) {
      throw SchemaMismatch("malformed signature token '" + std::string(token) + "'");
    }
    const auto label = token.substr(0, token.size() - 2);
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      throw SchemaMismatch("unknown component '" + std::string(label) + "' in signature");
    }
    raw.push_back({static_cast<int>(it - labels.begin()), token.back() == '+'});
  }
  return canonicalize(raw);
}

GroupSignature canonicalize(std::span<const Constraint> raw) {
  if (raw.empty()) throw EmptyInput("a group signature needs at least one constraint");
  std::vector<Constraint> sorted(raw.begin(), raw.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  GroupSignature sig;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& c = sorted[i];
    if (c.component < 0 || c.component >= Indicators::kMaxSize) {
      throw InvalidSpec("constraint component index " + std::to_string(c.component) +
                        " out of range");
    }
    if (i > 0 && sorted[i - 1].component == c.component) {
      throw ConflictingConstraint("component " + std::to_string(c.component) +
                                  " required both present and absent");
    }
    sig.care_ |= std::uint64_t{1} << c.component;
    if (c.present) sig.value_ |= std::uint64_t{1} << c.component;
  }
  sig.constraints_ = std::move(sorted);
  return sig;
}

std::string ForestSetting::label() const {
  return "min" + std::to_string(min_node_size) + "_max" + std::to_string(max_leaf_nodes);
}

ForestSetting ForestSetting::parse(std::string_view text) {
  const auto x = text.find('x');
  ForestSetting s;
  auto parse_int = [&](std::string_view part, int& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc{} && p == part.data() + part.size();
  };
  if (x == std::string_view::npos || !parse_int(text.substr(0, x), s.min_node_size) ||
      !parse_int(text.substr(x + 1), s.max_leaf_nodes)) {
    throw ConfigError("setting: expected MINxMAX, got '" + std::string(text) + "'");
  }
  return s;
}

AuditConfig AuditConfig::with_setting(const ForestSetting& s) const {
  AuditConfig copy = *this;
  copy.min_node_size = s.min_node_size;
  copy.max_leaf_nodes = s.max_leaf_nodes;
  return copy;
}

void AuditConfig::validate() const {
  const int s = profile.component_count();
  if (n_trees < 1) throw ConfigError("forest.n_trees: must be >= 1");
  if (mtry < 1 || mtry > s) {
    throw ConfigError("forest.mtry: must be in [1, " + std::to_string(s) + "]");
  }
  if (min_node_size < 1) throw ConfigError("forest.min_node_size: must be >= 1");
  if (max_leaf_nodes < 2) throw ConfigError("forest.max_leaf_nodes: must be >= 2");
  if (!(tree_fraction_threshold > 0.0 && tree_fraction_threshold <= 1.0)) {
    throw ConfigError("forest.tree_fraction_threshold: must be in (0, 1]");
  }
  if (years.empty()) throw ConfigError("years: must not be empty");
  auto sorted = years;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("years: duplicates are not allowed");
  }
  if (sample_size < 1) throw ConfigError("sample_size: must be >= 1");
  if (top_k < 0) throw ConfigError("forest.top_k: must be >= 0");
}

std::vector<ForestSetting> AuditConfig::preset_grid() {
  return {{100, 8}, {100, 64}, {10000, 8}, {10000, 64}};
}

}  // namespace gaudit
