#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gaudit {

// Fixed-width set of binary indicators (at most 64).
class Indicators {
 public:
  static constexpr int kMaxSize = 64;

  Indicators() = default;
  explicit Indicators(int size, std::uint64_t bits = 0);

  int size() const noexcept { return size_; }
  std::uint64_t bits() const noexcept { return bits_; }
  bool test(int i) const noexcept { return (bits_ >> i) & 1u; }
  void set(int i, bool value = true) noexcept {
    if (value) {
      bits_ |= std::uint64_t{1} << i;
    } else {
      bits_ &= ~(std::uint64_t{1} << i);
    }
  }

  friend bool operator==(const Indicators&, const Indicators&) = default;

 private:
  std::uint64_t bits_ = 0;
  int size_ = 0;
};

enum class Sex : std::uint8_t { kMale = 0, kFemale = 1 };

// One enrollee-year of the claims panel.
struct PersonYear {
  std::string person_id;
  int feature_year = 0;
  int spend_year = 0;
  int age_band = 0;
  Sex sex = Sex::kMale;
  int market = 0;
  Indicators hcc;
  Indicators components;
  double spend = 0.0;

  friend bool operator==(const PersonYear&, const PersonYear&) = default;
};

using Panel = std::vector<PersonYear>;

// The regression specification being audited together with the group
// component layout. Components are always ordered as: one indicator per age
// band, the female indicator, then one indicator per chronic condition.
struct FormulaProfile {
  std::string name;  // marketplaces, medicare or custom
  std::vector<std::string> age_bands;
  std::vector<std::string> condition_labels;
  int hcc_count = 0;
  bool prospective = false;
  std::string market_role;
  std::vector<std::string> component_labels;

  static FormulaProfile make(std::string name, std::vector<std::string> age_bands,
                             std::vector<std::string> condition_labels, int hcc_count,
                             bool prospective, std::string market_role);
  static FormulaProfile marketplaces();
  static FormulaProfile medicare();
  static FormulaProfile by_name(std::string_view name);

  int band_count() const noexcept { return static_cast<int>(age_bands.size()); }
  int cell_count() const noexcept { return 2 * band_count(); }
  int component_count() const noexcept { return static_cast<int>(component_labels.size()); }
  int female_component() const noexcept { return band_count(); }
  int first_condition() const noexcept { return band_count() + 1; }
  int condition_count() const noexcept { return static_cast<int>(condition_labels.size()); }

  // Index of a component label; throws ConfigError when unknown.
  int component_index(std::string_view label) const;

  // Age×Sex cell index: band * 2 + sex.
  int cell_of(const PersonYear& row) const noexcept {
    return row.age_band * 2 + static_cast<int>(row.sex);
  }
  std::string cell_label(int cell) const;

  int spend_year_for(int feature_year) const noexcept {
    return prospective ? feature_year + 1 : feature_year;
  }

  // Throws InvalidSpec when a row violates the PersonYear invariants under
  // this profile.
  void validate(const PersonYear& row) const;
};

struct Constraint {
  int component = 0;
  bool present = false;

  friend auto operator<=>(const Constraint&, const Constraint&) = default;
};

// Canonical conjunction of component constraints read off a tree path.
class GroupSignature {
 public:
  GroupSignature() = default;

  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }
  std::size_t size() const noexcept { return constraints_.size(); }

  std::uint64_t care_mask() const noexcept { return care_; }
  std::uint64_t value_mask() const noexcept { return value_; }
  bool matches(const Indicators& components) const noexcept {
    return (components.bits() & care_) == value_;
  }
  bool constrains(int component) const noexcept { return (care_ >> component) & 1u; }
  std::optional<bool> constraint_on(int component) const noexcept;

  // `label:+` / `label:-` tokens joined by '&'.
  std::string encode(std::span<const std::string> labels) const;
  static GroupSignature decode(std::string_view text, std::span<const std::string> labels);

  friend bool operator==(const GroupSignature& a, const GroupSignature& b) {
    return a.constraints_ == b.constraints_;
  }
  friend std::strong_ordering operator<=>(const GroupSignature& a, const GroupSignature& b) {
    return a.constraints_ <=> b.constraints_;
  }

 private:
  friend GroupSignature canonicalize(std::span<const Constraint> raw);

  std::vector<Constraint> constraints_;
  std::uint64_t care_ = 0;
  std::uint64_t value_ = 0;
};

// Sorts and deduplicates; throws ConflictingConstraint when a component is
// both required present and absent, EmptyInput when `raw` is empty.
GroupSignature canonicalize(std::span<const Constraint> raw);

struct GroupSignatureHash {
  std::size_t operator()(const GroupSignature& s) const noexcept {
    return static_cast<std::size_t>(s.care_mask() * 0x9E3779B97F4A7C15ull ^ s.value_mask());
  }
};

struct YearStats {
  int tree_count = 0;
  double tree_fraction = 0.0;
  double mean_predicted_residual = 0.0;
  double observed_mean_residual = 0.0;
  std::int64_t member_count = 0;
  bool observed = false;  // observed fields filled

  friend bool operator==(const YearStats&, const YearStats&) = default;
};

struct GroupStats {
  GroupSignature signature;
  std::map<int, YearStats> per_year;
  double overall_mean_predicted_residual = 0.0;

  friend bool operator==(const GroupStats&, const GroupStats&) = default;
};

struct ForestSetting {
  int min_node_size = 100;
  int max_leaf_nodes = 8;

  std::string label() const;  // e.g. "min100_max8"
  // Parses "100x8".
  static ForestSetting parse(std::string_view text);
  friend bool operator==(const ForestSetting&, const ForestSetting&) = default;
};

struct AuditConfig {
  FormulaProfile profile = FormulaProfile::marketplaces();
  int n_trees = 1000;
  int mtry = 10;
  int min_node_size = 100;
  int max_leaf_nodes = 8;
  double tree_fraction_threshold = 0.01;
  std::vector<int> years{2016, 2017, 2018};
  int sample_size = 1'000'000;
  std::uint64_t master_seed = 20210601;
  int top_k = 10;

  ForestSetting setting() const { return {min_node_size, max_leaf_nodes}; }
  AuditConfig with_setting(const ForestSetting& s) const;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // {100, 10000} minimum node sizes × {8, 64} terminal-node budgets.
  static std::vector<ForestSetting> preset_grid();
};

}  // namespace gaudit
