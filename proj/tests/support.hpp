#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "gaudit/domain.hpp"
#include "gaudit/gforest.hpp"
#include "gaudit/synthgen.hpp"

namespace gaudit::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gaudit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline GroupSignature sig(std::initializer_list<Constraint> constraints) {
  return canonicalize(std::vector<Constraint>(constraints));
}

// Builds a valid row for `profile`; conditions listed by condition index.
inline PersonYear make_row(const FormulaProfile& profile, std::string id, int year, int band,
                           Sex sex, int market, std::vector<int> conditions, double spend) {
  PersonYear row;
  row.person_id = std::move(id);
  row.feature_year = year;
  row.spend_year = profile.spend_year_for(year);
  row.age_band = band;
  row.sex = sex;
  row.market = market;
  row.components = Indicators(profile.component_count());
  row.components.set(band);
  row.components.set(profile.female_component(), sex == Sex::kFemale);
  row.hcc = Indicators(profile.hcc_count);
  for (int c : conditions) {
    row.components.set(profile.first_condition() + c);
    if (c < profile.hcc_count) row.hcc.set(c);
  }
  row.spend = spend;
  return row;
}

// Random residual table with `s` independent components at prevalence
// `p` and residuals that carry a planted effect on components 0 and 1.
inline ResidualTable random_table(std::mt19937_64& gen, std::size_t n, int s, double p = 0.4) {
  std::bernoulli_distribution bit(p);
  std::normal_distribution<double> noise(0.0, 50.0);
  ResidualTable t;
  t.component_count = s;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int c = 0; c < s; ++c) {
      if (bit(gen)) bits |= std::uint64_t{1} << c;
    }
    double r = noise(gen);
    if ((bits & 3u) == 3u) r -= 400.0;
    if (s > 2 && ((bits >> 2) & 1u)) r += 90.0;
    t.components.push_back(bits);
    t.residuals.push_back(r);
  }
  return t;
}

inline std::vector<std::uint32_t> all_rows(std::size_t n) {
  std::vector<std::uint32_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
  return rows;
}

}  // namespace gaudit::testing
