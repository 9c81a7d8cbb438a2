#include "gaudit/riskfit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <map>

#include "gaudit/errors.hpp"
#include "gaudit/parallel.hpp"

namespace gaudit {

namespace {

// Rows per cross-product chunk. Fixed so the reduction order, and therefore
// every bit of the result, is independent of the thread count.
constexpr std::size_t kChunkRows = 8192;

// Relative pivot below which a column is treated as a linear combination of
// the columns already retained.
constexpr double kCollinearTol = 1e-9;
constexpr double kRidgeJitter = 1e-10;

struct MarketIndex {
  std::vector<int> of_row;  // dense market index per row
  int count = 0;
};

MarketIndex index_markets(const Panel& panel) {
  std::map<int, int> dense;
  for (const auto& row : panel) dense.emplace(row.market, 0);
  int next = 0;
  for (auto& [_, idx] : dense) idx = next++;
  MarketIndex out;
  out.count = next;
  out.of_row.reserve(panel.size());
  for (const auto& row : panel) out.of_row.push_back(dense[row.market]);
  return out;
}

// Writes the dense design row for `row` into `x`.
inline void design_row(const PersonYear& row, const DesignSpec& design, double* x) {
  std::fill(x, x + design.column_count(), 0.0);
  x[row.age_band * 2 + static_cast<int>(row.sex)] = 1.0;
  for (int j = 0; j < design.hcc_count; ++j) {
    if (row.hcc.test(j)) x[design.cell_count + j] = 1.0;
  }
}

}  // namespace

DesignSpec DesignSpec::for_profile(const FormulaProfile& profile) {
  DesignSpec d;
  d.cell_count = profile.cell_count();
  d.hcc_count = profile.hcc_count;
  for (int c = 0; c < d.cell_count; ++c) d.column_names.push_back("cell_" + profile.cell_label(c));
  for (int j = 0; j < d.hcc_count; ++j) d.column_names.push_back("hcc_" + std::to_string(j));
  return d;
}

FitResult fit(const Panel& panel, const DesignSpec& design, int threads) {
  if (panel.empty()) throw EmptyPanel("fit: panel has no rows");
  for (const auto& row : panel) {
    if (row.feature_year != panel.front().feature_year ||
        row.spend_year != panel.front().spend_year) {
      throw YearMismatch("fit: panel mixes sample years " +
                         std::to_string(panel.front().feature_year) + " and " +
                         std::to_string(row.feature_year));
    }
    if (row.age_band < 0 || row.age_band * 2 + 1 >= design.cell_count ||
        row.hcc.size() != design.hcc_count) {
      throw Misalignment("fit: row " + row.person_id + " does not match the design");
    }
  }

  const int p = design.column_count();
  const std::size_t n = panel.size();
  const MarketIndex markets = index_markets(panel);

  // Market means of spend and every design column.
  Eigen::MatrixXd col_means = Eigen::MatrixXd::Zero(p, markets.count);
  Eigen::VectorXd y_means = Eigen::VectorXd::Zero(markets.count);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(markets.count);
  {
    Eigen::VectorXd x(p);
    for (std::size_t i = 0; i < n; ++i) {
      const int m = markets.of_row[i];
      design_row(panel[i], design, x.data());
      col_means.col(m) += x;
      y_means[m] += panel[i].spend;
      counts[m] += 1.0;
    }
  }
  int singletons = 0;
  for (int m = 0; m < markets.count; ++m) {
    col_means.col(m) /= counts[m];
    y_means[m] /= counts[m];
    if (counts[m] == 1.0) ++singletons;
  }

  // Demeaned cross products, accumulated per chunk and reduced in order.
  const std::size_t n_chunks = (n + kChunkRows - 1) / kChunkRows;
  std::vector<Eigen::MatrixXd> chunk_gram(n_chunks);
  std::vector<Eigen::VectorXd> chunk_xty(n_chunks);
  parallel_for(n_chunks, threads, [&](std::size_t c) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd x(p);
    const std::size_t end = std::min(n, (c + 1) * kChunkRows);
    for (std::size_t i = c * kChunkRows; i < end; ++i) {
      const int m = markets.of_row[i];
      design_row(panel[i], design, x.data());
      x -= col_means.col(m);
      const double y = panel[i].spend - y_means[m];
      gram.selfadjointView<Eigen::Upper>().rankUpdate(x);
      xty += y * x;
    }
    chunk_gram[c] = std::move(gram);
    chunk_xty[c] = std::move(xty);
  });
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    gram += chunk_gram[c];
    xty += chunk_xty[c];
  }
  gram.triangularView<Eigen::StrictlyLower>() = gram.transpose();

  // Left-to-right pivot scan: keep column j only if it adds a direction the
  // retained columns do not span.
  FitResult result;
  result.year = panel.front().feature_year;
  result.column_names = design.column_names;
  {
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(p, p);
    for (int j = 0; j < p; ++j) {
      const double diag = gram(j, j);
      if (!(diag > 0.0)) {
        result.dropped_columns.push_back(j);
        continue;
      }
      const int r = static_cast<int>(result.retained_columns.size());
      Eigen::VectorXd l(r);
      for (int k = 0; k < r; ++k) {
        double v = gram(j, result.retained_columns[static_cast<std::size_t>(k)]);
        for (int q = 0; q < k; ++q) v -= l[q] * chol(k, q);
        l[k] = v / chol(k, k);
      }
      const double pivot = diag - l.squaredNorm();
      if (pivot <= kCollinearTol * diag) {
        result.dropped_columns.push_back(j);
        continue;
      }
      chol.row(r).head(r) = l.transpose();
      chol(r, r) = std::sqrt(pivot);
      result.retained_columns.push_back(j);
    }
  }
  if (result.retained_columns.empty()) {
    throw DegenerateDesign("fit: no design column varies within markets for year " +
                           std::to_string(result.year));
  }

  const int r = static_cast<int>(result.retained_columns.size());
  Eigen::MatrixXd sub(r, r);
  Eigen::VectorXd rhs(r);
  for (int a = 0; a < r; ++a) {
    rhs[a] = xty[result.retained_columns[static_cast<std::size_t>(a)]];
    for (int b = 0; b < r; ++b) {
      sub(a, b) = gram(result.retained_columns[static_cast<std::size_t>(a)],
                       result.retained_columns[static_cast<std::size_t>(b)]);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) {
    const double jitter = kRidgeJitter * sub.diagonal().maxCoeff();
    sub.diagonal().array() += jitter;
    llt.compute(sub);
    result.jittered = true;
    if (llt.info() != Eigen::Success) {
      throw DegenerateDesign("fit: normal equations are not positive definite");
    }
  }
  const Eigen::VectorXd solved = llt.solve(rhs);
  result.beta.assign(static_cast<std::size_t>(p), 0.0);
  for (int a = 0; a < r; ++a) {
    result.beta[static_cast<std::size_t>(result.retained_columns[static_cast<std::size_t>(a)])] =
        solved[a];
  }

  Eigen::Map<const Eigen::VectorXd> beta(result.beta.data(), p);

  result.person_ids.reserve(n);
  result.predictions.resize(n);
  result.residuals.resize(n);
  double grand_mean = 0.0;
  for (const auto& row : panel) grand_mean += row.spend;
  grand_mean /= static_cast<double>(n);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  Eigen::VectorXd x(p);
  for (std::size_t i = 0; i < n; ++i) {
    const int m = markets.of_row[i];
    design_row(panel[i], design, x.data());
    // Market mean plus the within-market fit; a singleton market lands
    // exactly on its own spend.
    const double pred = y_means[m] + (x - col_means.col(m)).dot(beta);
    result.person_ids.push_back(panel[i].person_id);
    result.predictions[i] = pred;
    result.residuals[i] = pred - panel[i].spend;
    ss_res += result.residuals[i] * result.residuals[i];
    ss_tot += (panel[i].spend - grand_mean) * (panel[i].spend - grand_mean);
  }
  result.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  result.market_count = markets.count;
  result.singleton_markets = singletons;
  return result;
}

std::vector<ConditionResidualRow> residual_by_condition(const FitResult& fit, const Panel& panel,
                                                        const FormulaProfile& profile) {
  if (fit.residuals.size() != panel.size()) {
    throw Misalignment("residual_by_condition: fit has " + std::to_string(fit.residuals.size()) +
                       " rows, panel has " + std::to_string(panel.size()));
  }
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (!fit.person_ids.empty() && fit.person_ids[i] != panel[i].person_id) {
      throw Misalignment("residual_by_condition: row " + std::to_string(i + 1) +
                         " person_id differs between fit and panel");
    }
  }
  std::vector<ConditionResidualRow> out;
  for (int c = profile.first_condition(); c < profile.component_count(); ++c) {
    ConditionResidualRow row;
    row.year = fit.year;
    row.component = c;
    double sum_absent = 0.0;
    double sum_present = 0.0;
    for (std::size_t i = 0; i < panel.size(); ++i) {
      if (panel[i].components.test(c)) {
        sum_present += fit.residuals[i];
        ++row.n_present;
      } else {
        sum_absent += fit.residuals[i];
        ++row.n_absent;
      }
    }
    row.mean_absent = row.n_absent > 0 ? sum_absent / static_cast<double>(row.n_absent) : 0.0;
    row.mean_present = row.n_present > 0 ? sum_present / static_cast<double>(row.n_present) : 0.0;
    out.push_back(row);
  }
  return out;
}

}  // namespace gaudit
