#include "gaudit/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gaudit/errors.hpp"

namespace gaudit {

namespace csv {

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string join(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += quote(fields[i]);
  }
  return out;
}

std::string fixed(double value, int digits) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, digits);
  if (ec != std::errc{}) throw Error(ErrorKind::kInternal, "cannot format number");
  std::string out(buf, end);
  if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

Reader::Reader(std::string text, std::string source)
    : text_(std::move(text)), source_(std::move(source)) {}

bool Reader::next(std::vector<std::string>& fields) {
  fields.clear();
  if (pos_ >= text_.size()) return false;
  record_line_ = current_line_;
  std::string field;
  bool quoted = false;
  while (pos_ < text_.size()) {
    const char c = text_[pos_++];
    if (quoted) {
      if (c == '"') {
        if (pos_ < text_.size() && text_[pos_] == '"') {
          field += '"';
          ++pos_;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++current_line_;
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r' && pos_ < text_.size() && text_[pos_] == '\n') {
      // CRLF: the LF ends the record.
    } else if (c == '\n') {
      ++current_line_;
      fields.push_back(std::move(field));
      return true;
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw RowError(source_, record_line_, "<record>", "unterminated quoted field");
  }
  fields.push_back(std::move(field));
  return true;
}

Reader open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return Reader(std::move(buf).str(), path.string());
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.close();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace csv

namespace {

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    if (text.front() == '+') return false;
  }
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && p == text.data() + text.size();
}

class RowParser {
 public:
  RowParser(const csv::Reader& reader, const std::vector<std::string>& header,
            const std::vector<std::string>& fields)
      : reader_(reader), header_(header), fields_(fields) {}

  const std::string& text(std::size_t col) const { return fields_[col]; }

  template <typename T>
  T number(std::size_t col) const {
    T value{};
    if (!parse_number(std::string_view(fields_[col]), value)) {
      fail(col, "not a number: '" + fields_[col] + "'");
    }
    return value;
  }

  bool indicator(std::size_t col) const {
    const auto& f = fields_[col];
    if (f == "0") return false;
    if (f == "1") return true;
    fail(col, "indicator must be 0 or 1, got '" + f + "'");
  }

  [[noreturn]] void fail(std::size_t col, const std::string& detail) const {
    throw RowError(reader_.source(), reader_.line(), header_.at(col), detail);
  }

 private:
  const csv::Reader& reader_;
  const std::vector<std::string>& header_;
  const std::vector<std::string>& fields_;
};

std::vector<std::string> read_header(csv::Reader& reader) {
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaMismatch(reader.source() + ": missing header row");
  return header;
}

void expect_header(const csv::Reader& reader, const std::vector<std::string>& got,
                   const std::vector<std::string>& want) {
  if (got != want) {
    throw SchemaMismatch(reader.source() + ": header '" + csv::join(got) + "' does not match '" +
                         csv::join(want) + "'");
  }
}

bool blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && fields[0].empty();
}

const char* section_name(GroupSection s) {
  switch (s) {
    case GroupSection::kUnder:
      return "under";
    case GroupSection::kOver:
      return "over";
    case GroupSection::kNeutral:
      break;
  }
  return "neutral";
}

}  // namespace

std::vector<std::string> panel_header(const FormulaProfile& profile) {
  std::vector<std::string> h{"person_id", "feature_year", "spend_year", "age_band", "sex", "market"};
  for (int j = 0; j < profile.hcc_count; ++j) h.push_back("hcc_" + std::to_string(j));
  for (int c = 0; c < profile.component_count(); ++c) h.push_back("comp_" + std::to_string(c));
  h.emplace_back("spend");
  return h;
}

Panel read_panel(const std::filesystem::path& path, const FormulaProfile& profile) {
  auto reader = csv::open(path);
  const auto want = panel_header(profile);
  expect_header(reader, read_header(reader), want);

  const std::size_t hcc0 = 6;
  const std::size_t comp0 = hcc0 + static_cast<std::size_t>(profile.hcc_count);
  const std::size_t spend_col = comp0 + static_cast<std::size_t>(profile.component_count());

  Panel panel;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (blank(fields)) continue;
    RowParser p(reader, want, fields);
    if (fields.size() != want.size()) {
      throw RowError(reader.source(), reader.line(), "<record>",
                     "expected " + std::to_string(want.size()) + " fields, got " +
                         std::to_string(fields.size()));
    }
    PersonYear row;
    row.person_id = p.text(0);
    if (row.person_id.empty()) p.fail(0, "must not be empty");
    row.feature_year = p.number<int>(1);
    row.spend_year = p.number<int>(2);
    row.age_band = p.number<int>(3);
    const int sex = p.number<int>(4);
    if (sex != 0 && sex != 1) p.fail(4, "sex must be 0 or 1");
    row.sex = static_cast<Sex>(sex);
    row.market = p.number<int>(5);
    row.hcc = Indicators(profile.hcc_count);
    for (int j = 0; j < profile.hcc_count; ++j) row.hcc.set(j, p.indicator(hcc0 + static_cast<std::size_t>(j)));
    row.components = Indicators(profile.component_count());
    for (int c = 0; c < profile.component_count(); ++c) {
      row.components.set(c, p.indicator(comp0 + static_cast<std::size_t>(c)));
    }
    row.spend = p.number<double>(spend_col);
    if (!std::isfinite(row.spend) || row.spend < 0.0) p.fail(spend_col, "spend must be non-negative");
    try {
      profile.validate(row);
    } catch (const InvalidSpec& e) {
      throw RowError(reader.source(), reader.line(), "<row>", e.what());
    }
    panel.push_back(std::move(row));
  }
  return panel;
}

void write_panel(const Panel& panel, const std::filesystem::path& path,
                 const FormulaProfile& profile) {
  std::string out = csv::join(panel_header(profile));
  out += '\n';
  for (const auto& row : panel) {
    out += csv::quote(row.person_id);
    out += ',' + std::to_string(row.feature_year) + ',' + std::to_string(row.spend_year) + ',' +
           std::to_string(row.age_band) + ',' + std::to_string(static_cast<int>(row.sex)) + ',' +
           std::to_string(row.market);
    for (int j = 0; j < row.hcc.size(); ++j) out += row.hcc.test(j) ? ",1" : ",0";
    for (int c = 0; c < row.components.size(); ++c) out += row.components.test(c) ? ",1" : ",0";
    out += ',' + csv::fixed(row.spend, 2) + '\n';
  }
  csv::write_file(path, out);
}

void write_residuals(const FitResult& fit, const std::filesystem::path& path) {
  std::string out = "person_id,prediction,residual\n";
  for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
    out += csv::quote(fit.person_ids.at(i)) + ',' + csv::fixed(fit.predictions[i], 6) + ',' +
           csv::fixed(fit.residuals[i], 6) + '\n';
  }
  csv::write_file(path, out);
}

FitResult read_residuals(const std::filesystem::path& path, int year) {
  auto reader = csv::open(path);
  const std::vector<std::string> want{"person_id", "prediction", "residual"};
  expect_header(reader, read_header(reader), want);
  FitResult fit;
  fit.year = year;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (blank(fields)) continue;
    if (fields.size() != want.size()) {
      throw RowError(reader.source(), reader.line(), "<record>", "expected 3 fields");
    }
    RowParser p(reader, want, fields);
    fit.person_ids.push_back(p.text(0));
    fit.predictions.push_back(p.number<double>(1));
    fit.residuals.push_back(p.number<double>(2));
  }
  return fit;
}

void write_fit(const FitResult& fit, const std::filesystem::path& path) {
  std::string out = "column,beta,retained\n";
  std::vector<bool> retained(fit.column_names.size(), false);
  for (int c : fit.retained_columns) retained[static_cast<std::size_t>(c)] = true;
  for (std::size_t c = 0; c < fit.column_names.size(); ++c) {
    out += csv::quote(fit.column_names[c]) + ',' + csv::fixed(fit.beta.at(c), 6) + ',' +
           (retained[c] ? "1" : "0") + '\n';
  }
  csv::write_file(path, out);
}

void write_forest(std::span<const TreeRecord> forest, std::span<const std::string> labels,
                  const std::filesystem::path& path) {
  std::string out = "tree_index,leaf_id,signature,member_count,mean_residual\n";
  for (const auto& tree : forest) {
    for (const auto& leaf : tree.leaves) {
      out += std::to_string(tree.tree_index) + ',' + std::to_string(leaf.leaf_id) + ',' +
             csv::quote(leaf.signature.size() ? leaf.signature.encode(labels) : std::string{}) + ',' +
             std::to_string(leaf.member_count) + ',' + csv::fixed(leaf.mean_residual, 6) + '\n';
    }
  }
  csv::write_file(path, out);
}

std::vector<TreeRecord> read_forest(const std::filesystem::path& path,
                                    std::span<const std::string> labels) {
  auto reader = csv::open(path);
  const std::vector<std::string> want{"tree_index", "leaf_id", "signature", "member_count",
                                      "mean_residual"};
  expect_header(reader, read_header(reader), want);
  std::vector<TreeRecord> forest;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (blank(fields)) continue;
    if (fields.size() != want.size()) {
      throw RowError(reader.source(), reader.line(), "<record>", "expected 5 fields");
    }
    RowParser p(reader, want, fields);
    const int t = p.number<int>(0);
    if (forest.empty() || forest.back().tree_index != t) {
      forest.emplace_back();
      forest.back().tree_index = t;
    }
    LeafSummary leaf;
    leaf.leaf_id = p.number<int>(1);
    if (!fields[2].empty()) {
      try {
        leaf.signature = GroupSignature::decode(fields[2], labels);
      } catch (const Error& e) {
        p.fail(2, e.what());
      }
    }
    leaf.member_count = p.number<std::int64_t>(3);
    leaf.mean_residual = p.number<double>(4);
    forest.back().leaves.push_back(std::move(leaf));
  }
  return forest;
}

std::vector<GroupRow> group_rows(const StatsMap& stats) {
  std::vector<GroupRow> rows;
  int rank = 0;
  for (const auto& [_, g] : stats) {
    GroupRow row;
    row.rank = ++rank;
    row.section = g.overall_mean_predicted_residual < 0.0   ? GroupSection::kUnder
                  : g.overall_mean_predicted_residual > 0.0 ? GroupSection::kOver
                                                            : GroupSection::kNeutral;
    row.stats = g;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<GroupRow> group_rows(const RankedGroups& ranked) {
  std::vector<GroupRow> rows;
  for (std::size_t i = 0; i < ranked.under.size(); ++i) {
    rows.push_back({GroupSection::kUnder, static_cast<int>(i + 1), ranked.under[i]});
  }
  for (std::size_t i = 0; i < ranked.over.size(); ++i) {
    rows.push_back({GroupSection::kOver, static_cast<int>(i + 1), ranked.over[i]});
  }
  return rows;
}

void write_groups(std::span<const GroupRow> rows, std::span<const int> years,
                  std::span<const std::string> labels, const std::filesystem::path& path) {
  std::vector<std::string> header{"section", "rank", "signature", "n_constraints"};
  for (int y : years) {
    const auto ys = std::to_string(y);
    for (const char* f : {"tree_count_", "tree_fraction_", "predicted_", "observed_", "members_"}) {
      header.push_back(f + ys);
    }
  }
  header.emplace_back("overall_predicted");
  std::string out = csv::join(header) + '\n';
  for (const auto& row : rows) {
    const auto& g = row.stats;
    out += std::string(section_name(row.section)) + ',' + std::to_string(row.rank) + ',' +
           csv::quote(g.signature.encode(labels)) + ',' + std::to_string(g.signature.size());
    for (int y : years) {
      auto it = g.per_year.find(y);
      if (it == g.per_year.end()) {
        out += ",0,0.000000,,,";
        continue;
      }
      const auto& ys = it->second;
      out += ',' + std::to_string(ys.tree_count) + ',' + csv::fixed(ys.tree_fraction, 6) + ',' +
             csv::fixed(ys.mean_predicted_residual, 6) + ',' +
             (ys.observed ? csv::fixed(ys.observed_mean_residual, 6) : std::string{}) + ',' +
             (ys.observed ? std::to_string(ys.member_count) : std::string{});
    }
    out += ',' + csv::fixed(g.overall_mean_predicted_residual, 6) + '\n';
  }
  csv::write_file(path, out);
}

std::vector<GroupRow> read_groups(const std::filesystem::path& path,
                                  std::span<const std::string> labels) {
  auto reader = csv::open(path);
  const auto header = read_header(reader);
  if (header.size() < 5 || (header.size() - 5) % 5 != 0 || header[0] != "section" ||
      header[1] != "rank" || header[2] != "signature" || header[3] != "n_constraints" ||
      header.back() != "overall_predicted") {
    throw SchemaMismatch(reader.source() + ": not a group table header");
  }
  std::vector<int> years;
  for (std::size_t col = 4; col + 1 < header.size(); col += 5) {
    const std::string prefix = "tree_count_";
    if (header[col].rfind(prefix, 0) != 0) {
      throw SchemaMismatch(reader.source() + ": unexpected column '" + header[col] + "'");
    }
    int y = 0;
    if (!parse_number(std::string_view(header[col]).substr(prefix.size()), y)) {
      throw SchemaMismatch(reader.source() + ": bad year in column '" + header[col] + "'");
    }
    years.push_back(y);
  }

  std::vector<GroupRow> rows;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (blank(fields)) continue;
    if (fields.size() != header.size()) {
      throw RowError(reader.source(), reader.line(), "<record>", "wrong field count");
    }
    RowParser p(reader, header, fields);
    GroupRow row;
    if (fields[0] == "under") {
      row.section = GroupSection::kUnder;
    } else if (fields[0] == "over") {
      row.section = GroupSection::kOver;
    } else if (fields[0] == "neutral") {
      row.section = GroupSection::kNeutral;
    } else {
      p.fail(0, "unknown section '" + fields[0] + "'");
    }
    row.rank = p.number<int>(1);
    try {
      row.stats.signature = GroupSignature::decode(fields[2], labels);
    } catch (const Error& e) {
      p.fail(2, e.what());
    }
    for (std::size_t k = 0; k < years.size(); ++k) {
      const std::size_t col = 4 + 5 * k;
      YearStats ys;
      ys.tree_count = p.number<int>(col);
      if (ys.tree_count == 0 && fields[col + 3].empty() && fields[col + 2].empty()) continue;
      ys.tree_fraction = p.number<double>(col + 1);
      ys.mean_predicted_residual = p.number<double>(col + 2);
      if (!fields[col + 3].empty()) {
        ys.observed = true;
        ys.observed_mean_residual = p.number<double>(col + 3);
        ys.member_count = p.number<std::int64_t>(col + 4);
      }
      row.stats.per_year.emplace(years[k], ys);
    }
    row.stats.overall_mean_predicted_residual = p.number<double>(header.size() - 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_prevalence(std::span<const PrevalenceRow> rows, const FormulaProfile& profile,
                      const std::filesystem::path& path) {
  std::string out = "year,component,count,rows,prevalence\n";
  for (const auto& r : rows) {
    out += std::to_string(r.year) + ',' +
           csv::quote(profile.component_labels.at(static_cast<std::size_t>(r.component))) + ',' +
           std::to_string(r.count) + ',' + std::to_string(r.rows) + ',' + csv::fixed(r.fraction, 6) +
           '\n';
  }
  csv::write_file(path, out);
}

}  // namespace gaudit
