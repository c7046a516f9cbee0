#include "twophase/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <unordered_map>

#include "twophase/error.hpp"

namespace twophase {

std::string_view column_kind_name(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::binary: return "binary";
    case ColumnKind::categorical: return "categorical";
  }
  return "unknown";
}

std::size_t Column::missing_count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), is_missing));
}

// ---------------------------------------------------------------------------
// Table

Table::Table(std::vector<Column> columns) : columns_(std::move(columns)) {
  std::set<std::string_view> seen;
  for (const auto& col : columns_) {
    if (!seen.insert(col.name).second) {
      throw Error(ErrorCode::InvalidTable, "duplicate column name " + col.name);
    }
  }
  rows_ = columns_.empty() ? 0 : columns_.front().size();
  for (const auto& col : columns_) {
    if (col.size() != rows_) {
      throw Error(ErrorCode::InvalidTable,
                  "column " + col.name + " has a different length");
    }
    for (std::size_t i = 0; i < col.values.size(); ++i) {
      const double v = col.values[i];
      if (is_missing(v)) continue;
      if (col.kind == ColumnKind::binary && v != 0.0 && v != 1.0) {
        throw Error(ErrorCode::InvalidTable,
                    "binary column " + col.name + " holds a non 0/1 value",
                    static_cast<std::int64_t>(i + 1));
      }
      if (col.kind == ColumnKind::categorical &&
          (v < 0 || v != std::floor(v) ||
           v >= static_cast<double>(col.levels.size()))) {
        throw Error(ErrorCode::InvalidTable,
                    "categorical column " + col.name + " holds an undeclared "
                    "level code",
                    static_cast<std::int64_t>(i + 1));
      }
    }
  }
}

const Column& Table::column(std::string_view name) const {
  if (auto idx = find(name)) return columns_[*idx];
  throw Error(ErrorCode::SchemaMismatch,
              "no column named " + std::string(name));
}

std::optional<std::size_t> Table::find(std::string_view name) const {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].name == name) return j;
  }
  return std::nullopt;
}

std::vector<std::string> Table::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

Table Table::select(std::span<const std::string> names) const {
  std::vector<Column> cols;
  cols.reserve(names.size());
  for (const auto& n : names) cols.push_back(column(n));
  return Table(std::move(cols));
}

Table Table::drop(std::span<const std::string> names) const {
  std::vector<Column> cols;
  for (const auto& c : columns_) {
    if (std::find(names.begin(), names.end(), c.name) == names.end()) {
      cols.push_back(c);
    }
  }
  return Table(std::move(cols));
}

Table Table::subset_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) {
    Column out{c.name, c.kind, {}, c.levels};
    out.values.reserve(rows.size());
    for (std::size_t r : rows) out.values.push_back(c.values.at(r));
    cols.push_back(std::move(out));
  }
  return Table(std::move(cols));
}

Table Table::with_column(Column column) const {
  std::vector<Column> cols = columns_;
  cols.push_back(std::move(column));
  return Table(std::move(cols));
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

bool is_missing_token(std::string_view s) { return s.empty() || s == "NA"; }

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::vector<std::vector<std::string>> read_records(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_csv(in);
}

Table build_table(const std::vector<std::vector<std::string>>& records,
                  const Schema& schema) {
  if (records.empty()) throw Error(ErrorCode::EmptyFile, "file is empty");
  const auto& header = records.front();
  if (records.size() < 2) {
    throw Error(ErrorCode::EmptyFile, "file has a header but no data rows");
  }

  std::unordered_map<std::string, std::size_t> header_pos;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name(trim(header[j]));
    if (!header_pos.emplace(name, j).second) {
      throw Error(ErrorCode::SchemaMismatch, "duplicate header column " + name);
    }
  }
  std::vector<std::string> missing, extra;
  std::set<std::string> schema_names;
  for (const auto& spec : schema) {
    schema_names.insert(spec.name);
    if (!header_pos.count(spec.name)) missing.push_back(spec.name);
  }
  for (const auto& [name, pos] : header_pos) {
    if (!schema_names.count(name)) extra.push_back(name);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "header does not match schema;";
    for (const auto& m : missing) msg += " missing " + m + ";";
    std::sort(extra.begin(), extra.end());
    for (const auto& e : extra) msg += " extra " + e + ";";
    throw Error(ErrorCode::SchemaMismatch, msg);
  }

  const std::size_t n = records.size() - 1;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(r) + " has " +
                      std::to_string(records[r].size()) + " fields, expected " +
                      std::to_string(header.size()),
                  static_cast<std::int64_t>(r));
    }
  }

  // Columns follow the file's header order.
  std::vector<const ColumnSpec*> ordered(header.size());
  for (const auto& spec : schema) ordered[header_pos.at(spec.name)] = &spec;

  std::vector<Column> cols;
  cols.reserve(header.size());
  for (std::size_t j = 0; j < header.size(); ++j) {
    const ColumnSpec& spec = *ordered[j];
    Column col{spec.name, spec.kind, {}, spec.levels};
    col.values.reserve(n);
    std::unordered_map<std::string, std::size_t> level_index;
    for (std::size_t l = 0; l < col.levels.size(); ++l) {
      level_index.emplace(col.levels[l], l);
    }
    const bool declared = !spec.levels.empty();

    for (std::size_t r = 1; r <= n; ++r) {
      const std::string_view raw = trim(records[r][j]);
      const auto row = static_cast<std::int64_t>(r);
      if (is_missing_token(raw)) {
        col.values.push_back(kMissing);
        continue;
      }
      auto location = [&] {
        return " at row " + std::to_string(r) + ", column " + spec.name;
      };
      switch (spec.kind) {
        case ColumnKind::continuous: {
          auto v = parse_number(raw);
          if (!v) {
            throw Error(ErrorCode::ParseError,
                        "non-numeric value '" + std::string(raw) + "'" +
                            location(),
                        row);
          }
          col.values.push_back(*v);
          break;
        }
        case ColumnKind::binary: {
          auto v = parse_number(raw);
          if (!v || (*v != 0.0 && *v != 1.0)) {
            throw Error(ErrorCode::ParseError,
                        "binary value must be 0 or 1, got '" +
                            std::string(raw) + "'" + location(),
                        row);
          }
          col.values.push_back(*v);
          break;
        }
        case ColumnKind::categorical: {
          const std::string key(raw);
          auto it = level_index.find(key);
          if (it == level_index.end()) {
            if (declared) {
              throw Error(ErrorCode::ParseError,
                          "undeclared level '" + key + "'" + location(), row);
            }
            it = level_index.emplace(key, col.levels.size()).first;
            col.levels.push_back(key);
          }
          col.values.push_back(static_cast<double>(it->second));
          break;
        }
      }
    }
    cols.push_back(std::move(col));
  }
  return Table(std::move(cols));
}

}  // namespace

Table read_table(std::istream& in, const Schema& schema) {
  return build_table(parse_csv(in), schema);
}

Table load_table(const std::filesystem::path& path, const Schema& schema) {
  return build_table(read_records(path), schema);
}

Schema infer_schema(const std::filesystem::path& path) {
  const auto records = read_records(path);
  if (records.size() < 2) {
    throw Error(ErrorCode::EmptyFile, "file has no data rows");
  }
  const auto& header = records.front();
  Schema schema;
  for (std::size_t j = 0; j < header.size(); ++j) {
    bool numeric = true;
    bool binary = true;
    for (std::size_t r = 1; r < records.size() && numeric; ++r) {
      if (j >= records[r].size()) break;
      const std::string_view raw = trim(records[r][j]);
      if (is_missing_token(raw)) continue;
      auto v = parse_number(raw);
      if (!v) {
        numeric = false;
      } else if (*v != 0.0 && *v != 1.0) {
        binary = false;
      }
    }
    ColumnKind kind = !numeric  ? ColumnKind::categorical
                      : binary ? ColumnKind::binary
                               : ColumnKind::continuous;
    schema.push_back({std::string(trim(header[j])), kind, {}});
  }
  return schema;
}

// ---------------------------------------------------------------------------
// Design frame

DesignFrame DesignFrame::subset(std::span<const std::size_t> rows) const {
  DesignFrame out;
  for (std::size_t r : rows) {
    out.stratum_id.push_back(stratum_id.at(r));
    out.cluster_id.push_back(cluster_id.at(r));
    out.weight.push_back(weight.at(r));
    out.phase2_selected.push_back(phase2_selected.at(r));
    out.phase2_respondent.push_back(phase2_respondent.at(r));
  }
  return out;
}

void validate_design(const DesignFrame& f) {
  const std::size_t n = f.weight.size();
  if (f.stratum_id.size() != n || f.cluster_id.size() != n ||
      f.phase2_selected.size() != n || f.phase2_respondent.size() != n) {
    throw Error(ErrorCode::InvalidTable, "design vectors differ in length");
  }
  std::unordered_map<std::int64_t, std::int64_t> cluster_stratum;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::int64_t>(i + 1);
    if (!(f.weight[i] > 0) || !std::isfinite(f.weight[i])) {
      throw Error(ErrorCode::NonPositiveWeight,
                  "weight must be positive at row " + std::to_string(row), row);
    }
    auto [it, inserted] = cluster_stratum.emplace(f.cluster_id[i],
                                                  f.stratum_id[i]);
    if (!inserted && it->second != f.stratum_id[i]) {
      throw Error(ErrorCode::ClusterSpansStrata,
                  "cluster " + std::to_string(f.cluster_id[i]) +
                      " appears in strata " + std::to_string(it->second) +
                      " and " + std::to_string(f.stratum_id[i]),
                  f.cluster_id[i]);
    }
    if (f.phase2_respondent[i] != 0 && f.phase2_respondent[i] != 1) {
      throw Error(ErrorCode::InvalidRole,
                  "phase-II respondent flag must be 0/1", row);
    }
    if (f.phase2_selected[i] != 0 && f.phase2_selected[i] != 1) {
      throw Error(ErrorCode::InvalidRole, "phase-II selection flag must be 0/1",
                  row);
    }
    if (f.phase2_respondent[i] == 1 && f.phase2_selected[i] == 0) {
      throw Error(ErrorCode::RespondentNotSelected,
                  "respondent not selected for phase II at row " +
                      std::to_string(row),
                  row);
    }
  }
}

namespace {

std::vector<std::int64_t> id_column(const Column& col, const char* role) {
  std::vector<std::int64_t> ids;
  ids.reserve(col.size());
  std::vector<std::optional<std::int64_t>> level_ids;
  if (col.kind == ColumnKind::categorical) {
    // Integer-looking labels keep their value; other labels use their code.
    for (std::size_t l = 0; l < col.levels.size(); ++l) {
      std::int64_t v = 0;
      const auto& s = col.levels[l];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      level_ids.push_back(ec == std::errc() && ptr == s.data() + s.size()
                              ? std::optional<std::int64_t>(v)
                              : std::nullopt);
    }
    const bool all_int = std::all_of(level_ids.begin(), level_ids.end(),
                                     [](const auto& o) { return o.has_value(); });
    for (std::size_t i = 0; i < col.size(); ++i) {
      const double v = col.values[i];
      if (is_missing(v)) {
        throw Error(ErrorCode::MissingDesignValue,
                    std::string(role) + " is missing at row " +
                        std::to_string(i + 1),
                    static_cast<std::int64_t>(i + 1));
      }
      const auto code = static_cast<std::size_t>(v);
      ids.push_back(all_int ? *level_ids[code]
                            : static_cast<std::int64_t>(code));
    }
    return ids;
  }
  for (std::size_t i = 0; i < col.size(); ++i) {
    const double v = col.values[i];
    const auto row = static_cast<std::int64_t>(i + 1);
    if (is_missing(v)) {
      throw Error(ErrorCode::MissingDesignValue,
                  std::string(role) + " is missing at row " +
                      std::to_string(row),
                  row);
    }
    if (v != std::floor(v)) {
      throw Error(ErrorCode::InvalidRole,
                  std::string(role) + " column " + col.name +
                      " holds a non-integer value",
                  row);
    }
    ids.push_back(static_cast<std::int64_t>(v));
  }
  return ids;
}

std::vector<int> flag_column(const Column& col, const char* role) {
  std::vector<int> flags;
  flags.reserve(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) {
    const double v = col.values[i];
    const auto row = static_cast<std::int64_t>(i + 1);
    if (is_missing(v)) {
      throw Error(ErrorCode::MissingDesignValue,
                  std::string(role) + " is missing at row " +
                      std::to_string(row),
                  row);
    }
    if (v != 0.0 && v != 1.0) {
      throw Error(ErrorCode::InvalidRole,
                  std::string(role) + " column " + col.name + " must be 0/1",
                  row);
    }
    flags.push_back(static_cast<int>(v));
  }
  return flags;
}

}  // namespace

BoundDesign bind_design(const Table& table, const DesignRoles& roles) {
  std::map<DesignRole, std::string> by_role;
  for (const auto& [name, role] : roles) {
    if (!table.has(name)) {
      throw Error(ErrorCode::InvalidRole, "role column " + name + " not found");
    }
    if (!by_role.emplace(role, name).second) {
      throw Error(ErrorCode::InvalidRole,
                  "role assigned to more than one column: " + name);
    }
  }
  for (DesignRole required :
       {DesignRole::stratum, DesignRole::cluster, DesignRole::weight}) {
    if (!by_role.count(required)) {
      throw Error(ErrorCode::InvalidRole,
                  "stratum, cluster and weight roles are required");
    }
  }

  const Column& weight_col = table.column(by_role[DesignRole::weight]);
  if (weight_col.kind != ColumnKind::continuous) {
    throw Error(ErrorCode::InvalidRole, "weight column must be continuous");
  }
  for (DesignRole r : {DesignRole::stratum, DesignRole::cluster}) {
    const Column& c = table.column(by_role[r]);
    if (c.kind == ColumnKind::binary) continue;  // 0/1 ids are integers
    if (c.kind != ColumnKind::categorical && c.kind != ColumnKind::continuous) {
      throw Error(ErrorCode::InvalidRole, "id column has an invalid kind");
    }
  }

  BoundDesign out;
  DesignFrame& f = out.frame;
  f.stratum_id = id_column(table.column(by_role[DesignRole::stratum]), "stratum");
  f.cluster_id = id_column(table.column(by_role[DesignRole::cluster]), "cluster");
  f.weight.reserve(table.rows());
  for (std::size_t i = 0; i < weight_col.size(); ++i) {
    const double w = weight_col.values[i];
    if (is_missing(w)) {
      throw Error(ErrorCode::MissingDesignValue,
                  "weight is missing at row " + std::to_string(i + 1),
                  static_cast<std::int64_t>(i + 1));
    }
    f.weight.push_back(w);
  }
  const std::size_t n = table.rows();
  if (by_role.count(DesignRole::phase2_selected)) {
    f.phase2_selected = flag_column(
        table.column(by_role[DesignRole::phase2_selected]), "phase2_selected");
  } else {
    f.phase2_selected.assign(n, 1);
  }
  if (by_role.count(DesignRole::phase2_respondent)) {
    f.phase2_respondent =
        flag_column(table.column(by_role[DesignRole::phase2_respondent]),
                    "phase2_respondent");
  } else {
    f.phase2_respondent = f.phase2_selected;
  }
  validate_design(f);

  std::vector<std::string> design_names;
  for (const auto& [role, name] : by_role) design_names.push_back(name);
  if (by_role.count(DesignRole::outcome)) {
    out.outcome = table.column(by_role[DesignRole::outcome]);
  }
  out.covariates = table.drop(design_names);
  for (const auto& col : out.covariates.columns()) {
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (is_missing(col.values[i])) {
        throw Error(ErrorCode::MissingCovariate,
                    "covariate " + col.name + " is missing at row " +
                        std::to_string(i + 1),
                    static_cast<std::int64_t>(i + 1));
      }
    }
  }
  return out;
}

Records table_records(const Table& table) {
  Records rec;
  rec.header = table.names();
  rec.rows.resize(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    auto& row = rec.rows[i];
    row.reserve(table.cols());
    for (const auto& col : table.columns()) {
      const double v = col.values[i];
      if (col.kind == ColumnKind::categorical && !is_missing(v)) {
        row.emplace_back(col.levels[static_cast<std::size_t>(v)]);
      } else {
        row.emplace_back(v);
      }
    }
  }
  return rec;
}

}  // namespace twophase
