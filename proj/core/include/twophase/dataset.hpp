#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace twophase {

enum class ColumnKind { continuous, binary, categorical };

std::string_view column_kind_name(ColumnKind kind);

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

/// One typed column. Categorical values hold the index into `levels`.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<double> values;
  std::vector<std::string> levels;

  std::size_t size() const { return values.size(); }
  std::size_t missing_count() const;
};

/// Column-typed unit-level data. Immutable once built; every constructor
/// path validates the invariants (equal lengths, unique names, binary values
/// in {0,1}, categorical codes within the declared levels).
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<Column> columns);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  bool empty() const { return columns_.empty(); }

  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(std::size_t index) const { return columns_.at(index); }
  const Column& column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  bool has(std::string_view name) const { return find(name).has_value(); }
  std::vector<std::string> names() const;

  double at(std::size_t row, std::size_t col) const {
    return columns_[col].values[row];
  }

  Table select(std::span<const std::string> names) const;
  Table drop(std::span<const std::string> names) const;
  Table subset_rows(std::span<const std::size_t> rows) const;
  Table with_column(Column column) const;

 private:
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  /// Optional declared level set for categorical columns; when empty the
  /// levels are collected in order of first appearance.
  std::vector<std::string> levels;
};

using Schema = std::vector<ColumnSpec>;

/// Reads an RFC-4180 CSV file with a mandatory header. Empty fields and the
/// literal token "NA" become the missing marker.
Table load_table(const std::filesystem::path& path, const Schema& schema);
Table read_table(std::istream& in, const Schema& schema);

/// Guesses a schema from the file contents: numeric columns whose observed
/// values are all 0/1 become binary, other numeric columns continuous, and
/// anything non-numeric categorical.
Schema infer_schema(const std::filesystem::path& path);

/// Parses RFC-4180 records (quoted fields, doubled quotes, embedded
/// newlines). Exposed for the CLI and tests.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Survey design frame

struct DesignFrame {
  std::vector<std::int64_t> stratum_id;
  std::vector<std::int64_t> cluster_id;
  std::vector<double> weight;
  std::vector<int> phase2_selected;
  std::vector<int> phase2_respondent;

  std::size_t size() const { return weight.size(); }
  DesignFrame subset(std::span<const std::size_t> rows) const;
};

/// Throws the documented error for the first violated invariant.
void validate_design(const DesignFrame& frame);

enum class DesignRole {
  stratum,
  cluster,
  weight,
  phase2_selected,
  phase2_respondent,
  outcome,
};

using DesignRoles = std::map<std::string, DesignRole>;

struct BoundDesign {
  DesignFrame frame;
  Table covariates;
  std::optional<Column> outcome;
};

/// Splits design columns from covariates. The phase-II selection and
/// response roles default to all ones when absent; when only the selection
/// role is given, respondents are the selected units.
BoundDesign bind_design(const Table& table, const DesignRoles& roles);

// ---------------------------------------------------------------------------
// Result records

using Cell = std::variant<std::string, double, std::int64_t>;

struct Records {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

enum class OutputFormat { csv, json };

std::optional<OutputFormat> parse_output_format(std::string_view text);

/// Writes records with a fixed column order. Reals use the shortest
/// representation that round-trips exactly.
void write_results(const Records& records, const std::filesystem::path& path,
                   OutputFormat format);
std::string format_records(const Records& records, OutputFormat format);

/// Converts a table to records, rendering categorical codes as labels.
Records table_records(const Table& table);

}  // namespace twophase
