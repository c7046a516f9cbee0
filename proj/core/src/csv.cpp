#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "twophase/dataset.hpp"
#include "twophase/error.hpp"

namespace twophase {

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool any = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    // Skip blank lines.
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };

  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') in.get(c);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field_started = true;
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError, "unterminated quoted field");
  }
  if (any && (!field.empty() || !record.empty() || field_started)) {
    end_record();
  }
  return records;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string cell_text(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return quote_csv(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else {
          return std::to_string(v);
        }
      },
      cell);
}

}  // namespace

std::optional<OutputFormat> parse_output_format(std::string_view text) {
  if (text == "csv") return OutputFormat::csv;
  if (text == "json") return OutputFormat::json;
  return std::nullopt;
}

std::string format_records(const Records& records, OutputFormat format) {
  if (records.rows.empty()) {
    throw Error(ErrorCode::EmptyRecords, "no records to write");
  }
  for (const auto& row : records.rows) {
    if (row.size() != records.header.size()) {
      throw Error(ErrorCode::InvalidTable,
                  "record width does not match the header");
    }
  }

  if (format == OutputFormat::csv) {
    std::string out;
    for (std::size_t j = 0; j < records.header.size(); ++j) {
      if (j) out.push_back(',');
      out += quote_csv(records.header[j]);
    }
    out.push_back('\n');
    for (const auto& row : records.rows) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) out.push_back(',');
        out += cell_text(row[j]);
      }
      out.push_back('\n');
    }
    return out;
  }

  nlohmann::ordered_json array = nlohmann::ordered_json::array();
  for (const auto& row : records.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              if (std::isfinite(v)) {
                obj[records.header[j]] = v;
              } else {
                obj[records.header[j]] = nullptr;
              }
            } else {
              obj[records.header[j]] = v;
            }
          },
          row[j]);
    }
    array.push_back(std::move(obj));
  }
  return array.dump(2) + "\n";
}

void write_results(const Records& records, const std::filesystem::path& path,
                   OutputFormat format) {
  const std::string text = format_records(records, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  out << text;
  if (!out) {
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
}

}  // namespace twophase
