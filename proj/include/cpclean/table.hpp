#pragma once

// Raw tabular data: schema sidecar, CSV ingestion and serialization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpclean/error.hpp"

namespace cpclean {

enum class ColumnKind { numeric, categorical };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;

  bool operator==(const ColumnSchema&) const = default;
};

struct TableSchema {
  std::vector<ColumnSchema> columns;
  std::string label;
  std::string missing_marker;

  bool operator==(const TableSchema&) const = default;

  std::size_t index_of(std::string_view name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c].name == name) return c;
    fail(ErrorKind::invalid_argument, "unknown column '" + std::string(name) + "'");
  }
  std::size_t label_index() const { return index_of(label); }

  // Column indices of every non-label column, in schema order.
  std::vector<std::size_t> feature_indices() const {
    std::vector<std::size_t> out;
    const auto lab = label_index();
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (c != lab) out.push_back(c);
    return out;
  }
};

// nullopt marks a missing cell.
using Cell = std::optional<std::string>;

struct RawTable {
  TableSchema schema;
  std::vector<std::vector<Cell>> rows;

  bool operator==(const RawTable&) const = default;

  std::size_t num_rows() const { return rows.size(); }
  std::size_t num_features() const { return schema.columns.size() - 1; }

  bool row_has_missing(std::size_t r) const {
    return std::any_of(rows[r].begin(), rows[r].end(), [](const Cell& c) { return !c; });
  }
  std::size_t count_dirty_rows() const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) n += row_has_missing(r) ? 1 : 0;
    return n;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// One CSV record; handles quoted fields with embedded commas, quotes and newlines.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      break;
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline std::optional<double> parse_real(std::string_view text) {
  text = detail::trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Shortest representation that parses back to the same double.
inline std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

inline ColumnKind parse_column_kind(std::string_view s) {
  if (s == "numeric") return ColumnKind::numeric;
  if (s == "categorical") return ColumnKind::categorical;
  fail(ErrorKind::parse, "column kind must be 'numeric' or 'categorical', got '" + std::string(s) + "'");
}

inline std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

inline TableSchema schema_from_json(const nlohmann::json& j) {
  TableSchema schema;
  if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array())
    fail(ErrorKind::parse, "schema needs a 'columns' array", "columns");
  for (std::size_t c = 0; c < j["columns"].size(); ++c) {
    const auto& col = j["columns"][c];
    const std::string path = "columns[" + std::to_string(c) + "]";
    if (!col.contains("name") || !col["name"].is_string()) fail(ErrorKind::parse, "column needs a name", path + ".name");
    ColumnSchema cs;
    cs.name = col["name"].get<std::string>();
    cs.kind = parse_column_kind(col.value("kind", std::string("numeric")));
    schema.columns.push_back(std::move(cs));
  }
  if (!j.contains("label") || !j["label"].is_string()) fail(ErrorKind::parse, "schema needs a 'label' column name", "label");
  schema.label = j["label"].get<std::string>();
  schema.missing_marker = j.value("missing_marker", std::string());
  if (schema.columns.size() < 2) fail(ErrorKind::parse, "schema needs a label and at least one feature", "columns");
  (void)schema.label_index();
  return schema;
}

inline nlohmann::json schema_to_json(const TableSchema& schema) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : schema.columns) cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  return {{"columns", cols}, {"label", schema.label}, {"missing_marker", schema.missing_marker}};
}

inline TableSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "schema '" + path + "': " + e.what());
  }
  return schema_from_json(j);
}

// Checks the RawTable invariants; throws naming the first offending cell.
inline void validate(const RawTable& table) {
  const auto width = table.schema.columns.size();
  const auto lab = table.schema.label_index();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != width)
      fail(ErrorKind::parse,
           "row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) + " cells, expected " +
               std::to_string(width),
           "row " + std::to_string(r + 1));
    if (!row[lab]) fail(ErrorKind::parse, "label missing in row " + std::to_string(r + 1), "row " + std::to_string(r + 1));
    for (std::size_t c = 0; c < width; ++c) {
      if (c == lab || !row[c] || table.schema.columns[c].kind != ColumnKind::numeric) continue;
      if (!parse_real(*row[c]))
        fail(ErrorKind::parse,
             "row " + std::to_string(r + 1) + " column '" + table.schema.columns[c].name + "': cannot parse '" +
                 *row[c] + "' as a number",
             "row " + std::to_string(r + 1) + "." + table.schema.columns[c].name);
    }
  }
}

inline RawTable read_csv(std::istream& in, const TableSchema& schema) {
  RawTable table;
  table.schema = schema;
  std::vector<std::string> fields;
  if (!detail::read_csv_record(in, fields)) fail(ErrorKind::parse, "empty CSV: header row expected");
  if (fields.size() != schema.columns.size())
    fail(ErrorKind::parse, "header has " + std::to_string(fields.size()) + " columns, schema has " +
                               std::to_string(schema.columns.size()));
  for (std::size_t c = 0; c < fields.size(); ++c)
    if (detail::trim(fields[c]) != schema.columns[c].name)
      fail(ErrorKind::parse, "header column " + std::to_string(c + 1) + " is '" + fields[c] + "', schema expects '" +
                                 schema.columns[c].name + "'");
  while (detail::read_csv_record(in, fields)) {
    if (fields.size() == 1 && detail::trim(fields[0]).empty() && schema.columns.size() > 1) continue;
    std::vector<Cell> row;
    row.reserve(fields.size());
    for (auto& f : fields) {
      if (f == schema.missing_marker) row.emplace_back(std::nullopt);
      else row.emplace_back(std::move(f));
    }
    table.rows.push_back(std::move(row));
  }
  validate(table);
  return table;
}

inline RawTable load_csv(const std::string& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open CSV file '" + path + "'");
  return read_csv(in, schema);
}

inline void write_csv(std::ostream& out, const RawTable& table) {
  for (std::size_t c = 0; c < table.schema.columns.size(); ++c)
    out << (c ? "," : "") << detail::csv_escape(table.schema.columns[c].name);
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << (c ? "," : "") << detail::csv_escape(row[c] ? *row[c] : table.schema.missing_marker);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const RawTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write CSV file '" + path + "'");
  write_csv(out, table);
}

}  // namespace cpclean
