#pragma once

// Numeric encoding of raw cells. Numeric columns parse as reals; categorical
// columns map to ordinal codes by descending frequency, then lexical order,
// with one extra "other category" code after the known ones.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "cpclean/dataset.hpp"
#include "cpclean/error.hpp"
#include "cpclean/knn.hpp"
#include "cpclean/table.hpp"

namespace cpclean {

inline constexpr const char* kOtherCategory = "__other__";

struct ColumnEncoding {
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;  // code = position

  double dummy_code() const { return static_cast<double>(categories.size()); }

  double encode(const std::string& text) const {
    if (kind == ColumnKind::numeric) {
      auto v = parse_real(text);
      if (!v) fail(ErrorKind::parse, "cannot parse '" + text + "' as a number");
      return *v;
    }
    auto it = std::find(categories.begin(), categories.end(), text);
    return it == categories.end() ? dummy_code() : static_cast<double>(it - categories.begin());
  }

  std::string decode(double value) const {
    if (kind == ColumnKind::numeric) return format_real(value);
    const auto code = static_cast<std::size_t>(value);
    return code < categories.size() ? categories[code] : std::string(kOtherCategory);
  }
};

// Categories of one column ordered by descending frequency, ties lexical.
inline std::vector<std::string> categories_by_frequency(const RawTable& table, std::size_t column) {
  std::map<std::string, std::size_t> freq;
  for (const auto& row : table.rows)
    if (row[column]) ++freq[*row[column]];
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (auto& [name, count] : items) out.push_back(name);
  return out;
}

class Encoder {
 public:
  static Encoder fit(const RawTable& table) {
    Encoder enc;
    enc.schema_ = table.schema;
    enc.feature_columns_ = table.schema.feature_indices();
    for (std::size_t c : enc.feature_columns_) {
      ColumnEncoding ce;
      ce.kind = table.schema.columns[c].kind;
      if (ce.kind == ColumnKind::categorical) ce.categories = categories_by_frequency(table, c);
      enc.features_.push_back(std::move(ce));
    }
    const auto lab = table.schema.label_index();
    std::map<std::string, int> seen;
    for (const auto& row : table.rows)
      if (row[lab]) seen.emplace(*row[lab], 0);
    for (auto& [name, unused] : seen) enc.label_values_.push_back(name);
    return enc;
  }

  const TableSchema& schema() const { return schema_; }
  const std::vector<std::size_t>& feature_columns() const { return feature_columns_; }
  const ColumnEncoding& feature(std::size_t f) const { return features_.at(f); }
  std::size_t dimension() const { return features_.size(); }
  std::size_t num_labels() const { return std::max<std::size_t>(2, label_values_.size()); }
  const std::vector<std::string>& label_values() const { return label_values_; }

  Label encode_label(const std::string& text) const {
    auto it = std::find(label_values_.begin(), label_values_.end(), text);
    if (it == label_values_.end()) fail(ErrorKind::invalid_argument, "unknown label '" + text + "'");
    return static_cast<Label>(it - label_values_.begin());
  }

  // Encodes one feature cell; `f` indexes features, not table columns.
  double encode_feature(std::size_t f, const Cell& cell) const {
    if (!cell) fail(ErrorKind::invalid_argument, "cannot encode a missing cell");
    return features_.at(f).encode(*cell);
  }

  FeatureVector encode_row(const std::vector<Cell>& row) const {
    FeatureVector x;
    x.reserve(features_.size());
    for (std::size_t f = 0; f < features_.size(); ++f) x.push_back(encode_feature(f, row.at(feature_columns_[f])));
    return x;
  }

  Label row_label(const std::vector<Cell>& row) const {
    const auto& cell = row.at(schema_.label_index());
    if (!cell) fail(ErrorKind::invalid_argument, "label missing");
    return encode_label(*cell);
  }

  // Complete table to labeled points; throws on any missing feature.
  LabeledData encode_complete(const RawTable& table) const {
    LabeledData out;
    out.num_labels = num_labels();
    for (const auto& row : table.rows) {
      out.features.push_back(encode_row(row));
      out.labels.push_back(row_label(row));
    }
    return out;
  }

 private:
  TableSchema schema_;
  std::vector<std::size_t> feature_columns_;
  std::vector<ColumnEncoding> features_;
  std::vector<std::string> label_values_;
};

}  // namespace cpclean
