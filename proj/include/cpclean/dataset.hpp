#pragma once

// Incomplete datasets: every training row carries a finite candidate set of
// feature vectors and a known label. One possible world picks exactly one
// candidate per row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "cpclean/error.hpp"

namespace cpclean {

using FeatureVector = std::vector<double>;
using Label = std::size_t;
using BigCount = boost::multiprecision::cpp_int;

struct CandidateSet {
  std::vector<FeatureVector> candidates;
  Label label = 0;

  std::size_t size() const { return candidates.size(); }
  bool is_clean() const { return candidates.size() == 1; }

  bool operator==(const CandidateSet&) const = default;
};

struct IncompleteDataset {
  std::vector<CandidateSet> rows;
  std::size_t num_labels = 2;
  std::size_t dimension = 0;

  std::size_t size() const { return rows.size(); }

  BigCount world_count() const {
    BigCount total = 1;
    for (const auto& r : rows) total *= r.size();
    return total;
  }

  std::vector<std::size_t> dirty_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (!rows[i].is_clean()) out.push_back(i);
    return out;
  }

  std::vector<Label> labels() const {
    std::vector<Label> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.label);
    return out;
  }

  // The complete dataset obtained by taking candidate `choice[i]` in row i.
  std::vector<FeatureVector> world(const std::vector<std::size_t>& choice) const {
    std::vector<FeatureVector> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(rows[i].candidates.at(choice.at(i)));
    return out;
  }

  bool operator==(const IncompleteDataset&) const = default;
};

inline void validate(const IncompleteDataset& data) {
  if (data.rows.empty()) fail(ErrorKind::invalid_argument, "incomplete dataset has no rows", "rows");
  if (data.num_labels == 0) fail(ErrorKind::invalid_argument, "num_labels must be positive", "num_labels");
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    const auto& row = data.rows[i];
    const std::string path = "rows[" + std::to_string(i) + "]";
    if (row.candidates.empty()) fail(ErrorKind::invalid_argument, "candidate set is empty", path + ".candidates");
    if (row.label >= data.num_labels)
      fail(ErrorKind::invalid_argument, "label " + std::to_string(row.label) + " out of range", path + ".label");
    for (std::size_t j = 0; j < row.candidates.size(); ++j) {
      const auto& x = row.candidates[j];
      const std::string cpath = path + ".candidates[" + std::to_string(j) + "]";
      if (x.size() != data.dimension)
        fail(ErrorKind::invalid_argument,
             "candidate has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(data.dimension),
             cpath);
      for (double v : x)
        if (!std::isfinite(v)) fail(ErrorKind::invalid_argument, "candidate entry is not finite", cpath);
    }
  }
}

// Wraps a complete labeled dataset as an incomplete one with singleton rows.
inline IncompleteDataset from_complete(const std::vector<FeatureVector>& xs, const std::vector<Label>& ys,
                                       std::size_t num_labels) {
  require(xs.size() == ys.size(), "features and labels differ in length");
  IncompleteDataset d;
  d.num_labels = num_labels;
  d.dimension = xs.empty() ? 0 : xs.front().size();
  for (std::size_t i = 0; i < xs.size(); ++i) d.rows.push_back({{xs[i]}, ys[i]});
  return d;
}

// ---- JSON interchange -------------------------------------------------------
//
// {"num_labels": 2, "dimension": 3,
//  "rows": [{"label": 0, "candidates": [[1.0, 2.0, 3.0], ...]}, ...]}
//
// num_labels and dimension are optional on input and inferred when absent.

inline nlohmann::json to_json(const IncompleteDataset& data) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : data.rows) rows.push_back({{"label", r.label}, {"candidates", r.candidates}});
  return {{"num_labels", data.num_labels}, {"dimension", data.dimension}, {"rows", std::move(rows)}};
}

inline FeatureVector feature_vector_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) fail(ErrorKind::parse, "feature vector must be an array of numbers", path);
  FeatureVector x;
  x.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) fail(ErrorKind::parse, "feature value must be a number", path + "[" + std::to_string(k) + "]");
    x.push_back(j[k].get<double>());
  }
  return x;
}

inline IncompleteDataset dataset_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rows") || !j["rows"].is_array())
    fail(ErrorKind::parse, "dataset needs a 'rows' array", "rows");
  IncompleteDataset data;
  std::size_t max_label = 0;
  const auto& rows = j["rows"];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string path = "rows[" + std::to_string(i) + "]";
    if (!r.is_object()) fail(ErrorKind::parse, "row must be an object", path);
    if (!r.contains("label") || !r["label"].is_number_integer() || r["label"].get<long long>() < 0)
      fail(ErrorKind::parse, "row needs a nonnegative integer label", path + ".label");
    if (!r.contains("candidates") || !r["candidates"].is_array())
      fail(ErrorKind::parse, "row needs a 'candidates' array", path + ".candidates");
    CandidateSet cs;
    cs.label = r["label"].get<Label>();
    max_label = std::max(max_label, cs.label);
    for (std::size_t c = 0; c < r["candidates"].size(); ++c)
      cs.candidates.push_back(
          feature_vector_from_json(r["candidates"][c], path + ".candidates[" + std::to_string(c) + "]"));
    data.rows.push_back(std::move(cs));
  }
  if (j.contains("num_labels")) {
    if (!j["num_labels"].is_number_integer()) fail(ErrorKind::parse, "num_labels must be an integer", "num_labels");
    data.num_labels = j["num_labels"].get<std::size_t>();
  } else {
    data.num_labels = std::max<std::size_t>(2, max_label + 1);
  }
  if (j.contains("dimension")) {
    if (!j["dimension"].is_number_integer()) fail(ErrorKind::parse, "dimension must be an integer", "dimension");
    data.dimension = j["dimension"].get<std::size_t>();
  } else if (!data.rows.empty() && !data.rows.front().candidates.empty()) {
    data.dimension = data.rows.front().candidates.front().size();
  }
  try {
    validate(data);
  } catch (const Error& e) {
    fail(ErrorKind::parse, e.what(), e.field());
  }
  return data;
}

// Test/validation points: either a single vector or an array of vectors.
inline std::vector<FeatureVector> points_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorKind::parse, "points must be an array");
  if (!j.empty() && j.front().is_number()) return {feature_vector_from_json(j, "points")};
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(feature_vector_from_json(j[i], "points[" + std::to_string(i) + "]"));
  return out;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "'" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace cpclean
